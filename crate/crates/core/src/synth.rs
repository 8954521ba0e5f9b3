//! Synthetic attention corpora with planted ground truth.
//!
//! Each sample multiplies a content draw by a planted recency-bias curve:
//!
//! ```text
//! content_i = exp(z_i) * (salience_gain if i is planted else 1)
//! raw_i     = content_i * (exp(bias_b * i) + bias_c) * (1 + eps_i)
//! trace     = raw / sum(raw)
//! ```
//!
//! with `z_i` standard normal and `eps_i` uniform in `[-noise_rel, noise_rel]`.
//! Sample `m` draws from stream `m` of [`SynthRng`] in the order: `n`
//! normals for the content, `salient_k` partial Fisher-Yates picks for the
//! planted set, `n` uniforms for the noise. Samples are therefore
//! independent of how a corpus is partitioned across workers.

use crate::attention::{
    attention_with_offsets, average_heads, renormalized_scores, AttentionTrace, QueryKeyBlock,
};
use crate::error::{Error, Result};
use crate::rng::SynthRng;

/// Layer index written into synthetic traces.
pub const SYNTH_LAYER: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub samples: usize,
    /// Planted exponential rate per token index.
    pub bias_b: f64,
    /// Planted additive offset of the bias curve.
    pub bias_c: f64,
    pub salient_k: usize,
    pub salience_gain: f64,
    pub noise_rel: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Unbiased, noiseless corpus without planted tokens.
    pub fn new(n: usize, samples: usize, seed: u64) -> Self {
        Self {
            n,
            samples,
            bias_b: 0.0,
            bias_c: 0.0,
            salient_k: 0,
            salience_gain: 1.0,
            noise_rel: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 {
            return bad("synthetic corpus needs n >= 1".into());
        }
        if self.samples == 0 {
            return bad("synthetic corpus needs at least one sample".into());
        }
        if self.salient_k > self.n {
            return bad(format!(
                "salient_k = {} exceeds n = {}",
                self.salient_k, self.n
            ));
        }
        if !(self.salience_gain >= 1.0) || !self.salience_gain.is_finite() {
            return bad(format!(
                "salience_gain must be >= 1, got {}",
                self.salience_gain
            ));
        }
        if !(self.noise_rel >= 0.0) || self.noise_rel >= 1.0 {
            return bad(format!(
                "noise_rel must lie in [0, 1), got {}",
                self.noise_rel
            ));
        }
        if !self.bias_b.is_finite() || !self.bias_c.is_finite() {
            return bad("planted bias parameters must be finite".into());
        }
        let curve = self.planted_bias();
        if let Some((index, &value)) = curve
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::NonPositiveBias { index, value });
        }
        Ok(())
    }

    /// `exp(bias_b * i) + bias_c` for every index.
    pub fn planted_bias(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.bias_b * i as f64).exp() + self.bias_c)
            .collect()
    }

    /// Square grid when `n` is a perfect square.
    pub fn grid(&self) -> Option<(usize, usize)> {
        let side = (self.n as f64).sqrt().round() as usize;
        (side * side == self.n).then_some((side, side))
    }

    /// Generates sample `index` directly.
    pub fn sample(&self, index: usize) -> Result<SynthSample> {
        self.validate()?;
        Ok(self.draw(index, &self.planted_bias()))
    }

    fn draw(&self, index: usize, bias: &[f64]) -> SynthSample {
        let n = self.n;
        let mut rng = SynthRng::new(self.seed, index as u64);

        let mut content: Vec<f64> = (0..n).map(|_| rng.normal().exp()).collect();

        let mut pool: Vec<usize> = (0..n).collect();
        for slot in 0..self.salient_k {
            let pick = slot + rng.below(n - slot);
            pool.swap(slot, pick);
        }
        let mut planted = pool[..self.salient_k].to_vec();
        planted.sort_unstable();
        for &i in &planted {
            content[i] *= self.salience_gain;
        }

        let raw: Vec<f64> = content
            .iter()
            .zip(bias)
            .map(|(c, p)| {
                let eps = self.noise_rel * (2.0 * rng.uniform() - 1.0);
                c * p * (1.0 + eps)
            })
            .collect();
        let scores = renormalized_scores(&raw).expect("synthetic raw scores are positive");
        let trace = AttentionTrace::new(sample_id(index), scores, self.grid(), SYNTH_LAYER)
            .expect("synthetic trace is normalized");
        SynthSample {
            trace,
            planted_salient: planted,
            content_scores: content,
        }
    }
}

pub fn sample_id(index: usize) -> String {
    format!("synth-{index:06}")
}

/// Planted rate whose bias factor at the last index is `ratio` times the
/// factor at index 0 (for `bias_c = 0`).
pub fn rate_for_end_ratio(n: usize, ratio: f64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ratio.ln() / (n - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub trace: AttentionTrace,
    /// Ascending.
    pub planted_salient: Vec<usize>,
    /// Content before the bias and noise were applied.
    pub content_scores: Vec<f64>,
}

/// Lazily generated corpus, in sample order.
#[derive(Debug, Clone)]
pub struct Corpus {
    spec: SynthSpec,
    bias: Vec<f64>,
    next: usize,
}

impl Iterator for Corpus {
    type Item = SynthSample;

    fn next(&mut self) -> Option<SynthSample> {
        if self.next >= self.spec.samples {
            return None;
        }
        let sample = self.spec.draw(self.next, &self.bias);
        self.next += 1;
        Some(sample)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.spec.samples - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Corpus {}

pub fn generate_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    Ok(Corpus {
        bias: spec.planted_bias(),
        spec: spec.clone(),
        next: 0,
    })
}

/// Per-head query/key blocks of a random attention layer: for each head,
/// `d` normals for the query then `n * d` normals for the keys (row-major),
/// all from stream 0 of `seed`.
pub fn toy_blocks(n: usize, d: usize, heads: usize, seed: u64) -> Result<Vec<QueryKeyBlock>> {
    if n == 0 || d == 0 || heads == 0 {
        return Err(Error::InvalidParameter(format!(
            "toy attention needs n, d, heads >= 1 (got {n}, {d}, {heads})"
        )));
    }
    let mut rng = SynthRng::new(seed, 0);
    (0..heads)
        .map(|_| {
            let query = (0..d).map(|_| rng.normal()).collect();
            let keys = (0..n * d).map(|_| rng.normal()).collect();
            QueryKeyBlock::new(query, keys)
        })
        .collect()
}

/// Head-averaged softmax attention of a random layer, with `pos_slope * i`
/// added to logit `i` in every head.
pub fn toy_attention_trace(
    n: usize,
    d: usize,
    heads: usize,
    pos_slope: f64,
    seed: u64,
) -> Result<AttentionTrace> {
    if !pos_slope.is_finite() {
        return Err(Error::InvalidParameter("pos_slope must be finite".into()));
    }
    let offsets: Vec<f64> = (0..n).map(|i| pos_slope * i as f64).collect();
    let per_head = toy_blocks(n, d, heads, seed)?
        .iter()
        .map(|block| attention_with_offsets(block, Some(&offsets)))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_heads(&per_head)?.with_sample_id(format!("toy-{seed}")))
}
