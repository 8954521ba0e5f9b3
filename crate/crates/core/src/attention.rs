//! Last-text-token attention over visual tokens.
//!
//! An [`AttentionTrace`] is the softmax distribution of the final text token's
//! query against the keys of the `n` visual tokens of one decoder layer,
//! normalized over the visual tokens only and averaged across heads.

use crate::error::{Error, Result};

/// Tolerance on the unit-sum invariant of a trace.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// One sample's normalized text-to-visual attention distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    sample_id: String,
    grid: Option<(usize, usize)>,
    layer: u32,
    scores: Vec<f64>,
}

impl AttentionTrace {
    /// Builds a trace, checking nonnegativity, unit sum and grid shape.
    pub fn new(
        sample_id: impl Into<String>,
        scores: Vec<f64>,
        grid: Option<(usize, usize)>,
        layer: u32,
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidParameter(
                "attention trace needs at least one token".into(),
            ));
        }
        for (index, &value) in scores.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    what: "attention scores",
                    index,
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeScore { index, value });
            }
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        if let Some((rows, cols)) = grid {
            if rows * cols != scores.len() {
                return Err(Error::GridMismatch {
                    rows,
                    cols,
                    n: scores.len(),
                });
            }
        }
        Ok(Self {
            sample_id: sample_id.into(),
            grid,
            layer,
            scores,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// Row-major `(rows, cols)` layout of the tokens, when known.
    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn into_scores(self) -> Vec<f64> {
        self.scores
    }

    pub fn with_sample_id(mut self, sample_id: impl Into<String>) -> Self {
        self.sample_id = sample_id.into();
        self
    }

    pub fn with_grid(mut self, grid: Option<(usize, usize)>) -> Result<Self> {
        if let Some((rows, cols)) = grid {
            if rows * cols != self.n() {
                return Err(Error::GridMismatch {
                    rows,
                    cols,
                    n: self.n(),
                });
            }
        }
        self.grid = grid;
        Ok(self)
    }

    pub fn with_layer(mut self, layer: u32) -> Self {
        self.layer = layer;
        self
    }
}

/// Query of the last text token and keys of the visual tokens for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryKeyBlock {
    d: usize,
    query: Vec<f64>,
    /// Row-major `n x d`.
    keys: Vec<f64>,
}

impl QueryKeyBlock {
    /// `keys` is row-major with one row of length `query.len()` per visual token.
    pub fn new(query: Vec<f64>, keys: Vec<f64>) -> Result<Self> {
        let d = query.len();
        if d == 0 {
            return Err(Error::InvalidParameter(
                "head dimension must be >= 1".into(),
            ));
        }
        if keys.is_empty() || !keys.len().is_multiple_of(d) {
            return Err(Error::SizeMismatch {
                context: "key matrix (must be n x d with n >= 1)".into(),
                expected: d * (keys.len() / d).max(1),
                got: keys.len(),
            });
        }
        if let Some(index) = query.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "query",
                index,
            });
        }
        if let Some(index) = keys.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "keys",
                index,
            });
        }
        Ok(Self { d, query, keys })
    }

    pub fn from_rows(query: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = query.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::SizeMismatch {
                context: "key row".into(),
                expected: d,
                got: bad.len(),
            });
        }
        Self::new(query, rows.concat())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.keys.len() / self.d
    }

    pub fn query(&self) -> &[f64] {
        &self.query
    }

    pub fn key(&self, i: usize) -> &[f64] {
        &self.keys[i * self.d..(i + 1) * self.d]
    }

    /// Scaled dot products `q . k_i / sqrt(d)`.
    pub fn logits(&self) -> Vec<f64> {
        let scale = (self.d as f64).sqrt().recip();
        self.keys
            .chunks_exact(self.d)
            .map(|k| k.iter().zip(&self.query).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect()
    }
}

/// Max-subtracted softmax. Input must be finite and nonempty.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Softmax attention of the last text token over the block's visual tokens.
pub fn last_token_attention(block: &QueryKeyBlock) -> Result<AttentionTrace> {
    attention_with_offsets(block, None)
}

/// Like [`last_token_attention`], with an additive term per logit.
pub fn attention_with_offsets(
    block: &QueryKeyBlock,
    offsets: Option<&[f64]>,
) -> Result<AttentionTrace> {
    let mut logits = block.logits();
    if let Some(offsets) = offsets {
        if offsets.len() != logits.len() {
            return Err(Error::SizeMismatch {
                context: "logit offsets".into(),
                expected: logits.len(),
                got: offsets.len(),
            });
        }
        for (index, (l, o)) in logits.iter_mut().zip(offsets).enumerate() {
            *l += o;
            if !l.is_finite() {
                return Err(Error::NonFinite {
                    what: "logits",
                    index,
                });
            }
        }
    }
    AttentionTrace::new("", softmax(&logits), None, 0)
}

/// Elementwise mean of per-head traces. Metadata is taken from the first head.
pub fn average_heads(heads: &[AttentionTrace]) -> Result<AttentionTrace> {
    let first = heads
        .first()
        .ok_or_else(|| Error::InvalidParameter("average_heads needs at least one head".into()))?;
    let n = first.n();
    if let Some(bad) = heads.iter().find(|h| h.n() != n) {
        return Err(Error::SizeMismatch {
            context: "head traces".into(),
            expected: n,
            got: bad.n(),
        });
    }
    let h = heads.len() as f64;
    let scores = (0..n)
        .map(|i| heads.iter().map(|t| t.scores[i]).sum::<f64>() / h)
        .collect();
    AttentionTrace::new(first.sample_id.clone(), scores, first.grid, first.layer)
}

/// Divides raw nonnegative scores by their sum.
///
/// Used for exporters whose softmax spans text and visual tokens: the visual
/// slice is rescaled so that it is a distribution over visual tokens alone.
pub fn renormalize(raw: &[f64]) -> Result<AttentionTrace> {
    AttentionTrace::new("", renormalized_scores(raw)?, None, 0)
}

pub(crate) fn renormalized_scores(raw: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "raw scores",
                index,
            });
        }
        if value < 0.0 {
            return Err(Error::NegativeScore { index, value });
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(raw.iter().map(|v| v / total).collect())
}
