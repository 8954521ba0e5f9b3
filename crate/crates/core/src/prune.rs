//! Token selection by raw attention (FastV) or position-reweighted attention
//! (PoRe, `A_i / P_i`).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionTrace;
use crate::bias::BiasProfile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PruneMethod {
    #[serde(rename = "fastv")]
    FastV,
    #[serde(rename = "pore")]
    PoRe,
}

impl fmt::Display for PruneMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PruneMethod::FastV => "fastv",
            PruneMethod::PoRe => "pore",
        })
    }
}

impl std::str::FromStr for PruneMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fastv" => Ok(PruneMethod::FastV),
            "pore" => Ok(PruneMethod::PoRe),
            other => Err(Error::InvalidParameter(format!(
                "unknown pruning method '{other}' (expected fastv or pore)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    /// Raw attention.
    FastV,
    /// Attention divided by the recency-bias profile.
    PoRe(BiasProfile),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    ratio: f64,
    criterion: Criterion,
}

impl PruneConfig {
    pub fn new(ratio: f64, criterion: Criterion) -> Result<Self> {
        check_ratio(ratio)?;
        Ok(Self { ratio, criterion })
    }

    pub fn fastv(ratio: f64) -> Result<Self> {
        Self::new(ratio, Criterion::FastV)
    }

    pub fn pore(ratio: f64, bias: BiasProfile) -> Result<Self> {
        Self::new(ratio, Criterion::PoRe(bias))
    }

    /// Fraction of visual tokens discarded.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn criterion(&self) -> &Criterion {
        &self.criterion
    }

    pub fn method(&self) -> PruneMethod {
        match self.criterion {
            Criterion::FastV => PruneMethod::FastV,
            Criterion::PoRe(_) => PruneMethod::PoRe,
        }
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!(
            "pruning ratio must lie in [0, 1), got {ratio}"
        )));
    }
    Ok(())
}

/// Retained indices of one trace and the scores that ranked them.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneDecision {
    pub sample_id: String,
    pub method: PruneMethod,
    pub ratio: f64,
    /// Strictly increasing.
    pub kept: Vec<usize>,
    /// `A` for FastV, `A / P` for PoRe.
    pub scores_used: Vec<f64>,
}

impl PruneDecision {
    pub fn retain_k(&self) -> usize {
        self.kept.len()
    }

    pub fn n(&self) -> usize {
        self.scores_used.len()
    }
}

/// Number of tokens kept when a fraction `ratio` of `n` is pruned:
/// `n * (1 - ratio)` rounded half up, clamped to `[1, n]`.
pub fn retained_count(n: usize, ratio: f64) -> Result<usize> {
    check_ratio(ratio)?;
    if n == 0 {
        return Err(Error::InvalidParameter("token count must be >= 1".into()));
    }
    let k = (n as f64 * (1.0 - ratio) + 0.5).floor() as usize;
    Ok(k.clamp(1, n))
}

/// `A_i / P_i`, not renormalized.
pub fn reweight(trace: &AttentionTrace, bias: &BiasProfile) -> Result<Vec<f64>> {
    if bias.n() != trace.n() {
        return Err(Error::SizeMismatch {
            context: format!("bias profile for sample '{}'", trace.sample_id()),
            expected: trace.n(),
            got: bias.n(),
        });
    }
    reweight_scores(trace.scores(), &bias.curve())
}

/// Elementwise `scores_i / curve_i` against an arbitrary positive curve.
pub fn reweight_scores(scores: &[f64], curve: &[f64]) -> Result<Vec<f64>> {
    if curve.len() != scores.len() {
        return Err(Error::SizeMismatch {
            context: "bias curve".into(),
            expected: scores.len(),
            got: curve.len(),
        });
    }
    if let Some((index, &value)) = curve.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
        return Err(Error::NonPositiveBias { index, value });
    }
    Ok(scores.iter().zip(curve).map(|(a, p)| a / p).collect())
}

/// Descending score, ascending index on ties.
fn rank_order(scores: &[f64], i: usize, j: usize) -> Ordering {
    scores[j].total_cmp(&scores[i]).then(i.cmp(&j))
}

/// Indices of the `k` highest scores, lower index first among equal
/// scores, returned in ascending index order.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, |&i, &j| rank_order(scores, i, j));
        order.truncate(k);
    }
    order.sort_unstable();
    order
}

pub fn prune(trace: &AttentionTrace, cfg: &PruneConfig) -> Result<PruneDecision> {
    let retain_k = retained_count(trace.n(), cfg.ratio)?;
    let scores_used = match &cfg.criterion {
        Criterion::FastV => trace.scores().to_vec(),
        Criterion::PoRe(bias) => reweight(trace, bias)?,
    };
    Ok(PruneDecision {
        sample_id: trace.sample_id().to_string(),
        method: cfg.method(),
        ratio: cfg.ratio,
        kept: top_k_indices(&scores_used, retain_k),
        scores_used,
    })
}

/// `|kept_a ∩ kept_b| / retain_k`.
pub fn decision_overlap(a: &PruneDecision, b: &PruneDecision) -> Result<f64> {
    if a.retain_k() != b.retain_k() {
        return Err(Error::SizeMismatch {
            context: "retained counts of compared decisions".into(),
            expected: a.retain_k(),
            got: b.retain_k(),
        });
    }
    if a.n() != b.n() {
        return Err(Error::SizeMismatch {
            context: "token counts of compared decisions".into(),
            expected: a.n(),
            got: b.n(),
        });
    }
    Ok(sorted_intersection(&a.kept, &b.kept) as f64 / a.retain_k() as f64)
}

/// Size of the intersection of two ascending index lists.
pub(crate) fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}
