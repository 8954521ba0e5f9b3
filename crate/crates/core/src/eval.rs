//! Pruning quality against ground truth, and the positional diagnostics used
//! to show recency bias before and after reweighting.

use std::path::Path;

use serde::Serialize;

use crate::bias::index_regression;
use crate::error::{Error, Result};
use crate::prune::{sorted_intersection, top_k_indices, PruneDecision, PruneMethod};

/// `|kept ∩ truth_topk| / retain_k`. `truth_topk` must be ascending.
pub fn recall_at_k(decision: &PruneDecision, truth_topk: &[usize]) -> Result<f64> {
    if truth_topk.len() != decision.retain_k() {
        return Err(Error::SizeMismatch {
            context: format!("ground-truth top-k of sample '{}'", decision.sample_id),
            expected: decision.retain_k(),
            got: truth_topk.len(),
        });
    }
    let mut truth = truth_topk.to_vec();
    truth.sort_unstable();
    truth.dedup();
    if truth.len() != truth_topk.len() {
        return Err(Error::InvalidParameter(
            "ground-truth top-k has duplicate indices".into(),
        ));
    }
    Ok(sorted_intersection(&decision.kept, &truth) as f64 / decision.retain_k() as f64)
}

/// Ranks starting at 1; tied values share the mean of their rank span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    /// Set when either input has zero rank variance; `rho` is then 0.
    pub zero_variance: bool,
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            context: "spearman inputs".into(),
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter(
            "spearman needs at least two points".into(),
        ));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let center = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - center, b - center);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Spearman {
            rho: 0.0,
            zero_variance: true,
        });
    }
    Ok(Spearman {
        rho: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        zero_variance: false,
    })
}

/// Least-squares slope of `values` against the token index, scaled to
/// `slope * n / mean(values)` so that it does not depend on the level.
pub fn positional_slope(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "positional slope needs n >= 2".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let (slope, _) = index_regression(values);
    Ok(slope * n as f64 / mean)
}

/// Row-major reshape of a profile into `rows x cols`.
pub fn grid_heatmap(values: &[f64], rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
    if rows * cols != values.len() || rows == 0 {
        return Err(Error::GridMismatch {
            rows,
            cols,
            n: values.len(),
        });
    }
    Ok(values.chunks_exact(cols).map(<[f64]>::to_vec).collect())
}

/// Writes the reshaped profile as headerless CSV, one grid row per line.
pub fn grid_heatmap_export(
    values: &[f64],
    rows: usize,
    cols: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let matrix = grid_heatmap(values, rows, cols)?;
    let path = path.as_ref();
    let mut out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    for row in &matrix {
        out.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::InvalidParameter(format!("{}: {other:?}", path.display())),
    }
}

/// Per-sample metrics, one row of the long-form CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleEval {
    pub sample_id: String,
    pub method: PruneMethod,
    pub ratio: f64,
    pub retain_k: usize,
    pub recall_at_k: f64,
    pub rank_corr: f64,
    pub rank_corr_degenerate: bool,
}

/// Scores one decision against the ground-truth content of its sample.
///
/// The ground-truth top-k is the `retain_k` highest content scores under the
/// pruner's own tie rule.
pub fn evaluate_sample(decision: &PruneDecision, content_scores: &[f64]) -> Result<SampleEval> {
    if content_scores.len() != decision.n() {
        return Err(Error::TraceSizeMismatch {
            sample_id: decision.sample_id.clone(),
            expected: decision.n(),
            got: content_scores.len(),
        });
    }
    let truth = top_k_indices(content_scores, decision.retain_k());
    let recall = recall_at_k(decision, &truth)?;
    let (rank_corr, degenerate) = if decision.n() < 2 {
        (0.0, true)
    } else {
        let s = spearman(&decision.scores_used, content_scores)?;
        (s.rho, s.zero_variance)
    };
    Ok(SampleEval {
        sample_id: decision.sample_id.clone(),
        method: decision.method,
        ratio: decision.ratio,
        retain_k: decision.retain_k(),
        recall_at_k: recall,
        rank_corr,
        rank_corr_degenerate: degenerate,
    })
}

/// Aggregate over all samples of one method at one ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: PruneMethod,
    pub ratio: f64,
    pub recall_at_k: f64,
    pub rank_corr: f64,
    pub positional_slope: f64,
    pub samples: usize,
}

/// Mergeable reduction of per-sample metrics into an [`EvalReport`].
#[derive(Debug, Clone)]
pub struct EvalAccumulator {
    method: PruneMethod,
    ratio: f64,
    recall_sum: f64,
    rank_sum: f64,
    score_sums: Vec<f64>,
    count: usize,
}

impl EvalAccumulator {
    pub fn new(method: PruneMethod, ratio: f64) -> Self {
        Self {
            method,
            ratio,
            recall_sum: 0.0,
            rank_sum: 0.0,
            score_sums: Vec::new(),
            count: 0,
        }
    }

    pub fn push(&mut self, decision: &PruneDecision, content_scores: &[f64]) -> Result<SampleEval> {
        if decision.method != self.method || decision.ratio != self.ratio {
            return Err(Error::InvalidParameter(format!(
                "decision for '{}' is {} at ratio {}, accumulator expects {} at {}",
                decision.sample_id, decision.method, decision.ratio, self.method, self.ratio
            )));
        }
        if self.count > 0 && decision.n() != self.score_sums.len() {
            return Err(Error::TraceSizeMismatch {
                sample_id: decision.sample_id.clone(),
                expected: self.score_sums.len(),
                got: decision.n(),
            });
        }
        let row = evaluate_sample(decision, content_scores)?;
        if self.count == 0 {
            self.score_sums = decision.scores_used.clone();
        } else {
            for (s, v) in self.score_sums.iter_mut().zip(&decision.scores_used) {
                *s += v;
            }
        }
        self.recall_sum += row.recall_at_k;
        self.rank_sum += row.rank_corr;
        self.count += 1;
        Ok(row)
    }

    pub fn merge(mut self, other: EvalAccumulator) -> Result<Self> {
        if other.count == 0 {
            return Ok(self);
        }
        if self.count == 0 {
            return Ok(other);
        }
        if self.method != other.method || self.ratio != other.ratio {
            return Err(Error::InvalidParameter(
                "merging reports of different runs".into(),
            ));
        }
        if self.score_sums.len() != other.score_sums.len() {
            return Err(Error::SizeMismatch {
                context: "merged evaluation accumulators".into(),
                expected: self.score_sums.len(),
                got: other.score_sums.len(),
            });
        }
        for (s, v) in self.score_sums.iter_mut().zip(&other.score_sums) {
            *s += v;
        }
        self.recall_sum += other.recall_sum;
        self.rank_sum += other.rank_sum;
        self.count += other.count;
        Ok(self)
    }

    /// Mean of `scores_used` over the samples seen so far.
    pub fn mean_scores(&self) -> Vec<f64> {
        let m = self.count.max(1) as f64;
        self.score_sums.iter().map(|s| s / m).collect()
    }

    pub fn finish(&self) -> Result<EvalReport> {
        if self.count == 0 {
            return Err(Error::EmptyCorpus);
        }
        let m = self.count as f64;
        let positional_slope = if self.score_sums.len() >= 2 {
            positional_slope(&self.mean_scores())?
        } else {
            0.0
        };
        Ok(EvalReport {
            method: self.method,
            ratio: self.ratio,
            recall_at_k: self.recall_sum / m,
            rank_corr: self.rank_sum / m,
            positional_slope,
            samples: self.count,
        })
    }
}

/// One row per report.
pub fn write_report_csv(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    write_rows(reports, path.as_ref())
}

/// Long-form per-sample metrics.
pub fn write_samples_csv(rows: &[SampleEval], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, path.as_ref())
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut out = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
