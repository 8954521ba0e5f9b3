//! Content-agnostic recency bias.
//!
//! The bias profile `P` is estimated by averaging attention traces over a
//! calibration corpus and fitting the mean with an exponential in the token
//! index. Two forms are supported:
//!
//! * `EXP2`: `P(i) = a * exp(b * i)`, fit by ordinary least squares on
//!   `ln(mean_i)`. Closed form and deterministic.
//! * `EXP3`: `P(i) = a * exp(b * i) + c`, fit by damped Gauss-Newton on the
//!   raw mean, started from the `EXP2` solution with `c = 0`.
//!
//! Fitted profiles are rescaled so that `mean(P) = 1`. Only the ordering of
//! `A_i / P_i` matters for pruning, so the rescaling never changes a decision.

use std::borrow::Borrow;
use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::attention::{AttentionTrace, SUM_TOLERANCE};
use crate::error::{Error, Result};

/// Corpora smaller than this produce a warning when fitted.
pub const SMALL_CORPUS_WARNING: usize = 100;

/// Tolerance on `mean(P) = 1` for normalized profiles.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

pub const MAX_GAUSS_NEWTON_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-10;

/// Version written into bias-profile files.
pub const FORMAT_VERSION: u64 = 1;

/// Elementwise dataset mean of attention traces.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanProfile {
    m_samples: usize,
    mean_scores: Vec<f64>,
}

impl MeanProfile {
    pub fn new(mean_scores: Vec<f64>, m_samples: usize) -> Result<Self> {
        if m_samples == 0 {
            return Err(Error::EmptyCorpus);
        }
        if mean_scores.is_empty() {
            return Err(Error::InvalidParameter("mean profile needs n >= 1".into()));
        }
        if let Some(index) = mean_scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "mean scores",
                index,
            });
        }
        let sum: f64 = mean_scores.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self {
            m_samples,
            mean_scores,
        })
    }

    pub fn n(&self) -> usize {
        self.mean_scores.len()
    }

    pub fn m_samples(&self) -> usize {
        self.m_samples
    }

    pub fn mean_scores(&self) -> &[f64] {
        &self.mean_scores
    }
}

/// Streaming `(sum, count)` reduction behind [`mean_attention_profile`].
///
/// Partial accumulators over disjoint parts of a corpus can be combined with
/// [`MeanAccumulator::merge`].
#[derive(Debug, Clone, Default)]
pub struct MeanAccumulator {
    sums: Vec<f64>,
    count: usize,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, trace: &AttentionTrace) -> Result<()> {
        if self.count == 0 {
            self.sums = trace.scores().to_vec();
        } else {
            if trace.n() != self.sums.len() {
                return Err(Error::TraceSizeMismatch {
                    sample_id: trace.sample_id().to_string(),
                    expected: self.sums.len(),
                    got: trace.n(),
                });
            }
            for (s, v) in self.sums.iter_mut().zip(trace.scores()) {
                *s += v;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(mut self, other: MeanAccumulator) -> Result<Self> {
        if other.count == 0 {
            return Ok(self);
        }
        if self.count == 0 {
            return Ok(other);
        }
        if other.sums.len() != self.sums.len() {
            return Err(Error::SizeMismatch {
                context: "merged mean accumulators".into(),
                expected: self.sums.len(),
                got: other.sums.len(),
            });
        }
        for (s, v) in self.sums.iter_mut().zip(&other.sums) {
            *s += v;
        }
        self.count += other.count;
        Ok(self)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<MeanProfile> {
        if self.count == 0 {
            return Err(Error::EmptyCorpus);
        }
        let m = self.count as f64;
        MeanProfile::new(self.sums.into_iter().map(|s| s / m).collect(), self.count)
    }
}

/// Averages a stream of traces in a single pass.
pub fn mean_attention_profile<I>(traces: I) -> Result<MeanProfile>
where
    I: IntoIterator,
    I::Item: Borrow<AttentionTrace>,
{
    let mut acc = MeanAccumulator::new();
    for trace in traces {
        acc.push(trace.borrow())?;
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BiasForm {
    #[serde(rename = "EXP2")]
    Exp2,
    #[serde(rename = "EXP3")]
    Exp3,
}

impl fmt::Display for BiasForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiasForm::Exp2 => "EXP2",
            BiasForm::Exp3 => "EXP3",
        })
    }
}

impl std::str::FromStr for BiasForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EXP2" => Ok(BiasForm::Exp2),
            "EXP3" => Ok(BiasForm::Exp3),
            other => Err(Error::InvalidParameter(format!(
                "unknown bias form '{other}' (expected exp2 or exp3)"
            ))),
        }
    }
}

/// Fitted recency-bias curve `P(i) = a * exp(b * i) + c` over `i in [0, n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasProfile {
    format_version: u64,
    form: BiasForm,
    a: f64,
    b: f64,
    c: f64,
    n: usize,
    residual: f64,
    normalized: bool,
}

impl BiasProfile {
    pub fn new(
        form: BiasForm,
        a: f64,
        b: f64,
        c: f64,
        n: usize,
        residual: f64,
        normalized: bool,
    ) -> Result<Self> {
        let profile = Self {
            format_version: FORMAT_VERSION,
            form,
            a,
            b,
            c,
            n,
            residual,
            normalized,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// `P(i) = 1` for every index.
    pub fn flat(n: usize) -> Result<Self> {
        Self::new(BiasForm::Exp2, 1.0, 0.0, 0.0, n, 0.0, true)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("bias profile needs n >= 1".into()));
        }
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("residual", self.residual),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "bias parameter {name} is not finite"
                )));
            }
        }
        if self.residual < 0.0 {
            return Err(Error::InvalidParameter("residual must be >= 0".into()));
        }
        if self.form == BiasForm::Exp2 && self.c != 0.0 {
            return Err(Error::InvalidParameter("EXP2 profiles have c = 0".into()));
        }
        // a*exp(b*i) + c is monotone in i, so its minimum sits at an endpoint.
        for index in [0, self.n - 1] {
            let value = self.evaluate(index);
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveBias { index, value });
            }
        }
        if self.normalized {
            let mean = self.mean_value();
            if (mean - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::InvalidParameter(format!(
                    "profile flagged normalized but mean(P) = {mean}"
                )));
            }
        }
        Ok(())
    }

    pub fn form(&self) -> BiasForm {
        self.form
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Root-mean-square fit residual against the mean-1 scaled mean profile.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    fn evaluate(&self, i: usize) -> f64 {
        self.a * (self.b * i as f64).exp() + self.c
    }

    /// `P(i)`; rejects indices outside `[0, n)`.
    pub fn bias_at(&self, i: usize) -> Result<f64> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.n,
            });
        }
        Ok(self.evaluate(i))
    }

    /// `P(0), ..., P(n-1)`.
    pub fn curve(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.evaluate(i)).collect()
    }

    fn mean_value(&self) -> f64 {
        (0..self.n).map(|i| self.evaluate(i)).sum::<f64>() / self.n as f64
    }

    /// Profile multiplied by a positive constant. The result is flagged as
    /// not normalized unless `factor == 1`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bias scale factor must be positive and finite, got {factor}"
            )));
        }
        Self::new(
            self.form,
            self.a * factor,
            self.b,
            self.c * factor,
            self.n,
            self.residual,
            self.normalized && factor == 1.0,
        )
    }
}

/// Least-squares slope and intercept of `y` against the index `0..n`.
///
/// Symmetric index pairs are combined before summation, so a constant input
/// yields a slope of exactly zero.
pub(crate) fn index_regression(y: &[f64]) -> (f64, f64) {
    let n = y.len();
    let center = (n as f64 - 1.0) / 2.0;
    let mean = y.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (0.0, mean);
    }
    let numerator: f64 = (0..n / 2)
        .map(|i| (i as f64 - center) * (y[i] - y[n - 1 - i]))
        .sum();
    let nf = n as f64;
    let denominator = nf * (nf * nf - 1.0) / 12.0;
    let slope = numerator / denominator;
    (slope, mean - slope * center)
}

/// Fits the recency-bias profile to a mean attention profile.
pub fn fit_bias(profile: &MeanProfile, form: BiasForm) -> Result<BiasProfile> {
    if profile.m_samples() < SMALL_CORPUS_WARNING {
        log::warn!(
            "fitting recency bias from only {} traces (fewer than {SMALL_CORPUS_WARNING})",
            profile.m_samples()
        );
    }
    let mean_level = profile.mean_scores().iter().sum::<f64>() / profile.n() as f64;
    let target: Vec<f64> = profile
        .mean_scores()
        .iter()
        .map(|v| v / mean_level)
        .collect();

    let (a, b, c) = match form {
        BiasForm::Exp2 => {
            let (a, b) = fit_log_linear(&target)?;
            (a, b, 0.0)
        }
        BiasForm::Exp3 => fit_gauss_newton(&target)?,
    };

    let n = target.len();
    let scale = (0..n).map(|i| a * (b * i as f64).exp() + c).sum::<f64>() / n as f64;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NonPositiveBias {
            index: 0,
            value: scale,
        });
    }
    let (a, c) = (a / scale, c / scale);
    let residual = (target
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let r = a * (b * i as f64).exp() + c - y;
            r * r
        })
        .sum::<f64>()
        / n as f64)
        .sqrt();
    BiasProfile::new(form, a, b, c, n, residual, true)
}

fn fit_log_linear(y: &[f64]) -> Result<(f64, f64)> {
    let mut logs = Vec::with_capacity(y.len());
    for (index, &value) in y.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveMean { index, value });
        }
        logs.push(value.ln());
    }
    let (b, ln_a) = index_regression(&logs);
    Ok((ln_a.exp(), b))
}

fn fit_gauss_newton(y: &[f64]) -> Result<(f64, f64, f64)> {
    let mut params = initial_exp3(y)?;
    let cost = |p: &Vector3<f64>| -> f64 {
        y.iter()
            .enumerate()
            .map(|(i, yi)| {
                let r = p[0] * (p[1] * i as f64).exp() + p[2] - yi;
                r * r
            })
            .sum()
    };
    let mut current = cost(&params);
    let mut lambda = 1e-6;

    for iteration in 0..MAX_GAUSS_NEWTON_ITERATIONS {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (i, yi) in y.iter().enumerate() {
            let x = i as f64;
            let e = (params[1] * x).exp();
            let row = Vector3::new(e, params[0] * x * e, 1.0);
            let r = params[0] * e + params[2] - yi;
            jtj += row * row.transpose();
            jtr += row * r;
        }

        let mut accepted = None;
        while lambda < 1e16 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            if step.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    iterations: iteration,
                    a: params[0],
                    b: params[1],
                    c: params[2],
                });
            }
            let candidate = params + step;
            let trial = cost(&candidate);
            if trial.is_finite() && trial <= current {
                accepted = Some((candidate, trial, step));
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }

        let Some((candidate, trial, step)) = accepted else {
            // no descent direction left at any damping: at a minimum
            break;
        };
        params = candidate;
        current = trial;
        if step.amax() < STEP_TOLERANCE {
            break;
        }
    }
    Ok((params[0], params[1], params[2]))
}

fn initial_exp3(y: &[f64]) -> Result<Vector3<f64>> {
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        let (a, b) = fit_log_linear(y)?;
        return Ok(Vector3::new(a, b, 0.0));
    }
    // EXP2 is undefined on nonpositive data: start from the shifted curve.
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = -min + ((max - min) * 1e-3).max(1e-12);
    let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
    let (a, b) = fit_log_linear(&shifted)?;
    Ok(Vector3::new(a, b, -shift))
}

/// Writes the profile as a JSON object.
pub fn save_bias(profile: &BiasProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(profile)
        .map_err(|e| Error::InvalidParameter(format!("serializing bias profile: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_bias(path: impl AsRef<Path>) -> Result<BiasProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bias(&text, &path.display().to_string())
}

/// Parses a bias-profile document. `origin` names the source in diagnostics.
pub fn parse_bias(text: &str, origin: &str) -> Result<BiasProfile> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::schema(origin, e.line(), format!("malformed bias profile: {e}")))?;
    let Value::Object(fields) = value else {
        return Err(Error::schema(
            origin,
            1,
            "bias profile must be a JSON object",
        ));
    };
    let reader = FieldReader {
        fields: &fields,
        text,
        origin,
    };

    let version = reader.unsigned("format_version")?;
    if version != FORMAT_VERSION {
        return Err(reader.error(
            "format_version",
            format!("unsupported format_version {version} (expected {FORMAT_VERSION})"),
        ));
    }
    let form = match reader.get("form")? {
        Value::String(s) => s
            .parse::<BiasForm>()
            .map_err(|_| reader.error("form", format!("field 'form': unknown form '{s}'")))?,
        _ => return Err(reader.error("form", "field 'form' must be a string")),
    };
    let n = reader.unsigned("n")?;
    let normalized = match reader.get("normalized")? {
        Value::Bool(b) => *b,
        _ => return Err(reader.error("normalized", "field 'normalized' must be a boolean")),
    };
    let a = reader.float("a")?;
    let b = reader.float("b")?;
    let c = reader.float("c")?;
    let residual = reader.float("residual")?;

    BiasProfile::new(form, a, b, c, n as usize, residual, normalized).map_err(|e| {
        let field = match &e {
            Error::NonPositiveBias { .. } => "a",
            Error::InvalidParameter(msg) if msg.contains("residual") => "residual",
            Error::InvalidParameter(msg) if msg.contains("n >=") => "n",
            Error::InvalidParameter(msg) if msg.contains("normalized") => "normalized",
            _ => "c",
        };
        reader.error(field, e.to_string())
    })
}

struct FieldReader<'a> {
    fields: &'a Map<String, Value>,
    text: &'a str,
    origin: &'a str,
}

impl FieldReader<'_> {
    fn line_of(&self, field: &str) -> usize {
        let key = format!("\"{field}\"");
        self.text
            .find(&key)
            .map(|pos| self.text[..pos].matches('\n').count() + 1)
            .unwrap_or(1)
    }

    fn error(&self, field: &str, message: impl Into<String>) -> Error {
        Error::schema(self.origin, self.line_of(field), message)
    }

    fn get(&self, field: &str) -> Result<&Value> {
        self.fields
            .get(field)
            .ok_or_else(|| Error::schema(self.origin, 1, format!("missing field '{field}'")))
    }

    fn unsigned(&self, field: &str) -> Result<u64> {
        match self.get(field)? {
            Value::Number(num) => {
                if let Some(v) = num.as_u64() {
                    Ok(v)
                } else if num.as_i64().is_some_and(|v| v < 0) {
                    Err(self.error(
                        field,
                        format!("field '{field}' must be nonnegative, got {num}"),
                    ))
                } else {
                    Err(self.error(
                        field,
                        format!("field '{field}' must be an integer, got {num}"),
                    ))
                }
            }
            other => Err(self.error(
                field,
                format!("field '{field}' must be an integer, got {other}"),
            )),
        }
    }

    fn float(&self, field: &str) -> Result<f64> {
        match self.get(field)? {
            Value::Number(num) => num
                .as_f64()
                .ok_or_else(|| self.error(field, format!("field '{field}' is not a real number"))),
            other => Err(self.error(
                field,
                format!("field '{field}' must be a number, got {other}"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_profile(a: f64, b: f64, c: f64, n: usize) -> MeanProfile {
        let raw: Vec<f64> = (0..n).map(|i| a * (b * i as f64).exp() + c).collect();
        let total: f64 = raw.iter().sum();
        MeanProfile::new(raw.iter().map(|v| v / total).collect(), 1000).unwrap()
    }

    fn trace(id: &str, scores: &[f64]) -> AttentionTrace {
        AttentionTrace::new(id, scores.to_vec(), None, 0).unwrap()
    }

    #[test]
    fn mean_profile_examples() {
        let single = trace("s", &[0.1, 0.9]);
        let m = mean_attention_profile([&single]).unwrap();
        assert_eq!(m.mean_scores(), single.scores());
        assert_eq!(m.m_samples(), 1);

        let t = trace("s", &[0.2, 0.3, 0.5]);
        let m = mean_attention_profile(vec![t.clone(), t.clone(), t.clone()]).unwrap();
        for (a, b) in m.mean_scores().iter().zip(t.scores()) {
            assert!((a - b).abs() < 1e-15);
        }

        let m = mean_attention_profile([trace("x", &[0.2, 0.8]), trace("y", &[0.6, 0.4])]).unwrap();
        assert!((m.mean_scores()[0] - 0.4).abs() < 1e-15);
        assert!((m.mean_scores()[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn mean_profile_errors() {
        let empty: Vec<AttentionTrace> = vec![];
        assert!(matches!(
            mean_attention_profile(empty),
            Err(Error::EmptyCorpus)
        ));
        let err =
            mean_attention_profile([trace("a", &[0.5, 0.5]), trace("bad", &[1.0])]).unwrap_err();
        match err {
            Error::TraceSizeMismatch { sample_id, .. } => assert_eq!(sample_id, "bad"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn exp2_recovers_noiseless_rate() {
        let fit = fit_bias(&exp_profile(2.0, 0.01, 0.0, 576), BiasForm::Exp2).unwrap();
        assert!((fit.b() - 0.01).abs() < 1e-6);
        assert!(fit.residual() < 1e-9);

        let fit = fit_bias(&exp_profile(1.0, 0.004, 0.0, 576), BiasForm::Exp2).unwrap();
        assert!((fit.b() - 0.004).abs() < 1e-6);
    }

    #[test]
    fn flat_data_gives_flat_fit() {
        let m = MeanProfile::new(vec![0.125; 8], 5).unwrap();
        for form in [BiasForm::Exp2, BiasForm::Exp3] {
            let fit = fit_bias(&m, form).unwrap();
            assert!(fit.b().abs() < 1e-9, "{form}: b = {}", fit.b());
            for p in fit.curve() {
                assert!((p - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exp2_rejects_zero_mean_and_exp3_accepts() {
        let m = MeanProfile::new(vec![0.0, 0.2, 0.3, 0.5], 3).unwrap();
        let err = fit_bias(&m, BiasForm::Exp2).unwrap_err();
        assert!(matches!(err, Error::NonPositiveMean { index: 0, .. }));
        assert!(err.to_string().contains("EXP3"));
        // exact fit impossible here; P may not stay positive after the offset
        match fit_bias(&m, BiasForm::Exp3) {
            Ok(p) => assert!(p.curve().iter().all(|&v| v > 0.0)),
            Err(e) => assert!(matches!(e, Error::NonPositiveBias { .. })),
        }
    }

    #[test]
    fn exp3_recovers_offset_curve() {
        // 1.5*exp(0.003 i) + 0.8 over 400 tokens
        let fit = fit_bias(&exp_profile(1.5, 0.003, 0.8, 400), BiasForm::Exp3).unwrap();
        assert!((fit.b() - 0.003).abs() < 1e-8, "b = {}", fit.b());
        assert!((fit.a() / fit.c() - 1.5 / 0.8).abs() < 1e-6);
        assert!(fit.residual() < 1e-10);
    }

    #[test]
    fn exp3_matches_exp2_when_offset_is_zero() {
        let m = exp_profile(0.7, 0.005, 0.0, 576);
        let e2 = fit_bias(&m, BiasForm::Exp2).unwrap();
        let e3 = fit_bias(&m, BiasForm::Exp3).unwrap();
        assert!((e2.b() - e3.b()).abs() < 1e-6);
    }

    #[test]
    fn normalized_profiles_have_unit_mean() {
        let fit = fit_bias(&exp_profile(3.0, -0.002, 0.0, 100), BiasForm::Exp2).unwrap();
        let mean = fit.curve().iter().sum::<f64>() / 100.0;
        assert!((mean - 1.0).abs() < 1e-9);
        assert!(fit.is_normalized());
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn bias_at_examples() {
        let flat = BiasProfile::flat(10).unwrap();
        assert!((0..10).all(|i| flat.bias_at(i).unwrap() == 1.0));
        let unit = BiasProfile::new(BiasForm::Exp2, 1.0, 0.0, 0.0, 7, 0.0, false).unwrap();
        assert_eq!(unit.bias_at(0).unwrap(), 1.0);
        assert_eq!(unit.bias_at(6).unwrap(), 1.0);
        // 1.5*exp(-0.2) + 0.25, evaluated at 40 digits
        let p = BiasProfile::new(BiasForm::Exp3, 1.5, -0.02, 0.25, 20, 0.0, false).unwrap();
        assert!((p.bias_at(10).unwrap() - 1.478_096_129_616_972_788).abs() < 1e-12);
        assert!(matches!(
            p.bias_at(20),
            Err(Error::IndexOutOfRange { index: 20, n: 20 })
        ));
    }

    #[test]
    fn nonpositive_profiles_rejected() {
        let err = BiasProfile::new(BiasForm::Exp3, 1.0, 0.01, -1.5, 100, 0.0, false).unwrap_err();
        assert!(matches!(err, Error::NonPositiveBias { index: 0, .. }));
        assert!(BiasProfile::new(BiasForm::Exp2, -1.0, 0.0, 0.0, 3, 0.0, false).is_err());
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bias.json");
        let fit = fit_bias(&exp_profile(1.3, 0.0037, 0.0, 576), BiasForm::Exp2).unwrap();
        save_bias(&fit, &path).unwrap();
        let back = load_bias(&path).unwrap();
        assert_eq!(back.a().to_bits(), fit.a().to_bits());
        assert_eq!(back.b().to_bits(), fit.b().to_bits());
        assert_eq!(back.c().to_bits(), fit.c().to_bits());
        assert_eq!(back.residual().to_bits(), fit.residual().to_bits());
        assert_eq!(back, fit);
    }

    #[test]
    fn load_rejects_schema_violations() {
        let negative_n = r#"{
  "format_version": 1,
  "form": "EXP2",
  "a": 1.0,
  "b": 0.0,
  "c": 0.0,
  "n": -4,
  "residual": 0.0,
  "normalized": true
}"#;
        let err = parse_bias(negative_n, "neg.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 7") && msg.contains("'n'"), "{msg}");

        let nonpositive = r#"{"format_version":1,"form":"EXP3","a":1.0,"b":0.01,"c":-2.0,"n":50,"residual":0.0,"normalized":false}"#;
        let err = parse_bias(nonpositive, "np.json").unwrap_err();
        assert!(err.to_string().contains("not strictly positive"), "{err}");

        let missing = r#"{"format_version":1,"form":"EXP2","a":1.0,"b":0.0,"n":5,"residual":0.0,"normalized":false}"#;
        assert!(parse_bias(missing, "m.json")
            .unwrap_err()
            .to_string()
            .contains("missing field 'c'"));

        let garbage = "{\n  \"a\": 1.0,\n  oops\n}";
        let msg = parse_bias(garbage, "g.json").unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn index_regression_is_exact_on_constants_and_lines() {
        assert_eq!(index_regression(&[0.1; 577]).0, 0.0);
        let line: Vec<f64> = (0..50).map(|i| 3.0 - 0.5 * i as f64).collect();
        let (slope, intercept) = index_regression(&line);
        assert!((slope + 0.5).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
    }
}
