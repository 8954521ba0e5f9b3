//! The `pore` command-line pipeline.
//!
//! ```text
//! pore synth     --n 576 --samples 500 --seed 42 --end-ratio 3 --out corpus.jsonl
//! pore fit-bias  --traces corpus.jsonl --out bias.json
//! pore prune     --traces corpus.jsonl --method pore --bias bias.json --ratio 0.778 --out pore.jsonl
//! pore eval      --decisions pore.jsonl --decisions fastv.jsonl --truth corpus.truth.jsonl --out report.csv
//! pore flops     --ratio 0.778 --ratio 0.9 --out flops.csv
//! pore profile   --traces corpus.jsonl --grid 24x24 --out heatmap.csv
//! ```
//!
//! Exit codes: 0 success, 1 usage, 2 data or schema error, 3 numerical failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::bias::{fit_bias, load_bias, save_bias, BiasForm, MeanAccumulator};
use crate::cost::{ratio_table, write_table_csv, CostConfig};
use crate::error::{Error, Result};
use crate::eval::{
    grid_heatmap_export, write_report_csv, write_samples_csv, EvalAccumulator, EvalReport,
    SampleEval,
};
use crate::io::{
    read_decisions, read_traces, read_truth, write_decisions, write_jsonl, TraceReader, TruthRecord,
};
use crate::prune::{prune, PruneConfig, PruneMethod};
use crate::synth::{generate_corpus, rate_for_end_ratio, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "pore",
    version,
    about = "Position-reweighted visual token pruning"
)]
pub struct Cli {
    /// Suppress warnings and the summary line on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace corpus and its ground-truth sidecar.
    Synth(SynthArgs),
    /// Fit the recency-bias profile to the mean attention of a corpus.
    FitBias(FitBiasArgs),
    /// Select visual tokens for every trace.
    Prune(PruneArgs),
    /// Score decisions against ground-truth content.
    Eval(EvalArgs),
    /// Tabulate estimated prefill FLOPs per pruning ratio.
    Flops(FlopsArgs),
    /// Export the mean attention profile or its grid heatmap.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    /// Planted exponential rate per token index.
    #[arg(
        long,
        default_value_t = 0.0,
        conflicts_with = "end_ratio",
        allow_negative_numbers = true
    )]
    pub bias_b: f64,
    /// Planted bias factor of the last token relative to the first.
    #[arg(long)]
    pub end_ratio: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub bias_c: f64,
    #[arg(long, default_value_t = 0)]
    pub salient_k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub salience_gain: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_rel: f64,
    /// Trace file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth sidecar; defaults to `<out stem>.truth.jsonl`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitBiasArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long, default_value = "exp2")]
    pub form: BiasForm,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub method: PruneMethod,
    /// Bias-profile file, required for `--method pore`.
    #[arg(long)]
    pub bias: Option<PathBuf>,
    /// Fraction of visual tokens to discard, in [0, 1).
    #[arg(long)]
    pub ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Decisions file; repeat to compare methods or ratios.
    #[arg(long, required = true)]
    pub decisions: Vec<PathBuf>,
    #[arg(long)]
    pub truth: PathBuf,
    /// Summary CSV, one row per decisions file.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional long-form per-sample CSV.
    #[arg(long)]
    pub per_sample: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    /// `key = value` model shape file; LLaVA-1.5-7B shapes when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pruning ratios; repeat or separate with commas.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ratio: Vec<f64>,
    /// Overrides the config's prune layer.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub traces: PathBuf,
    /// Write a ROWSxCOLS heatmap instead of the per-index profile.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Divide the mean profile by this bias profile.
    #[arg(long)]
    pub bias: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got '{s}'"))?;
    let rows = r.trim().parse().map_err(|e| format!("grid rows: {e}"))?;
    let cols = c.trim().parse().map_err(|e| format!("grid cols: {e}"))?;
    Ok((rows, cols))
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Off
        } else {
            log::LevelFilter::Warn
        })
        .format_target(false)
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                eprintln!("{summary}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Executes a parsed command; the returned string is a one-line summary.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::FitBias(a) => cmd_fit_bias(a),
        Command::Prune(a) => cmd_prune(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Flops(a) => cmd_flops(a),
        Command::Profile(a) => cmd_profile(a),
    }
}

fn default_truth_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    out.with_file_name(format!("{stem}.truth.jsonl"))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let bias_b = match a.end_ratio {
        Some(r) if r > 0.0 && r.is_finite() => rate_for_end_ratio(a.n, r),
        Some(r) => {
            return Err(Error::InvalidParameter(format!(
                "--end-ratio must be positive, got {r}"
            )))
        }
        None => a.bias_b,
    };
    let spec = SynthSpec {
        n: a.n,
        samples: a.samples,
        bias_b,
        bias_c: a.bias_c,
        salient_k: a.salient_k,
        salience_gain: a.salience_gain,
        noise_rel: a.noise_rel,
        seed: a.seed,
    };
    let corpus: Vec<_> = generate_corpus(&spec)?.collect();
    crate::io::write_traces(&a.out, corpus.iter().map(|s| &s.trace))?;
    let truth = a
        .truth
        .clone()
        .unwrap_or_else(|| default_truth_path(&a.out));
    write_jsonl(&truth, corpus.iter().map(TruthRecord::from))?;
    Ok(format!(
        "wrote {} traces (n = {}, planted b = {bias_b:.6e}) to {} and ground truth to {}",
        corpus.len(),
        a.n,
        a.out.display(),
        truth.display()
    ))
}

pub fn cmd_fit_bias(a: &FitBiasArgs) -> Result<String> {
    let mut acc = MeanAccumulator::new();
    for trace in TraceReader::open(&a.traces)? {
        acc.push(&trace?)?;
    }
    let mean = acc.finish()?;
    let profile = fit_bias(&mean, a.form)?;
    save_bias(&profile, &a.out)?;
    Ok(format!(
        "fitted {} over {} traces: b = {:.6e}, residual = {:.3e}",
        profile.form(),
        mean.m_samples(),
        profile.b(),
        profile.residual()
    ))
}

pub fn cmd_prune(a: &PruneArgs) -> Result<String> {
    let cfg = match (a.method, &a.bias) {
        (PruneMethod::FastV, _) => PruneConfig::fastv(a.ratio)?,
        (PruneMethod::PoRe, Some(path)) => PruneConfig::pore(a.ratio, load_bias(path)?)?,
        (PruneMethod::PoRe, None) => {
            return Err(Error::InvalidParameter(
                "--method pore requires --bias".into(),
            ))
        }
    };
    let traces = read_traces(&a.traces)?;
    let decisions = traces
        .par_iter()
        .map(|t| prune(t, &cfg))
        .collect::<Result<Vec<_>>>()?;
    write_decisions(&a.out, &decisions)?;
    let retain = decisions.first().map(|d| d.retain_k()).unwrap_or(0);
    Ok(format!(
        "{} decisions ({} at ratio {}, retain_k = {retain}) written to {}",
        decisions.len(),
        cfg.method(),
        a.ratio,
        a.out.display()
    ))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let truth: HashMap<String, TruthRecord> = read_truth(&a.truth)?
        .into_iter()
        .map(|t| (t.sample_id.clone(), t))
        .collect();
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut rows: Vec<SampleEval> = Vec::new();
    for path in &a.decisions {
        let decisions = read_decisions(path)?;
        let Some(first) = decisions.first() else {
            return Err(Error::EmptyCorpus);
        };
        let mut acc = EvalAccumulator::new(first.method, first.ratio);
        for d in &decisions {
            if d.scores_used.is_empty() {
                return Err(Error::schema(
                    path.display().to_string(),
                    1,
                    format!("sample '{}' carries no ranking scores", d.sample_id),
                ));
            }
            let t = truth.get(&d.sample_id).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "no ground truth for sample '{}' in {}",
                    d.sample_id,
                    a.truth.display()
                ))
            })?;
            rows.push(acc.push(d, &t.content_scores)?);
        }
        reports.push(acc.finish()?);
    }
    write_report_csv(&reports, &a.out)?;
    if let Some(per_sample) = &a.per_sample {
        write_samples_csv(&rows, per_sample)?;
    }
    let summary: Vec<String> = reports
        .iter()
        .map(|r| format!("{}@{}: recall {:.4}", r.method, r.ratio, r.recall_at_k))
        .collect();
    Ok(summary.join(", "))
}

pub fn cmd_flops(a: &FlopsArgs) -> Result<String> {
    let mut cfg = match &a.config {
        Some(path) => CostConfig::load(path)?,
        None => CostConfig::llava_like(),
    };
    if let Some(k) = a.layer {
        cfg.prune_layer = k;
    }
    cfg.validate()?;
    let rows = ratio_table(&cfg, &a.ratio)?;
    write_table_csv(&rows, &a.out)?;
    Ok(format!(
        "{} ratios tabulated to {}",
        rows.len(),
        a.out.display()
    ))
}

#[derive(Serialize)]
struct ProfileRow {
    index: usize,
    mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reweighted: Option<f64>,
}

pub fn cmd_profile(a: &ProfileArgs) -> Result<String> {
    let mut acc = MeanAccumulator::new();
    for trace in TraceReader::open(&a.traces)? {
        acc.push(&trace?)?;
    }
    let mean = acc.finish()?;
    let curve = match &a.bias {
        Some(path) => {
            let bias = load_bias(path)?;
            if bias.n() != mean.n() {
                return Err(Error::SizeMismatch {
                    context: format!("bias profile {}", path.display()),
                    expected: mean.n(),
                    got: bias.n(),
                });
            }
            Some(bias.curve())
        }
        None => None,
    };
    let reweighted: Option<Vec<f64>> = curve.as_ref().map(|p| {
        mean.mean_scores()
            .iter()
            .zip(p)
            .map(|(m, p)| m / p)
            .collect()
    });

    if let Some((rows, cols)) = a.grid {
        let values = reweighted.as_deref().unwrap_or(mean.mean_scores());
        grid_heatmap_export(values, rows, cols, &a.out)?;
        return Ok(format!(
            "{rows}x{cols} heatmap of {} traces written to {}",
            mean.m_samples(),
            a.out.display()
        ));
    }

    let rows = (0..mean.n()).map(|i| ProfileRow {
        index: i,
        mean: mean.mean_scores()[i],
        bias: curve.as_ref().map(|p| p[i]),
        reweighted: reweighted.as_ref().map(|r| r[i]),
    });
    let path = &a.out;
    let mut out = csv::Writer::from_path(path).map_err(|e| crate::eval::csv_io(path, e))?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(format!(
        "mean profile of {} traces (n = {}) written to {}",
        mean.m_samples(),
        mean.n(),
        path.display()
    ))
}
