//! The file-based workflow the command-line tool runs: traces on disk, a saved
//! bias profile, decision files and an evaluation report.
//!
//! ```bash
//! cargo run -p pore --example file_pipeline -- out_dir
//! ```

use std::path::PathBuf;

use pore::bias::{load_bias, save_bias};
use pore::eval::write_report_csv;
use pore::io::{
    read_decisions, read_traces, read_truth, write_decisions, write_jsonl, TruthRecord,
};
use pore::synth::rate_for_end_ratio;
use pore::{
    fit_bias, generate_corpus, mean_attention_profile, prune, BiasForm, EvalAccumulator,
    PruneConfig, SynthSpec,
};

fn main() -> pore::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let spec = SynthSpec {
        bias_b: rate_for_end_ratio(576, 3.0),
        salient_k: 32,
        salience_gain: 4.0,
        noise_rel: 0.02,
        ..SynthSpec::new(576, 100, 9)
    };
    let corpus: Vec<_> = generate_corpus(&spec)?.collect();
    pore::io::write_traces(dir.join("corpus.jsonl"), corpus.iter().map(|s| &s.trace))?;
    write_jsonl(
        dir.join("corpus.truth.jsonl"),
        corpus.iter().map(TruthRecord::from),
    )?;

    let traces = read_traces(dir.join("corpus.jsonl"))?;
    save_bias(
        &fit_bias(&mean_attention_profile(&traces)?, BiasForm::Exp2)?,
        dir.join("bias.json"),
    )?;
    let bias = load_bias(dir.join("bias.json"))?;

    let truth = read_truth(dir.join("corpus.truth.jsonl"))?;
    let mut reports = Vec::new();
    for cfg in [
        PruneConfig::fastv(0.778)?,
        PruneConfig::pore(0.778, bias.clone())?,
    ] {
        let path = dir.join(format!("{}.jsonl", cfg.method()));
        let decisions = traces
            .iter()
            .map(|t| prune(t, &cfg))
            .collect::<pore::Result<Vec<_>>>()?;
        write_decisions(&path, &decisions)?;

        let mut acc = EvalAccumulator::new(cfg.method(), cfg.ratio());
        for (d, t) in read_decisions(&path)?.iter().zip(&truth) {
            acc.push(d, &t.content_scores)?;
        }
        let report = acc.finish()?;
        println!(
            "{}: recall@k {:.4}, rank corr {:.4}",
            report.method, report.recall_at_k, report.rank_corr
        );
        reports.push(report);
    }
    write_report_csv(&reports, dir.join("report.csv"))?;
    println!("files written to {}", dir.display());
    Ok(())
}
