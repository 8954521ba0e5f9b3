//! FastV against PoRe on a synthetic corpus with planted saliency.
//!
//! The corpus plants a recency bias whose last-token factor is three times the
//! first-token factor. The bias profile is fitted on the same corpus, then
//! both criteria prune every trace and are scored against the ground-truth
//! content ranking.
//!
//! ```bash
//! cargo run -p pore --release --example synthetic_benchmark -- [seed]
//! ```

use pore::eval::EvalAccumulator;
use pore::synth::rate_for_end_ratio;
use pore::{
    fit_bias, generate_corpus, mean_attention_profile, prune, BiasForm, PruneConfig, SynthSpec,
};

fn main() -> pore::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2024);
    let n = 576;
    let spec = SynthSpec {
        n,
        samples: 200,
        bias_b: rate_for_end_ratio(n, 3.0),
        bias_c: 0.0,
        salient_k: 32,
        salience_gain: 4.0,
        noise_rel: 0.02,
        seed,
    };
    let corpus: Vec<_> = generate_corpus(&spec)?.collect();
    let mean = mean_attention_profile(corpus.iter().map(|s| &s.trace))?;
    let bias = fit_bias(&mean, BiasForm::Exp2)?;
    println!(
        "planted b = {:.6e}, fitted b = {:.6e} (residual {:.3e})",
        spec.bias_b,
        bias.b(),
        bias.residual()
    );

    println!(
        "{:>6} {:>7} {:>9} {:>9} {:>9}",
        "method", "ratio", "recall", "rank_corr", "slope"
    );
    for ratio in [0.5, 0.75, 0.778, 0.9] {
        for cfg in [
            PruneConfig::fastv(ratio)?,
            PruneConfig::pore(ratio, bias.clone())?,
        ] {
            let mut acc = EvalAccumulator::new(cfg.method(), ratio);
            for sample in &corpus {
                let decision = prune(&sample.trace, &cfg)?;
                acc.push(&decision, &sample.content_scores)?;
            }
            let r = acc.finish()?;
            println!(
                "{:>6} {:>7} {:>9.4} {:>9.4} {:>9.4}",
                r.method.to_string(),
                r.ratio,
                r.recall_at_k,
                r.rank_corr,
                r.positional_slope
            );
        }
    }
    Ok(())
}
