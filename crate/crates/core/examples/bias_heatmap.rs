//! Writes 24x24 heatmaps of the mean attention before and after dividing out
//! the fitted positional bias.
//!
//! ```bash
//! cargo run -p pore --example bias_heatmap -- out_dir
//! ```

use std::path::PathBuf;

use pore::eval::grid_heatmap_export;
use pore::synth::rate_for_end_ratio;
use pore::{fit_bias, generate_corpus, mean_attention_profile, BiasForm, SynthSpec};

fn main() -> pore::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let n = 576;
    let spec = SynthSpec {
        bias_b: rate_for_end_ratio(n, 3.0),
        noise_rel: 0.02,
        ..SynthSpec::new(n, 300, 1)
    };
    let mean = mean_attention_profile(generate_corpus(&spec)?.map(|s| s.trace))?;
    let bias = fit_bias(&mean, BiasForm::Exp2)?;
    let reweighted: Vec<f64> = mean
        .mean_scores()
        .iter()
        .zip(bias.curve())
        .map(|(m, p)| m / p)
        .collect();

    for (name, values) in [("raw", mean.mean_scores()), ("reweighted", &reweighted[..])] {
        let path = dir.join(format!("heatmap_{name}.csv"));
        grid_heatmap_export(values, 24, 24, &path)?;
        let top: f64 = values[..24].iter().sum::<f64>() / 24.0;
        let bottom: f64 = values[n - 24..].iter().sum::<f64>() / 24.0;
        println!(
            "{}: bottom/top row ratio {:.3}",
            path.display(),
            bottom / top
        );
    }
    Ok(())
}
