//! Fits both bias forms to the mean attention of a corpus with a planted
//! recency bias and reports how close the fits land.

use pore::{fit_bias, generate_corpus, mean_attention_profile, BiasForm, SynthSpec};

fn main() -> pore::Result<()> {
    let spec = SynthSpec {
        bias_b: 0.003,
        bias_c: 0.4,
        noise_rel: 0.02,
        ..SynthSpec::new(576, 500, 11)
    };
    let mean = mean_attention_profile(generate_corpus(&spec)?.map(|s| s.trace))?;
    let planted = spec.planted_bias();
    let planted_mean = planted.iter().sum::<f64>() / planted.len() as f64;

    for form in [BiasForm::Exp2, BiasForm::Exp3] {
        let bias = fit_bias(&mean, form)?;
        let worst = bias
            .curve()
            .iter()
            .zip(&planted)
            .map(|(f, p)| (f - p / planted_mean).abs() / (p / planted_mean))
            .fold(0.0, f64::max);
        println!(
            "{form}: a={:.4} b={:.5} c={:.4} residual={:.2e} worst relative gap to planted={:.2}%",
            bias.a(),
            bias.b(),
            bias.c(),
            bias.residual(),
            100.0 * worst
        );
    }
    println!("planted: b={} c={}", spec.bias_b, spec.bias_c);
    Ok(())
}
