//! Prunes a single trace with both criteria and shows where the kept tokens
//! fall on the image grid.

use pore::synth::rate_for_end_ratio;
use pore::{
    fit_bias, generate_corpus, mean_attention_profile, prune, BiasForm, PruneConfig, SynthSpec,
};

fn main() -> pore::Result<()> {
    let n = 144;
    let spec = SynthSpec {
        bias_b: rate_for_end_ratio(n, 8.0),
        salient_k: 12,
        salience_gain: 3.0,
        ..SynthSpec::new(n, 300, 3)
    };
    let corpus: Vec<_> = generate_corpus(&spec)?.collect();
    let bias = fit_bias(
        &mean_attention_profile(corpus.iter().map(|s| &s.trace))?,
        BiasForm::Exp2,
    )?;
    let sample = &corpus[0];

    for cfg in [PruneConfig::fastv(0.9)?, PruneConfig::pore(0.9, bias)?] {
        let d = prune(&sample.trace, &cfg)?;
        let hits = d
            .kept
            .iter()
            .filter(|i| sample.planted_salient.contains(i))
            .count();
        println!(
            "{} keeps {} tokens, {hits} of them planted:",
            d.method,
            d.retain_k()
        );
        for r in 0..12 {
            let row: String = (0..12)
                .map(|c| {
                    let i = r * 12 + c;
                    match (d.kept.contains(&i), sample.planted_salient.contains(&i)) {
                        (true, true) => '#',
                        (true, false) => 'o',
                        (false, true) => '.',
                        (false, false) => ' ',
                    }
                })
                .collect();
            println!("  |{row}|");
        }
    }
    println!("# kept planted, o kept other, . dropped planted");
    Ok(())
}
