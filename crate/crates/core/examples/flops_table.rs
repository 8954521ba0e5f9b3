//! Prefill cost of a LLaVA-1.5-7B-shaped decoder across pruning ratios and
//! prune layers.

use pore::{ratio_table, CostConfig};

fn main() -> pore::Result<()> {
    let ratios = [0.0, 0.5, 0.75, 0.778, 0.9];
    for layer in [2, 8] {
        let cfg = CostConfig {
            prune_layer: layer,
            ..CostConfig::llava_like()
        };
        println!("prune after layer {layer}");
        println!(
            "{:>6} {:>8} {:>10} {:>8}",
            "ratio", "retained", "TFLOPs", "fraction"
        );
        for row in ratio_table(&cfg, &ratios)? {
            println!(
                "{:>6} {:>8} {:>10.3} {:>8.3}",
                row.ratio,
                row.retained,
                row.flops / 1e12,
                row.fraction
            );
        }
    }
    Ok(())
}
