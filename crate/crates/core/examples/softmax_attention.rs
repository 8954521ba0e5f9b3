//! Last-token attention of a random layer, with and without a positional
//! logit ramp, averaged over heads.

use pore::attention::attention_with_offsets;
use pore::synth::toy_blocks;
use pore::{average_heads, last_token_attention, QueryKeyBlock};

fn main() -> pore::Result<()> {
    let block = QueryKeyBlock::from_rows(
        vec![1.0, 0.0],
        &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]],
    )?;
    println!(
        "3-token block: {:?}",
        last_token_attention(&block)?.scores()
    );

    let (n, d, heads) = (16, 8, 4);
    let blocks = toy_blocks(n, d, heads, 7)?;
    for slope in [0.0, 0.1, 0.5] {
        let offsets: Vec<f64> = (0..n).map(|i| slope * i as f64).collect();
        let per_head = blocks
            .iter()
            .map(|b| attention_with_offsets(b, Some(&offsets)))
            .collect::<pore::Result<Vec<_>>>()?;
        let avg = average_heads(&per_head)?;
        let first: f64 = avg.scores()[..n / 2].iter().sum();
        println!(
            "slope {slope:>4}: mass on first half {first:.3}, last half {:.3}",
            1.0 - first
        );
    }
    Ok(())
}
