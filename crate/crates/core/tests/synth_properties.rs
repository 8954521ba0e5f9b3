//! Statistical behavior of the synthetic corpora and the pruning criteria on them.

use pore::eval::{grid_heatmap, positional_slope, EvalAccumulator};
use pore::synth::{rate_for_end_ratio, toy_attention_trace};
use pore::{
    fit_bias, generate_corpus, mean_attention_profile, prune, BiasForm, BiasProfile, PruneConfig,
    PruneMethod, SynthSample, SynthSpec,
};

fn planted_spec(n: usize, samples: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n,
        samples,
        bias_b: rate_for_end_ratio(n, 3.0),
        bias_c: 0.0,
        salient_k: 32,
        salience_gain: 4.0,
        noise_rel: 0.02,
        seed,
    }
}

fn corpus(spec: &SynthSpec) -> Vec<SynthSample> {
    generate_corpus(spec).unwrap().collect()
}

fn fitted(corpus: &[SynthSample]) -> BiasProfile {
    let mean = mean_attention_profile(corpus.iter().map(|s| &s.trace)).unwrap();
    fit_bias(&mean, BiasForm::Exp2).unwrap()
}

#[test]
fn dividing_out_the_planted_bias_recovers_content() {
    for (b, c) in [(0.004, 0.0), (-0.003, 0.5), (0.0, 0.0)] {
        let spec = SynthSpec {
            bias_b: b,
            bias_c: c,
            ..SynthSpec::new(144, 40, 9)
        };
        let bias = spec.planted_bias();
        let samples = corpus(&spec);
        for s in &samples {
            let divided: Vec<f64> = s
                .trace
                .scores()
                .iter()
                .zip(&bias)
                .map(|(t, p)| t / p)
                .collect();
            let dsum: f64 = divided.iter().sum();
            let csum: f64 = s.content_scores.iter().sum();
            for (d, c) in divided.iter().zip(&s.content_scores) {
                assert!((d / dsum - c / csum).abs() < 1e-9);
            }
        }
        // the per-sample factor trace/content is proportional to the planted bias
        for s in &samples {
            let r0 = s.trace.scores()[0] / s.content_scores[0] / bias[0];
            for ((t, c), p) in s.trace.scores().iter().zip(&s.content_scores).zip(&bias) {
                assert!((t / c / p / r0 - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn fitted_rate_recovers_planted_rate_across_seeds() {
    let n = 576;
    for seed in 0..20 {
        let spec = SynthSpec {
            salient_k: 0,
            ..planted_spec(n, 500, seed)
        };
        let fit = fitted(&corpus(&spec));
        let rel = (fit.b() - spec.bias_b).abs() / spec.bias_b;
        assert!(
            rel < 0.10,
            "seed {seed}: fitted {} vs planted {}",
            fit.b(),
            spec.bias_b
        );
    }
}

#[test]
fn fastv_overrepresents_late_tokens_and_pore_does_not() {
    let n = 576;
    let samples = corpus(&planted_spec(n, 200, 2024));
    let bias = fitted(&samples);
    let share = |cfg: &PruneConfig| {
        let (mut late, mut total) = (0usize, 0usize);
        for s in &samples {
            let d = prune(&s.trace, cfg).unwrap();
            late += d.kept.iter().filter(|&&i| i >= 3 * n / 4).count();
            total += d.kept.len();
        }
        late as f64 / total as f64
    };
    let fastv = share(&PruneConfig::fastv(0.778).unwrap());
    let pore = share(&PruneConfig::pore(0.778, bias).unwrap());
    assert!(fastv > 0.35, "fastv late share {fastv}");
    assert!((pore - 0.25).abs() < 0.02, "pore late share {pore}");
}

#[test]
fn pore_ranks_content_at_least_as_well_as_fastv() {
    for seed in 0..20 {
        let spec = SynthSpec {
            noise_rel: 0.05,
            ..planted_spec(256, 60, 100 + seed)
        };
        let samples = corpus(&spec);
        let bias = fitted(&samples);
        let run = |cfg: PruneConfig| {
            let mut acc = EvalAccumulator::new(cfg.method(), cfg.ratio());
            for s in &samples {
                acc.push(&prune(&s.trace, &cfg).unwrap(), &s.content_scores)
                    .unwrap();
            }
            acc.finish().unwrap()
        };
        let fastv = run(PruneConfig::fastv(0.75).unwrap());
        let pore = run(PruneConfig::pore(0.75, bias).unwrap());
        assert_eq!(fastv.method, PruneMethod::FastV);
        assert!(
            pore.rank_corr >= fastv.rank_corr,
            "seed {seed}: pore {} < fastv {}",
            pore.rank_corr,
            fastv.rank_corr
        );
        assert!(pore.positional_slope.abs() < fastv.positional_slope.abs());
    }
}

#[test]
fn self_fitted_profile_is_flat_after_division() {
    let samples = corpus(&planted_spec(576, 200, 77));
    let mean = mean_attention_profile(samples.iter().map(|s| &s.trace)).unwrap();
    let bias = fitted(&samples);
    let divided: Vec<f64> = mean
        .mean_scores()
        .iter()
        .zip(bias.curve())
        .map(|(m, p)| m / p)
        .collect();
    assert!(positional_slope(&divided).unwrap().abs() < 0.05);
    assert!(positional_slope(mean.mean_scores()).unwrap() > 0.5);
}

#[test]
fn heatmap_of_recency_biased_corpus_is_heavier_at_the_bottom() {
    let samples = corpus(&planted_spec(576, 100, 5));
    let mean = mean_attention_profile(samples.iter().map(|s| &s.trace)).unwrap();
    let grid = grid_heatmap(mean.mean_scores(), 24, 24).unwrap();
    let row_mean = |r: &Vec<f64>| r.iter().sum::<f64>() / r.len() as f64;
    assert!(row_mean(&grid[23]) > row_mean(&grid[0]));

    let bias = fitted(&samples);
    let divided: Vec<f64> = mean
        .mean_scores()
        .iter()
        .zip(bias.curve())
        .map(|(m, p)| m / p)
        .collect();
    let flat = grid_heatmap(&divided, 24, 24).unwrap();
    let spread = (row_mean(&flat[23]) - row_mean(&flat[0])).abs();
    assert!(spread < (row_mean(&grid[23]) - row_mean(&grid[0])) / 5.0);
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[test]
fn toy_argmax_moves_later_as_positional_slope_grows() {
    let (n, d) = (64, 16);
    let slopes = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 10.0];
    // single head: argmax of l_i + s*i is nondecreasing in s for every seed
    for seed in 0..100 {
        let idx: Vec<usize> = slopes
            .iter()
            .map(|&s| argmax(toy_attention_trace(n, d, 1, s, seed).unwrap().scores()))
            .collect();
        assert!(idx.windows(2).all(|w| w[0] <= w[1]), "seed {seed}: {idx:?}");
    }
    // head-averaged: the mean over seeds is nondecreasing
    let means: Vec<f64> = slopes
        .iter()
        .map(|&s| {
            (0..100u64)
                .map(|seed| argmax(toy_attention_trace(n, d, 4, s, seed).unwrap().scores()) as f64)
                .sum::<f64>()
                / 100.0
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
    assert_eq!(*means.last().unwrap(), (n - 1) as f64);
}
