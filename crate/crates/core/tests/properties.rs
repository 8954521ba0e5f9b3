use proptest::collection::vec;
use proptest::prelude::*;

use pore::attention::{attention_with_offsets, softmax};
use pore::bias::MeanAccumulator;
use pore::eval::spearman;
use pore::{
    average_heads, fit_bias, flops_estimate, last_token_attention, mean_attention_profile, prune,
    renormalize, retained_count, AttentionTrace, BiasForm, BiasProfile, CostConfig, MeanProfile,
    PruneConfig, QueryKeyBlock,
};

fn normalized(raw: &[f64]) -> AttentionTrace {
    renormalize(raw).unwrap()
}

fn block_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (1usize..=8, 1usize..=4)
        .prop_flat_map(|(n, d)| (vec(-5.0f64..5.0, d), vec(vec(-5.0f64..5.0, d), n)))
}

fn trace_strategy(max_n: usize) -> impl Strategy<Value = AttentionTrace> {
    vec(0.001f64..1.0, 1..=max_n).prop_map(|raw| normalized(&raw))
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(logits in vec(-30.0f64..30.0, 1..16), shift in -100.0f64..100.0) {
        let base = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        for (a, b) in base.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300).max(b));
        }
    }

    #[test]
    fn constant_offsets_do_not_change_attention((q, keys) in block_strategy(), shift in -50.0f64..50.0) {
        let block = QueryKeyBlock::from_rows(q, &keys).unwrap();
        let plain = last_token_attention(&block).unwrap();
        let offsets = vec![shift; block.n()];
        let moved = attention_with_offsets(&block, Some(&offsets)).unwrap();
        for (a, b) in plain.scores().iter().zip(moved.scores()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(*b));
        }
    }

    #[test]
    fn attention_matches_naive_softmax((q, keys) in block_strategy()) {
        let block = QueryKeyBlock::from_rows(q.clone(), &keys).unwrap();
        let got = last_token_attention(&block).unwrap();
        let d = q.len() as f64;
        let exps: Vec<f64> = keys
            .iter()
            .map(|k| (k.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / d.sqrt()).exp())
            .collect();
        let total: f64 = exps.iter().sum();
        for (g, e) in got.scores().iter().zip(&exps) {
            let want = e / total;
            prop_assert!((g - want).abs() / want < 1e-12);
        }
        let sum: f64 = got.scores().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn head_averaging_commutes_with_renormalize(heads in (1usize..12).prop_flat_map(|n| vec(vec(0.001f64..1.0, n), 1..5))) {
        let traces: Vec<AttentionTrace> = heads.iter().map(|h| normalized(h)).collect();
        let avg = average_heads(&traces).unwrap();
        let renormed: Vec<AttentionTrace> = traces.iter().map(|t| renormalize(t.scores()).unwrap()).collect();
        let avg2 = renormalize(average_heads(&renormed).unwrap().scores()).unwrap();
        for (a, b) in avg.scores().iter().zip(avg2.scores()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // independent summation oracle
        let h = traces.len() as f64;
        for i in 0..avg.n() {
            let mut s = 0.0;
            for t in &traces { s += t.scores()[i]; }
            prop_assert!((avg.scores()[i] - s / h).abs() < 1e-12);
        }
    }

    #[test]
    fn streaming_mean_matches_two_pass_and_partitions(
        rows in (1usize..20).prop_flat_map(|n| vec(vec(0.001f64..1.0, n), 1..30)),
        cut in 0usize..30,
    ) {
        let traces: Vec<AttentionTrace> = rows.iter().map(|r| normalized(r)).collect();
        let streamed = mean_attention_profile(&traces).unwrap();
        let m = traces.len() as f64;
        for i in 0..streamed.n() {
            let two_pass = traces.iter().map(|t| t.scores()[i]).sum::<f64>() / m;
            prop_assert!((streamed.mean_scores()[i] - two_pass).abs() < 1e-12);
        }
        let sum: f64 = streamed.mean_scores().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        prop_assert_eq!(streamed.m_samples(), traces.len());

        let cut = cut.min(traces.len());
        let mut left = MeanAccumulator::new();
        let mut right = MeanAccumulator::new();
        traces[..cut].iter().for_each(|t| left.push(t).unwrap());
        traces[cut..].iter().for_each(|t| right.push(t).unwrap());
        let merged = right.merge(left).unwrap().finish().unwrap();
        for (a, b) in merged.mean_scores().iter().zip(streamed.mean_scores()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exp2_recovers_any_rate(a in 0.01f64..100.0, b in -0.02f64..=0.02) {
        let n = 576;
        let raw: Vec<f64> = (0..n).map(|i| a * (b * i as f64).exp()).collect();
        let total: f64 = raw.iter().sum();
        let profile = MeanProfile::new(raw.iter().map(|v| v / total).collect(), 500).unwrap();
        let fit = fit_bias(&profile, BiasForm::Exp2).unwrap();
        prop_assert!((fit.b() - b).abs() < 1e-6);
        let mean = fit.curve().iter().sum::<f64>() / n as f64;
        prop_assert!((mean - 1.0).abs() < 1e-9);

        let exp3 = fit_bias(&profile, BiasForm::Exp3).unwrap();
        prop_assert!((exp3.b() - fit.b()).abs() < 1e-6);
        let mean3 = exp3.curve().iter().sum::<f64>() / n as f64;
        prop_assert!((mean3 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_bias_matches_fastv(trace in trace_strategy(64), ratio in 0.0f64..0.99) {
        let flat = BiasProfile::flat(trace.n()).unwrap();
        let a = prune(&trace, &PruneConfig::fastv(ratio).unwrap()).unwrap();
        let b = prune(&trace, &PruneConfig::pore(ratio, flat).unwrap()).unwrap();
        prop_assert_eq!(a.kept, b.kept);
    }

    #[test]
    fn higher_ratio_keeps_a_subset(trace in trace_strategy(64), r1 in 0.0f64..0.99, r2 in 0.0f64..0.99, b in -0.02f64..0.02) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let bias = BiasProfile::new(BiasForm::Exp2, 1.0, b, 0.0, trace.n(), 0.0, false).unwrap();
        for make in [
            |r: f64, _: &BiasProfile| PruneConfig::fastv(r).unwrap(),
            |r: f64, p: &BiasProfile| PruneConfig::pore(r, p.clone()).unwrap(),
        ] {
            let wide = prune(&trace, &make(lo, &bias)).unwrap();
            let narrow = prune(&trace, &make(hi, &bias)).unwrap();
            prop_assert!(narrow.kept.iter().all(|i| wide.kept.contains(i)));
        }
    }

    #[test]
    fn prune_matches_sorting_oracle(levels in vec(0u8..4, 1..=10), ratio in 0.0f64..0.99) {
        // few distinct levels force duplicated scores
        let raw: Vec<f64> = levels.iter().map(|&l| 1.0 + l as f64).collect();
        let trace = normalized(&raw);
        let decision = prune(&trace, &PruneConfig::fastv(ratio).unwrap()).unwrap();
        let k = retained_count(trace.n(), ratio).unwrap();
        let mut pairs: Vec<(f64, usize)> = trace.scores().iter().copied().zip(0..).collect();
        pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
        let mut expected: Vec<usize> = pairs[..k].iter().map(|p| p.1).collect();
        expected.sort_unstable();
        prop_assert_eq!(&decision.kept, &expected);
        prop_assert!(decision.kept.windows(2).all(|w| w[0] < w[1]));
        let kept_min = decision.kept.iter().map(|&i| trace.scores()[i]).fold(f64::INFINITY, f64::min);
        let dropped_max = (0..trace.n())
            .filter(|i| !decision.kept.contains(i))
            .map(|i| trace.scores()[i])
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(kept_min >= dropped_max);
    }

    #[test]
    fn spearman_is_bounded(x in vec(-10.0f64..10.0, 2..40), seed in any::<u64>()) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v * 1.7 + (seed ^ i as u64) as f64 % 5.0).round()).collect();
        let s = spearman(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s.rho));
    }

    #[test]
    fn flops_monotone_in_shape_and_ratio(
        layers in 1usize..48, d_model in 1usize..8192, d_ffn in 1usize..16384,
        n_visual in 1usize..1024, n_text in 1usize..256, k_frac in 0.0f64..=1.0,
        r1 in 0.0f64..0.99, r2 in 0.0f64..0.99, bump in 1usize..64,
    ) {
        let prune_layer = ((layers as f64) * k_frac) as usize;
        let cfg = CostConfig { layers, d_model, d_ffn, n_visual, n_text, prune_layer, ratio: r1.min(r2) };
        let base = flops_estimate(&cfg).unwrap();
        prop_assert!(flops_estimate(&cfg.with_ratio(r1.max(r2))).unwrap() <= base);
        for grown in [
            CostConfig { d_model: d_model + bump, ..cfg.clone() },
            CostConfig { d_ffn: d_ffn + bump, ..cfg.clone() },
            CostConfig { n_visual: n_visual + bump, ..cfg.clone() },
            CostConfig { n_text: n_text + bump, ..cfg.clone() },
            CostConfig { layers: layers + bump, ..cfg.clone() },
            CostConfig { prune_layer: (prune_layer + bump).min(layers), ..cfg.clone() },
        ] {
            prop_assert!(flops_estimate(&grown).unwrap() >= base);
        }
    }

    #[test]
    fn small_flops_configs_match_symbolic_expansion(
        layers in 1usize..5, d in 1usize..9, m in 1usize..17, nv in 1usize..20, nt in 1usize..5,
        k in 0usize..5, ratio in 0.0f64..0.99,
    ) {
        let k = k.min(layers);
        let cfg = CostConfig { layers, d_model: d, d_ffn: m, n_visual: nv, n_text: nt, prune_layer: k, ratio };
        let kept = ((nv as f64) * (1.0 - ratio) + 0.5).floor().clamp(1.0, nv as f64) as u64;
        let per = |n: u64| {
            let (d, m) = (d as u64, m as u64);
            4 * n * d * d + 2 * n * n * d + 2 * n * d * m
        };
        let expected = k as u64 * per((nv + nt) as u64) + (layers - k) as u64 * per(kept + nt as u64);
        let got = flops_estimate(&cfg).unwrap();
        prop_assert!((got - expected as f64).abs() <= 1e-9 * expected as f64);
    }
}

#[test]
fn equal_retained_counts_give_equal_flops() {
    let base = CostConfig::llava_like();
    // both keep 115 of 576
    let (r1, r2) = (0.7995, 0.7999);
    assert_eq!(
        retained_count(576, r1).unwrap(),
        retained_count(576, r2).unwrap()
    );
    assert_eq!(
        flops_estimate(&base.with_ratio(r1)).unwrap(),
        flops_estimate(&base.with_ratio(r2)).unwrap()
    );
}
