use proptest::prelude::*;

use removal_explain::estimation::{shapley_sampled, EstimateResult, EstimatorConfig};
use removal_explain::game::{excess, TabulatedGame};
use removal_explain::summaries::{
    banzhaf_exact, mean_when_included_exact, select_fixed_size, select_min_size, select_min_size_greedy,
    shapley_exact, wls_fit, AttributionResult, Regularizer, WeightingKernel,
};
use removal_explain::{CooperativeGame, Mask};

fn game() -> impl Strategy<Value = TabulatedGame> {
    (1usize..=7).prop_flat_map(|d| {
        prop::collection::vec(-10.0f64..10.0, 1 << d).prop_map(move |v| TabulatedGame::new(d, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shapley_is_efficient(g in game()) {
        let d = g.players();
        let phi = shapley_exact(&g).unwrap().values;
        let gap = phi.iter().sum::<f64>() - (g.get(Mask::full(d)) - g.get(Mask::empty(d)));
        prop_assert!(gap.abs() <= 1e-10);
    }

    #[test]
    fn shapley_kernel_fit_matches_exact(g in game()) {
        let fit = wls_fit(&g, &WeightingKernel::Shapley, Regularizer::None).unwrap();
        let exact = shapley_exact(&g).unwrap();
        for (a, b) in fit.values.iter().zip(&exact.values) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn shifting_the_game_keeps_attributions(g in game(), c in -5.0f64..5.0) {
        let d = g.players();
        let shifted = TabulatedGame::new(d, g.values().iter().map(|v| v + c).collect()).unwrap();
        for (a, b) in [
            (shapley_exact(&g).unwrap(), shapley_exact(&shifted).unwrap()),
            (banzhaf_exact(&g).unwrap(), banzhaf_exact(&shifted).unwrap()),
        ] {
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn mean_when_included_of_additive_game(w in prop::collection::vec(-3.0f64..3.0, 1..7)) {
        let d = w.len();
        let values = (0..1u64 << d)
            .map(|s| (0..d).filter(|i| s & (1 << i) != 0).map(|i| w[i]).sum())
            .collect();
        let g = TabulatedGame::new(d, values).unwrap();
        let m = mean_when_included_exact(&g).unwrap().values;
        let total: f64 = w.iter().sum();
        for i in 0..d {
            let expected = w[i] + (total - w[i]) / 2.0;
            prop_assert!((m[i] - expected).abs() <= 1e-10);
        }
    }

    #[test]
    fn excess_at_grand_coalition_matches_definition(g in game()) {
        let d = g.players();
        let phi = shapley_exact(&g).unwrap().values;
        let e = excess(&g, Mask::full(d), &phi).unwrap();
        prop_assert!((e - (g.get(Mask::full(d)) - phi.iter().sum::<f64>())).abs() <= 1e-12);
    }

    #[test]
    fn min_size_selection_is_minimal(g in game(), t in -5.0f64..5.0) {
        let d = g.players();
        if let Ok(sel) = select_min_size(&g, t) {
            prop_assert!(g.get(sel.subset) >= t - 1e-12);
            let smaller = (0..1u64 << d)
                .map(|b| Mask::from_bits(b, d).unwrap())
                .filter(|s| s.len() < sel.subset.len())
                .any(|s| g.get(s) >= t);
            prop_assert!(!smaller);
            if let Ok(greedy) = select_min_size_greedy(&g, t) {
                prop_assert!(greedy.subset.len() >= sel.subset.len());
            }
        }
    }

    #[test]
    fn fixed_size_selection_is_optimal(g in game(), k in 0usize..8) {
        let d = g.players();
        let k = k.min(d);
        let sel = select_fixed_size(&g, k).unwrap();
        prop_assert_eq!(sel.subset.len(), k);
        let best = (0..1u64 << d)
            .map(|b| Mask::from_bits(b, d).unwrap())
            .filter(|s| s.len() == k)
            .map(|s| g.get(s))
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(g.get(sel.subset), best);
    }

    #[test]
    fn attribution_json_roundtrip_is_exact(values in prop::collection::vec(-1e6f64..1e6, 1..10)) {
        let a = AttributionResult::new("shapley", values, 7);
        let back: AttributionResult = serde_json::from_str(&a.to_json()).unwrap();
        prop_assert_eq!(a, back);
    }
}

#[test]
fn estimate_json_roundtrip_is_exact() {
    let g = TabulatedGame::new(4, (0..16).map(|s| (s as f64).sqrt() / 3.0).collect()).unwrap();
    let est = shapley_sampled(&g, &EstimatorConfig::with_seed(3)).unwrap();
    let back: EstimateResult = serde_json::from_str(&serde_json::to_string(&est).unwrap()).unwrap();
    assert_eq!(est, back);
}
