use causal_testbed::covariates::{generate_preset, standardize, Preset, Standardized};
use causal_testbed::dgp::{build_dgp, realize, DgpConfig, Knobs, RealizeOptions, SETTINGS};
use causal_testbed::estimators::{
    entropy_balance, nearest_matches, BalanceOptions, Method,
};
use causal_testbed::eval::{pehe, summarize, EstimateRow, TruthRow};
use causal_testbed::metrics::{mahalanobis_counterfactual_distance, mean_imbalance, r2_linear};
use causal_testbed::stats::{mean, pop_sd, variance};
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::sync::OnceLock;

fn desk() -> &'static Standardized {
    static X: OnceLock<Standardized> = OnceLock::new();
    X.get_or_init(|| standardize(&generate_preset(Preset::Desk, 1).unwrap()))
}

fn finite() -> impl Strategy<Value = f64> {
    -1e3..1e3f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn variance_is_nonnegative_and_shift_invariant(v in prop::collection::vec(finite(), 2..40), c in finite()) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        prop_assert!(variance(&v) >= 0.0);
        let scale = variance(&v).max(1.0);
        prop_assert!((variance(&v) - variance(&shifted)).abs() <= 1e-9 * scale);
    }

    #[test]
    fn constants_have_zero_spread(x in finite(), n in 1usize..50) {
        prop_assert_eq!(pop_sd(&vec![x; n]), 0.0);
    }

    #[test]
    fn knob_names_round_trip(id in 1usize..=77) {
        let k = SETTINGS[id - 1];
        let text = [
            k.treatment_model.name(),
            k.treated_share.name(),
            k.overlap.name(),
            k.response_model.name(),
            k.alignment.name(),
            k.heterogeneity.name(),
        ]
        .join(" ");
        prop_assert_eq!(text.parse::<Knobs>().unwrap(), k);
    }

    #[test]
    fn realizations_are_consistent(id in 1usize..=77, seed in 0u64..1000) {
        let x = desk();
        let spec = build_dgp(Knobs::setting(id).unwrap(), x, seed, &DgpConfig::default()).unwrap();
        let r = realize(&spec, x, seed + 1, RealizeOptions::default()).unwrap();
        for i in 0..r.n() {
            let want = if r.observed.z[i] { r.truth.y1[i] } else { r.truth.y0[i] };
            prop_assert_eq!(r.observed.y[i], want);
            if r.observed.z[i] {
                prop_assert!(r.truth.e[i] > 0.0 && !r.penalized[i]);
            }
        }
    }

    #[test]
    fn r2_stays_in_the_unit_interval(
        cells in prop::collection::vec(finite(), 60),
        y in prop::collection::vec(finite(), 20),
    ) {
        let x = DMatrix::from_column_slice(20, 3, &cells);
        let v = r2_linear(&y, &x).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn distances_are_nonnegative_and_translation_invariant(
        cells in prop::collection::vec(-5.0..5.0f64, 60),
        shift in -5.0..5.0f64,
    ) {
        let x = DMatrix::from_column_slice(20, 3, &cells);
        let z: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let moved = x.add_scalar(shift);
        let (a, b) = (mean_imbalance(&x, &z).unwrap(), mean_imbalance(&moved, &z).unwrap());
        prop_assert!(a >= 0.0 && (a - b).abs() < 1e-9);
        let m = mahalanobis_counterfactual_distance(&x, &z).unwrap();
        let mm = mahalanobis_counterfactual_distance(&moved, &z).unwrap();
        prop_assert!(m >= 0.0 && (m - mm).abs() < 1e-6 * m.max(1.0));
    }

    #[test]
    fn matches_are_nearest_controls(
        score in prop::collection::vec(-3.0..3.0f64, 4..40),
        mask in prop::collection::vec(any::<bool>(), 40),
    ) {
        let mut z: Vec<bool> = mask[..score.len()].to_vec();
        z[0] = true;
        z[1] = false;
        let m = nearest_matches(&score, &z).unwrap();
        let treated: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
        for (k, &t) in treated.iter().enumerate() {
            let d = (score[m[k]] - score[t]).abs();
            prop_assert!(!z[m[k]]);
            for j in (0..z.len()).filter(|&j| !z[j]) {
                prop_assert!(d <= (score[j] - score[t]).abs());
            }
        }
    }

    #[test]
    fn entropy_weights_balance_interior_targets(
        cells in prop::collection::vec(-2.0..2.0f64, 60),
        mix in prop::collection::vec(0.05..1.0f64, 30),
    ) {
        let c = DMatrix::from_column_slice(30, 2, &cells);
        // Targets as a strictly positive mixture of the rows lie inside the hull.
        let total: f64 = mix.iter().sum();
        let targets: Vec<f64> = (0..2)
            .map(|j| (0..30).map(|i| mix[i] * c[(i, j)]).sum::<f64>() / total)
            .collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let s = entropy_balance(&c, &targets, &[1.0; 30], &names, &BalanceOptions::default()).unwrap();
        prop_assert!(s.max_violation <= 1e-8);
        prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
        prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..2 {
            let got: f64 = (0..30).map(|i| s.weights[i] * c[(i, j)]).sum();
            prop_assert!((got - targets[j]).abs() <= 1e-8);
        }
    }

    #[test]
    fn pehe_splits_into_offset_and_spread(
        tau in prop::collection::vec(-3.0..3.0f64, 2..50),
        guess in -3.0..3.0f64,
    ) {
        let got = pehe(&vec![guess; tau.len()], &tau).unwrap();
        let want = ((guess - mean(&tau)).powi(2) + pop_sd(&tau).powi(2)).sqrt();
        prop_assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn summaries_respect_their_invariants(
        errs in prop::collection::vec((-2.0..2.0f64, 0.0..1.0f64), 1..60),
    ) {
        let mut est = Vec::new();
        let mut tr = Vec::new();
        for (i, &(e, half)) in errs.iter().enumerate() {
            tr.push(TruthRow { setting: 1, replication: i + 1, satt: 0.7 });
            est.push(EstimateRow {
                setting: 1,
                replication: i + 1,
                method: Method::IpwRaDr,
                satt_hat: Some(0.7 + e),
                lo: Some(0.7 + e - half),
                hi: Some(0.7 + e + half),
                pehe: Some(half),
                error: None,
                wall_time: None,
            });
        }
        let s = summarize(&est, &tr).unwrap();
        let m = &s.methods[0];
        prop_assert!(m.rmse.unwrap() + 1e-12 >= m.bias.unwrap().abs());
        prop_assert!((0.0..=1.0).contains(&m.coverage.unwrap()));
        prop_assert!(m.mean_interval_length.unwrap() >= 0.0);
        prop_assert!(m.mean_pehe.unwrap() >= 0.0);
        prop_assert!(m.bias_iqr().unwrap() >= 0.0);
    }
}
