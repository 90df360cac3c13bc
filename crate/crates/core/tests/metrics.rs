mod common;

use causal_testbed::covariates::Preset;
use causal_testbed::dgp::{
    Alignment, DgpConfig, DgpSpec, Knobs, Observed, Overlap, Realization, Truth,
};
use causal_testbed::estimators::{
    fit_propensity, flexible_fit, EstimatorInput, EstimatorOptions,
};
use causal_testbed::eval::{self, CellKey, Context, Setting};
use causal_testbed::metrics::{
    alignment_correlation, describe, heterogeneity_sd, mahalanobis_counterfactual_distance,
    mahalanobis_with_covariance, mean_imbalance, metric_columns, nonoracle_alignment_proxy,
    observable_metrics, propensity_r2, r2_linear, read_metrics_csv, sinkhorn_cost,
    wasserstein_distance, write_metrics_csv, MetricOptions, SinkhornOptions,
};
use causal_testbed::stats::{logit, pop_sd};
use common::{bernoulli, hungarian, normals, rng, sigmoid, sq_cost};
use nalgebra::DMatrix;
use rand::Rng;

fn random_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    normals(&mut rng(seed), n, p)
}

fn normal_vec(seed: u64, n: usize) -> Vec<f64> {
    normals(&mut rng(seed), n, 1).as_slice().to_vec()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 { s[k / 2] } else { 0.5 * (s[k / 2 - 1] + s[k / 2]) }
}

/// Least squares by Gaussian elimination on the normal equations.
fn ols_r2(y: &[f64], x: &DMatrix<f64>) -> f64 {
    let (n, p) = (x.nrows(), x.ncols() + 1);
    let row = |i: usize, j: usize| if j == 0 { 1.0 } else { x[(i, j - 1)] };
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..n {
        for j in 0..p {
            for k in 0..p {
                a[j][k] += row(i, j) * row(i, k);
            }
            a[j][p] += row(i, j) * y[i];
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|j| a[j][p] / a[j][j]).collect();
    let m = y.iter().sum::<f64>() / n as f64;
    let (mut sse, mut sst) = (0.0, 0.0);
    for i in 0..n {
        let fit: f64 = (0..p).map(|j| beta[j] * row(i, j)).sum();
        sse += (y[i] - fit).powi(2);
        sst += (y[i] - m).powi(2);
    }
    1.0 - sse / sst
}

#[test]
fn exact_linear_fit_has_unit_r2() {
    let x = random_design(200, 3, 1);
    let y: Vec<f64> = (0..200).map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 2)]).collect();
    assert!((r2_linear(&y, &x).unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(r2_linear(&[3.0; 200], &x).unwrap(), 0.0);
}

#[test]
fn null_r2_is_small_and_matches_the_oracle() {
    for seed in 0..5 {
        let x = random_design(2000, 5, 10 + seed);
        let y = normal_vec(100 + seed, 2000);
        let got = r2_linear(&y, &x).unwrap();
        assert!((got - ols_r2(&y, &x)).abs() < 1e-10);
        assert!(got <= 0.02, "{got}");
    }
}

#[test]
fn rank_deficient_designs_still_fit() {
    let base = random_design(100, 2, 3);
    let x = DMatrix::from_fn(100, 3, |i, j| if j == 2 { base[(i, 0)] } else { base[(i, j)] });
    let y: Vec<f64> = (0..100).map(|i| base[(i, 0)] + base[(i, 1)]).collect();
    assert!((r2_linear(&y, &x).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn null_propensity_r2_is_small() {
    let x = random_design(2000, 5, 4);
    let mut r = rng(5);
    let z: Vec<bool> = (0..2000).map(|_| r.random::<f64>() < 0.4).collect();
    let got = propensity_r2(&z, &x).unwrap();
    assert!(got.value <= 0.02 && !got.separated, "{got:?}");
}

#[test]
fn separation_reports_one() {
    let x = random_design(300, 2, 6);
    let z: Vec<bool> = (0..300).map(|i| x[(i, 0)] > 0.0).collect();
    let got = propensity_r2(&z, &x).unwrap();
    assert!(got.separated);
    assert_eq!(got.value, 1.0);
}

/// Maximum likelihood for a one-covariate logistic model by plain gradient
/// ascent with a decaying step, run far past convergence.
fn brute_force_logistic(x: &[f64], z: &[bool]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    let mut step = 4.0;
    let loglik = |a: f64, b: f64| -> f64 {
        x.iter()
            .zip(z)
            .map(|(&xi, &zi)| {
                let eta = a + b * xi;
                let l1p = (1.0 + (-eta.abs()).exp()).ln() + eta.max(0.0);
                if zi { eta - l1p } else { -l1p }
            })
            .sum()
    };
    let mut ll = loglik(a, b);
    for _ in 0..20_000 {
        let (mut ga, mut gb) = (0.0, 0.0);
        for (&xi, &zi) in x.iter().zip(z) {
            let r = f64::from(u8::from(zi)) - sigmoid(a + b * xi);
            ga += r;
            gb += r * xi;
        }
        let (na, nb) = (a + step * ga / n, b + step * gb / n);
        let nll = loglik(na, nb);
        if nll >= ll {
            (a, b, ll) = (na, nb, nll);
        } else {
            step *= 0.5;
        }
    }
    let p = z.iter().filter(|&&v| v).count() as f64 / n;
    let null = n * (p * p.ln() + (1.0 - p) * (1.0 - p).ln());
    (a, b, 1.0 - ll / null)
}

#[test]
fn propensity_r2_matches_a_brute_force_mle() {
    let n = 5000;
    let x1 = normal_vec(7, n);
    let mut r = rng(8);
    let z: Vec<bool> = x1.iter().map(|&v| bernoulli(&mut r, sigmoid(2.0 * v))).collect();
    let (_, b, oracle) = brute_force_logistic(&x1, &z);
    assert!((b - 2.0).abs() < 0.2);
    let got = propensity_r2(&z, &DMatrix::from_column_slice(n, 1, &x1)).unwrap();
    assert!((got.value - oracle).abs() <= 0.03, "{} vs {oracle}", got.value);
    assert!((got.value - oracle).abs() < 1e-6);
}

#[test]
fn duplicated_groups_are_at_distance_zero() {
    let base = random_design(30, 3, 9);
    let x = DMatrix::from_fn(60, 3, |i, j| base[(i % 30, j)]);
    let z: Vec<bool> = (0..60).map(|i| i < 30).collect();
    assert!(mahalanobis_counterfactual_distance(&x, &z).unwrap().abs() < 1e-9);
    assert!(mean_imbalance(&x, &z).unwrap().abs() < 1e-12);
}

#[test]
fn identity_covariance_gives_euclidean_distances() {
    let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 3.0, 4.0, 1.0, 1.0]);
    let z = [true, true, false, false];
    let id = DMatrix::identity(2, 2);
    // Nearest opposite neighbours: 0 -> (1,1) at sqrt 2, 1 -> (1,1) at 1,
    // 2 -> (1,0) at sqrt 20, 3 -> (1,0) at 1.
    let want = (2f64.sqrt() + 1.0 + 20f64.sqrt() + 1.0) / 4.0;
    let got = mahalanobis_with_covariance(&x, &z, &id).unwrap();
    assert!((got - want).abs() < 1e-10);
}

#[test]
fn imbalance_arithmetic() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 0.0, 0.0, 0.5, 0.0, -0.5]);
    let got = mean_imbalance(&x, &[true, true, false, false]).unwrap();
    assert!((got - 2f64.sqrt()).abs() < 1e-15);
}

fn exhaustive(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best / cost.len() as f64
}

#[test]
fn hungarian_agrees_with_enumeration() {
    for seed in 0..10 {
        let a = random_design(6, 2, 200 + seed);
        let b = random_design(6, 2, 300 + seed);
        let c = sq_cost(&a, &b);
        assert!((hungarian(&c) - exhaustive(&c)).abs() < 1e-12);
    }
}

#[test]
fn sinkhorn_is_close_to_exact_transport() {
    // Tiny instances with near-tied assignments converge slowly, so the
    // comparison allows a larger budget than the default.
    let opts = SinkhornOptions {
        iterations: 5000,
        ..SinkhornOptions::default()
    };
    for n in 4..=12 {
        for seed in 0..5u64 {
            let a = random_design(n, 3, 1000 + 31 * n as u64 + seed);
            let mut b = random_design(n, 3, 2000 + 31 * n as u64 + seed);
            b.column_mut(0).add_scalar_mut(1.0);
            let exact = hungarian(&sq_cost(&a, &b));
            let approx = sinkhorn_cost(&a, &b, &opts).unwrap();
            let rel = (approx - exact).abs() / exact;
            assert!(rel <= 0.05, "n={n} seed={seed}: {approx} vs {exact}");
        }
    }
}

#[test]
fn singleton_transport_is_the_squared_distance() {
    let opts = SinkhornOptions::default();
    for d in [0.1, 1.0, 7.5] {
        let a = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 3, &[d, 0.0, 0.0]);
        let got = sinkhorn_cost(&a, &b, &opts).unwrap();
        assert!((got - d * d).abs() <= 0.02 * d * d);
    }
}

#[test]
fn identical_sets_sit_at_the_regularization_floor() {
    let a = random_design(10, 3, 11);
    let c = sq_cost(&a, &a);
    assert_eq!(hungarian(&c), 0.0);
    let mean_cost = c.iter().flatten().sum::<f64>() / 100.0;
    let got = sinkhorn_cost(&a, &a, &SinkhornOptions::default()).unwrap();
    assert!(got >= 0.0 && got <= 0.1 * mean_cost, "{got} vs mean cost {mean_cost}");
    // The self terms cancel the regularization floor exactly.
    assert_eq!(got, 0.0);
}

#[test]
fn transport_subsampling_is_seeded() {
    let x = random_design(1300, 2, 12);
    let z: Vec<bool> = (0..1300).map(|i| i % 2 == 0).collect();
    let opts = SinkhornOptions::default();
    let a = wasserstein_distance(&x, &z, 1, &opts).unwrap();
    assert_eq!(a, wasserstein_distance(&x, &z, 1, &opts).unwrap());
    assert_ne!(a, wasserstein_distance(&x, &z, 2, &opts).unwrap());
}

fn toy_realization(e: Vec<f64>, y: Vec<f64>, cate: Vec<f64>) -> Realization {
    let n = e.len();
    let z: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    Realization {
        observed: Observed { z, y: y.clone() },
        truth: Truth {
            e,
            mu0: vec![0.0; n],
            mu1: cate.clone(),
            y0: y.clone(),
            y1: y,
            tau: cate.clone(),
            cate,
        },
        penalized: vec![false; n],
    }
}

#[test]
fn outcome_equal_to_propensity_logit_correlates_perfectly() {
    let e: Vec<f64> = (0..50).map(|i| 0.05 + 0.9 * i as f64 / 49.0).collect();
    let y: Vec<f64> = e.iter().map(|&v| logit(v)).collect();
    let r = toy_realization(e, y, vec![0.0; 50]);
    assert!((alignment_correlation(&r) - 1.0).abs() < 1e-12);
    let flat = toy_realization(vec![0.3; 50], (0..50).map(f64::from).collect(), vec![0.0; 50]);
    assert_eq!(alignment_correlation(&flat), 0.0);
}

#[test]
fn penalized_rows_are_left_out_of_the_alignment_correlation() {
    let e: Vec<f64> = (0..40).map(|i| 0.1 + 0.02 * i as f64).collect();
    let mut y: Vec<f64> = e.iter().map(|&v| logit(v)).collect();
    let mut r = toy_realization(e, y.clone(), vec![0.0; 40]);
    for i in [5, 17, 33] {
        r.penalized[i] = true;
        r.truth.e[i] = 0.0;
        y[i] = 1e6;
    }
    r.truth.y0 = y;
    assert!((alignment_correlation(&r) - 1.0).abs() < 1e-12);
}

#[test]
fn heterogeneity_sd_is_the_direct_ratio() {
    let x1 = normal_vec(13, 400);
    let y = normal_vec(14, 400);
    let (m, s) = (causal_testbed::stats::mean(&y), causal_testbed::stats::sd(&y));
    let y: Vec<f64> = y.iter().map(|v| (v - m) / s).collect();
    let r = toy_realization(vec![0.5; 400], y, x1.clone());
    assert!((heterogeneity_sd(&r) - pop_sd(&x1)).abs() < 1e-12);
    let none = toy_realization(vec![0.5; 400], x1, vec![0.65; 400]);
    assert_eq!(heterogeneity_sd(&none), 0.0);
}

fn cell(ctx: &Context, knobs: Knobs, rep: usize) -> (DgpSpec, Realization) {
    let setting = Setting { id: 1, knobs };
    eval::simulate(&ctx.x, &setting, CellKey::new(1, rep), 3, &DgpConfig::default()).unwrap()
}

#[test]
fn no_alignment_sits_near_zero_correlation() {
    let ctx = Context::new(Preset::Paper, 2).unwrap();
    assert_eq!(ctx.x.rows(), 4802);
    for id in [8, 16] {
        let k = Knobs::setting(id).unwrap();
        assert_eq!(k.alignment, Alignment::None);
        let r: Vec<f64> = (0..20)
            .map(|rep| alignment_correlation(&cell(&ctx, k, rep).1).abs())
            .collect();
        assert!(median(&r) <= 0.1, "setting {id}: {r:?}");
    }
}

#[test]
fn penalized_overlap_pushes_counterfactuals_further_away() {
    let ctx = Context::new(Preset::Desk, 3).unwrap();
    let base = Knobs::setting(1).unwrap();
    let (mut full, mut pen) = (Vec::new(), Vec::new());
    for rep in 0..50 {
        for (overlap, out) in [(Overlap::Full, &mut full), (Overlap::Penalize, &mut pen)] {
            let (spec, r) = cell(&ctx, Knobs { overlap, ..base }, rep);
            let design = spec.ground_truth_design(&ctx.x.matrix);
            let keep = causal_testbed::linalg::varying_columns(&design);
            let design = causal_testbed::linalg::select_columns(&design, &keep);
            out.push(mahalanobis_counterfactual_distance(&design, &r.observed.z).unwrap());
        }
    }
    assert!(median(&pen) > median(&full), "{} vs {}", median(&pen), median(&full));
}

fn proxy(ctx: &Context, r: &Realization, opts: &EstimatorOptions) -> f64 {
    let input = EstimatorInput::new(ctx.x.matrix.clone(), r.observed.z.clone(), r.observed.y.clone())
        .unwrap();
    let tau = flexible_fit(&input, opts).unwrap().effects();
    let e = fit_propensity(&ctx.x.matrix, &r.observed.z).unwrap().fitted;
    nonoracle_alignment_proxy(&tau, &e).unwrap()
}

#[test]
fn alignment_proxy_orders_high_above_none() {
    let ctx = Context::new(Preset::Desk, 4).unwrap();
    let base = Knobs::setting(8).unwrap();
    let opts = EstimatorOptions::default();
    let (mut high, mut none) = (Vec::new(), Vec::new());
    for rep in 0..20 {
        let (_, r) = cell(&ctx, Knobs { alignment: Alignment::High, ..base }, rep);
        high.push(proxy(&ctx, &r, &opts));
        let (_, r) = cell(&ctx, base, rep);
        none.push(proxy(&ctx, &r, &opts));
    }
    assert!(median(&high) >= median(&none), "{} vs {}", median(&high), median(&none));
}

fn permuted(ctx: &Context, r: &Realization, perm: &[usize]) -> (Context, Realization) {
    let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let x = causal_testbed::covariates::Standardized {
        columns: ctx.x.columns.clone(),
        matrix: causal_testbed::linalg::select_rows(&ctx.x.matrix, perm),
    };
    let t = &r.truth;
    let out = Realization {
        observed: Observed {
            z: perm.iter().map(|&i| r.observed.z[i]).collect(),
            y: pick(&r.observed.y),
        },
        truth: Truth {
            e: pick(&t.e),
            mu0: pick(&t.mu0),
            mu1: pick(&t.mu1),
            y0: pick(&t.y0),
            y1: pick(&t.y1),
            tau: pick(&t.tau),
            cate: pick(&t.cate),
        },
        penalized: perm.iter().map(|&i| r.penalized[i]).collect(),
    };
    (Context { table: ctx.table.clone(), x }, out)
}

#[test]
fn metrics_ignore_row_order_and_repeat_exactly() {
    let ctx = Context::new(Preset::Desk, 5).unwrap();
    let (spec, r) = cell(&ctx, Knobs::setting(41).unwrap(), 0);
    let opts = MetricOptions::default();
    let a = describe(41, 0, &ctx.x, &r.observed, Some((&spec, &r)), 9, &opts).unwrap();
    let b = describe(41, 0, &ctx.x, &r.observed, Some((&spec, &r)), 9, &opts).unwrap();
    assert_eq!(a, b);
    let mut perm: Vec<usize> = (0..r.n()).collect();
    let mut g = rng(15);
    for i in (1..perm.len()).rev() {
        perm.swap(i, g.random_range(0..=i));
    }
    let (pctx, pr) = permuted(&ctx, &r, &perm);
    let c = describe(41, 0, &pctx.x, &pr.observed, Some((&spec, &pr)), 9, &opts).unwrap();
    assert_eq!(a, c);
}

#[test]
fn metric_vectors_are_complete_and_in_range() {
    let ctx = Context::new(Preset::Desk, 6).unwrap();
    let (spec, r) = cell(&ctx, Knobs::setting(60).unwrap(), 1);
    let v = describe(60, 1, &ctx.x, &r.observed, Some((&spec, &r)), 1, &MetricOptions::default())
        .unwrap();
    let cols: Vec<String> = v.entries.iter().map(causal_testbed::metrics::MetricVector::column).collect();
    assert_eq!(cols, metric_columns(true));
    for m in &v.entries {
        assert!(m.value.is_finite(), "{}", m.name);
        if m.name.starts_with("r2_") || m.name.starts_with("propensity_r2") {
            assert!((0.0..=1.0).contains(&m.value), "{} = {}", m.name, m.value);
        }
        if m.name.starts_with("mahalanobis") || m.name.starts_with("wasserstein") {
            assert!(m.value >= 0.0);
        }
        if m.name == "alignment_correlation" {
            assert!((-1.0..=1.0).contains(&m.value));
        }
    }
}

#[test]
fn observable_metrics_need_only_observables() {
    let ctx = Context::new(Preset::Desk, 7).unwrap();
    let (spec, r) = cell(&ctx, Knobs::setting(12).unwrap(), 0);
    // A realization whose truth is garbage yields the same observable part.
    let mut junk = r.clone();
    junk.truth.e.iter_mut().for_each(|v| *v = f64::NAN);
    let opts = MetricOptions::default();
    let obs = observable_metrics(&ctx.x, &r.observed, 4, &opts).unwrap();
    let full = describe(12, 0, &ctx.x, &junk.observed, Some((&spec, &r)), 4, &opts).unwrap();
    assert_eq!(obs[..], full.entries[..obs.len()]);
    let bare = describe(12, 0, &ctx.x, &junk.observed, None, 4, &opts).unwrap();
    assert_eq!(bare.entries.len(), obs.len());
}

#[test]
fn metrics_csv_round_trip() {
    let ctx = Context::new(Preset::Desk, 8).unwrap();
    let opts = MetricOptions::default();
    let rows: Vec<_> = (0..2)
        .map(|rep| {
            let (spec, r) = cell(&ctx, Knobs::setting(2).unwrap(), rep);
            describe(2, rep, &ctx.x, &r.observed, Some((&spec, &r)), rep as u64, &opts).unwrap()
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    write_metrics_csv(&path, &rows).unwrap();
    assert_eq!(read_metrics_csv(&path).unwrap(), rows);
}
