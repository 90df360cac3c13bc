mod common;

use std::fs;
use std::path::Path;

use causal_testbed::covariates::Preset;
use causal_testbed::dgp::{DgpConfig, Heterogeneity, Knobs};
use causal_testbed::estimators::Method;
use causal_testbed::eval::{
    self, decompose, explain_performance, pehe, read_json, render_report, run_grid, summarize,
    variance_components, write_json, CellKey, Context, EstimateRow, GridConfig, GridManifest,
    Observation, Setting, TruthRow,
};
use causal_testbed::metrics::{Metric, MetricVector};
use causal_testbed::stats::{mean, pop_sd};
use common::{normals, rng};
use rand::seq::SliceRandom;

fn row(setting: usize, replication: usize, method: Method, est: f64, half: f64) -> EstimateRow {
    EstimateRow {
        setting,
        replication,
        method,
        satt_hat: Some(est),
        lo: Some(est - half),
        hi: Some(est + half),
        pehe: None,
        error: None,
        wall_time: None,
    }
}

fn truths(cells: &[(usize, usize, f64)]) -> Vec<TruthRow> {
    cells
        .iter()
        .map(|&(setting, replication, satt)| TruthRow { setting, replication, satt })
        .collect()
}

fn toy_cells(n: usize) -> Vec<(usize, usize, f64)> {
    (0..n).map(|i| (1 + i % 4, 1 + i / 4, 0.5 + 0.01 * i as f64)).collect()
}

#[test]
fn perfect_estimates_summarize_to_zero_error() {
    let cells = toy_cells(20);
    let est: Vec<EstimateRow> = cells.iter().map(|&(s, r, t)| row(s, r, Method::OlsAdjust, t, 0.0)).collect();
    let sum = summarize(&est, &truths(&cells)).unwrap();
    let m = sum.get(Method::OlsAdjust).unwrap();
    assert_eq!((m.bias, m.rmse, m.coverage), (Some(0.0), Some(0.0), Some(1.0)));
    assert_eq!(m.mean_interval_length, Some(0.0));
}

#[test]
fn constant_offset_summarizes_to_that_offset() {
    let cells = toy_cells(20);
    let est: Vec<EstimateRow> =
        cells.iter().map(|&(s, r, t)| row(s, r, Method::IptwAtt, t + 0.1, 0.0)).collect();
    let m = summarize(&est, &truths(&cells)).unwrap().methods[0].clone();
    assert!((m.bias.unwrap() - 0.1).abs() < 1e-12);
    assert!((m.rmse.unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(m.coverage, Some(0.0));
}

#[test]
fn gaussian_toy_intervals_cover_at_the_nominal_rate() {
    let cells = toy_cells(1000);
    let noise = normals(&mut rng(1), 1000, 1);
    let half = 1.959_963_985 * 0.05;
    let est: Vec<EstimateRow> = cells
        .iter()
        .zip(noise.iter())
        .map(|(&(s, r, t), e)| row(s, r, Method::RegressionRa, t + 0.05 * e, half))
        .collect();
    let m = summarize(&est, &truths(&cells)).unwrap().methods[0].clone();
    let c = m.coverage.unwrap();
    assert!((0.93..=0.97).contains(&c), "{c}");
    assert!(m.rmse.unwrap() >= m.bias.unwrap().abs());
}

#[test]
fn summaries_ignore_row_order() {
    let cells = toy_cells(60);
    let noise = normals(&mut rng(2), 120, 1);
    let mut est: Vec<EstimateRow> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, &(s, r, t))| {
            [
                row(s, r, Method::DiffInMeans, t + noise[2 * i], 0.3),
                row(s, r, Method::PsmMatch, t + 0.2 * noise[2 * i + 1], 0.1),
            ]
        })
        .collect();
    let a = summarize(&est, &truths(&cells)).unwrap();
    est.shuffle(&mut rng(3));
    let b = summarize(&est, &truths(&cells)).unwrap();
    assert_eq!(a, b);
    assert_eq!(render_report(&a, false), render_report(&b, false));
}

#[test]
fn unjoined_rows_are_listed() {
    let cells = toy_cells(4);
    let mut est: Vec<EstimateRow> = cells.iter().map(|&(s, r, t)| row(s, r, Method::OlsAdjust, t, 0.0)).collect();
    est.push(row(9, 9, Method::OlsAdjust, 0.0, 0.0));
    let err = summarize(&est, &truths(&cells)).unwrap_err().to_string();
    assert!(err.contains("setting 9 replication 9"), "{err}");
}

#[test]
fn report_ranks_by_rmse_then_name() {
    let cells = toy_cells(8);
    let mut est = Vec::new();
    for &(s, r, t) in &cells {
        est.push(row(s, r, Method::PsmMatch, t + 0.2, 0.0));
        est.push(row(s, r, Method::DiffInMeans, t + 0.2, 0.0));
        est.push(row(s, r, Method::OlsAdjust, t - 0.1, 0.0));
    }
    let sum = summarize(&est, &truths(&cells)).unwrap();
    let order: Vec<&str> = sum.ranked().iter().map(|m| m.method.name()).collect();
    assert_eq!(order, ["ols_adjust", "diff_in_means", "psm_match"]);
}

#[test]
fn pehe_arithmetic() {
    let tau = [0.5, 1.0, -0.25];
    assert_eq!(pehe(&tau, &tau).unwrap(), 0.0);
    let shifted: Vec<f64> = tau.iter().map(|t| t + 1.0).collect();
    assert!((pehe(&shifted, &tau).unwrap() - 1.0).abs() < 1e-15);
    assert!(pehe(&tau[..2], &tau).is_err());
}

#[test]
fn constant_effect_guess_pays_the_effect_spread() {
    let ctx = Context::new(Preset::Desk, 1).unwrap();
    let knobs = Knobs {
        heterogeneity: Heterogeneity::High,
        ..Knobs::setting(1).unwrap()
    };
    let setting = Setting { id: 1, knobs };
    let (_, r) = eval::simulate(&ctx.x, &setting, CellKey::new(1, 1), 2, &DgpConfig::default()).unwrap();
    let treated: Vec<f64> = r.treated_indices().iter().map(|&i| r.truth.cate[i]).collect();
    for guess in [0.0, mean(&treated), 2.0] {
        let got = pehe(&vec![guess; treated.len()], &treated).unwrap();
        // Brute force: mean squared error = spread^2 + offset^2.
        let brute = (treated.iter().map(|t| (guess - t).powi(2)).sum::<f64>() / treated.len() as f64).sqrt();
        assert!((got - brute).abs() < 1e-12);
        assert!(got >= pop_sd(&treated) - 1e-12);
    }
}

fn metric_vector(setting: usize, replication: usize, values: &[(f64, bool)]) -> MetricVector {
    MetricVector {
        setting,
        replication,
        entries: values
            .iter()
            .enumerate()
            .map(|(j, &(value, oracle))| Metric { name: format!("m{j}"), value, oracle })
            .collect(),
    }
}

/// Cells over 5 settings with `k_obs` observable and `k_oracle` oracle
/// metrics, the first observable metric driving the error when `planted`.
fn explain_fixture(
    n: usize,
    k_obs: usize,
    k_oracle: usize,
    planted: bool,
    seed: u64,
) -> (Vec<EstimateRow>, Vec<TruthRow>, Vec<MetricVector>) {
    let k = k_obs + k_oracle;
    let m = normals(&mut rng(seed), n, k);
    let noise = normals(&mut rng(seed + 1), n, 1);
    let (mut est, mut tr, mut mv) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let (s, r) = (1 + i % 5, 1 + i / 5);
        let log_err = if planted { m[(i, 0)] } else { noise[i] };
        est.push(row(s, r, Method::OlsAdjust, log_err.exp(), 0.0));
        tr.push(TruthRow { setting: s, replication: r, satt: 0.0 });
        let vals: Vec<(f64, bool)> = (0..k).map(|j| (m[(i, j)], j >= k_obs)).collect();
        mv.push(metric_vector(s, r, &vals));
    }
    (est, tr, mv)
}

#[test]
fn planted_metric_signal_is_recovered() {
    let (est, tr, mv) = explain_fixture(300, 3, 3, true, 10);
    let r = &explain_performance(&est, &tr, &mv).unwrap()[0];
    assert!(r.nonoracle_metrics.unwrap() > 0.999);
    assert!(r.all_metrics.unwrap() > 0.999);
    assert!(r.settings_and_metrics.unwrap() > 0.999);
    assert!(r.settings.unwrap() < 0.1);
}

#[test]
fn pure_noise_explains_little() {
    let (est, tr, mv) = explain_fixture(500, 3, 3, false, 20);
    let r = &explain_performance(&est, &tr, &mv).unwrap()[0];
    for v in [r.nonoracle_metrics, r.settings, r.all_metrics, r.settings_and_metrics] {
        assert!(v.unwrap() <= 0.05, "{r:?}");
    }
}

#[test]
fn null_r2_of_a_wide_block_matches_its_expectation() {
    // Under the null, R^2 of k regressors on n rows has mean k / (n - 1).
    let (n, k) = (500, 50);
    let mut got = Vec::new();
    for seed in 0..10 {
        let (est, tr, mv) = explain_fixture(n, 7, 18, false, 100 + 2 * seed);
        got.push(explain_performance(&est, &tr, &mv).unwrap()[0].all_metrics.unwrap());
    }
    let want = k as f64 / (n - 1) as f64;
    assert!((mean(&got) - want).abs() < 0.02, "{} vs {want}", mean(&got));
}

#[test]
fn nested_blocks_never_lose_fit() {
    for (planted, seed) in [(true, 30), (false, 40)] {
        let (est, tr, mv) = explain_fixture(200, 4, 4, planted, seed);
        let r = &explain_performance(&est, &tr, &mv).unwrap()[0];
        assert!(r.settings_and_metrics.unwrap() + 1e-12 >= r.settings.unwrap());
        assert!(r.settings_and_metrics.unwrap() + 1e-12 >= r.all_metrics.unwrap());
        assert!(r.all_metrics.unwrap() + 1e-12 >= r.nonoracle_metrics.unwrap());
        assert!(r.settings.unwrap() >= 0.0);
    }
}

#[test]
fn too_few_cells_yield_a_note() {
    let (est, tr, mv) = explain_fixture(20, 2, 2, false, 50);
    let r = &explain_performance(&est, &tr, &mv).unwrap()[0];
    assert!(r.note.is_some() && r.all_metrics.is_none());
}

/// Standardize to sample variance exactly one, so a planted component has
/// variance one by construction rather than in expectation.
fn unit_variance(v: &mut [f64]) {
    let m = mean(v);
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    v.iter_mut().for_each(|x| *x = (*x - m) / s);
}

fn planted_grid(seed: u64) -> Vec<Observation> {
    let (m, s, r) = (20, 20, 20);
    let mut effect: Vec<f64> = normals(&mut rng(seed), m, 1).as_slice().to_vec();
    unit_variance(&mut effect);
    let noise = normals(&mut rng(seed + 1), m * s * r, 1);
    let mut obs = Vec::new();
    for a in 0..m {
        for b in 0..s {
            for k in 0..r {
                obs.push(Observation {
                    method: a,
                    setting: b,
                    value: effect[a] + noise[(a * s + b) * r + k],
                });
            }
        }
    }
    obs
}

#[test]
fn planted_method_variance_is_recovered() {
    for seed in [1, 2, 3] {
        let vc = decompose(&planted_grid(seed)).unwrap();
        let sh = vc.shares;
        for (got, want) in [
            (sh.methods, 0.5),
            (sh.settings, 0.0),
            (sh.interaction, 0.0),
            (sh.realizations, 0.5),
        ] {
            assert!((got - want).abs() <= 0.05, "seed {seed}: {sh:?}");
        }
        assert!((sh.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sums_of_squares_add_up_in_a_balanced_grid() {
    let vc = decompose(&planted_grid(7)).unwrap();
    let ss = vc.sums_of_squares;
    assert!((ss.sum() - vc.total_sum_of_squares).abs() <= 1e-9 * vc.total_sum_of_squares);
}

#[test]
fn identical_methods_have_no_method_component() {
    let noise = normals(&mut rng(9), 200, 1);
    let mut obs = Vec::new();
    for m in 0..3 {
        for s in 0..10 {
            for r in 0..20 {
                obs.push(Observation { method: m, setting: s, value: 0.3 * s as f64 + noise[s * 20 + r] });
            }
        }
    }
    let vc = decompose(&obs).unwrap();
    assert!(vc.components.methods.abs() < 1e-12);
    assert!(vc.components.interaction.abs() < 1e-12);
    assert!(vc.components.settings > 0.0);
    assert!(vc.components.methods >= 0.0 && vc.truncated.iter().all(|t| t == "methods" || t == "interaction"));
}

#[test]
fn one_method_defines_the_method_terms_as_zero() {
    let obs: Vec<Observation> = planted_grid(4).into_iter().filter(|o| o.method == 0).collect();
    let vc = decompose(&obs).unwrap();
    assert_eq!((vc.components.methods, vc.components.interaction), (0.0, 0.0));
}

fn small_grid(threads: Option<usize>) -> GridConfig {
    let mut cfg = GridConfig::new(Preset::Desk, Setting::canonical_list(&[1, 20]).unwrap(), 3, 11);
    cfg.methods = vec![Method::DiffInMeans, Method::OlsAdjust];
    cfg.estimator.bootstrap = 20;
    cfg.threads = threads;
    cfg
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    ["estimates.csv", "truths.csv"]
        .iter()
        .map(|f| (f.to_string(), fs::read(dir.join(f)).unwrap()))
        .collect()
}

#[test]
fn grid_counts_rows_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = run_grid(&small_grid(Some(1)), Some(&a)).unwrap();
    assert_eq!(out.estimates().len(), 12);
    assert_eq!(out.truths().len(), 6);
    run_grid(&small_grid(Some(3)), Some(&b)).unwrap();
    assert_eq!(csvs(&a), csvs(&b));
    let sum = summarize(&out.estimates(), &out.truths()).unwrap();
    for m in &sum.methods {
        assert!(m.rmse.unwrap() >= m.bias.unwrap().abs());
    }
    let vc = variance_components(&out.estimates(), &out.truths()).unwrap();
    assert!((vc.shares.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn interrupted_grid_resumes_to_the_same_output() {
    let dir = tempfile::tempdir().unwrap();
    let (full, resumed) = (dir.path().join("full"), dir.path().join("resumed"));
    run_grid(&small_grid(None), Some(&full)).unwrap();
    run_grid(&small_grid(None), Some(&resumed)).unwrap();

    // Forget half the cells, as if the run stopped part way.
    let manifest_path = resumed.join("manifest.json");
    let mut manifest: GridManifest = read_json(&manifest_path).unwrap();
    let dropped: Vec<CellKey> = manifest.completed.iter().copied().skip(3).collect();
    manifest.completed.truncate(3);
    write_json(&manifest_path, &manifest).unwrap();
    for key in &dropped {
        fs::remove_file(resumed.join("cells").join(format!("cell_{}.json", key.label()))).unwrap();
    }
    fs::remove_file(resumed.join("estimates.csv")).unwrap();

    run_grid(&small_grid(None), Some(&resumed)).unwrap();
    assert_eq!(csvs(&full), csvs(&resumed));
    let done: GridManifest = read_json(&manifest_path).unwrap();
    assert_eq!(done.completed.len(), 6);
}

#[test]
fn completed_cells_are_not_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    run_grid(&small_grid(None), Some(out)).unwrap();
    let key = CellKey::new(1, 1);
    let path = out.join("cells").join(format!("cell_{}.json", key.label()));
    let mut cell: eval::CellOutput = read_json(&path).unwrap();
    cell.estimates[0].satt_hat = Some(123.0);
    write_json(&path, &cell).unwrap();
    let again = run_grid(&small_grid(None), Some(out)).unwrap();
    assert_eq!(again.cells[0].estimates[0].satt_hat, Some(123.0));
}

#[test]
fn a_different_configuration_refuses_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    run_grid(&small_grid(None), Some(dir.path())).unwrap();
    let mut other = small_grid(None);
    other.master_seed = 12;
    assert!(run_grid(&other, Some(dir.path())).is_err());
}
