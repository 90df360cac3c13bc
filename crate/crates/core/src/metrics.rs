//! Dataset descriptors. Observable metrics only read covariates, treatment
//! and outcome; oracle metrics additionally read the DGP and its truth.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::covariates::Standardized;
use crate::dgp::{DgpSpec, Observed, Realization, Truth};
use crate::error::{Error, Result};
use crate::estimators::{fit_propensity, flexible_fit, EstimatorInput, EstimatorOptions};
use crate::linalg::{
    cholesky, least_squares, logistic_irls, select_columns, select_rows, varying_columns,
    with_intercept, LogisticOptions,
};
use crate::rng;
use crate::stats::{correlation, logit, mean, pop_sd, sd};

/// `1 - SSE / SST` of the least-squares fit of `y` on an intercept plus
/// `design` (minimum-norm when rank deficient). Zero-variance `y` gives 0.
pub fn r2_linear(y: &[f64], design: &DMatrix<f64>) -> Result<f64> {
    if design.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but y has {}",
            design.nrows(),
            y.len()
        )));
    }
    let m = mean(y);
    let sst: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if !(sst > 0.0) {
        return Ok(0.0);
    }
    let fit = least_squares(&with_intercept(design), &DVector::from_column_slice(y))?;
    let sse: f64 = y
        .iter()
        .zip(fit.fitted.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((1.0 - sse / sst).clamp(0.0, 1.0))
}

/// McFadden pseudo-R^2 of a logistic fit of `z` on `design`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropensityR2 {
    pub value: f64,
    pub separated: bool,
}

pub fn propensity_r2(z: &[bool], design: &DMatrix<f64>) -> Result<PropensityR2> {
    let cols = varying_columns(design);
    let fit = logistic_irls(&select_columns(design, &cols), z, LogisticOptions::default())?;
    Ok(PropensityR2 {
        value: fit.pseudo_r2(),
        separated: fit.separated,
    })
}

fn groups(z: &[bool]) -> Result<(Vec<usize>, Vec<usize>)> {
    let t: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
    let c: Vec<usize> = (0..z.len()).filter(|&i| !z[i]).collect();
    if t.is_empty() || c.is_empty() {
        return Err(Error::invalid("both treatment groups must be nonempty"));
    }
    Ok((t, c))
}

/// Within-group pooled covariance with a ridge of
/// `1e-6 * max(trace / p, 1)` on the diagonal.
pub fn pooled_covariance(design: &DMatrix<f64>, z: &[bool]) -> Result<DMatrix<f64>> {
    let (t, c) = groups(z)?;
    let p = design.ncols();
    let mut cov = DMatrix::zeros(p, p);
    for rows in [&t, &c] {
        let sub = select_rows(design, rows);
        let means = sub.row_mean();
        let centered = DMatrix::from_fn(sub.nrows(), p, |i, j| sub[(i, j)] - means[j]);
        cov += centered.transpose() * centered;
    }
    let dof = (design.nrows() as f64 - 2.0).max(1.0);
    cov /= dof;
    let ridge = 1e-6 * (cov.trace() / p.max(1) as f64).max(1.0);
    for j in 0..p {
        cov[(j, j)] += ridge;
    }
    Ok(cov)
}

/// Mean over all units of the Mahalanobis distance (under `covariance`) to
/// the nearest unit of the other group.
pub fn mahalanobis_with_covariance(
    design: &DMatrix<f64>,
    z: &[bool],
    covariance: &DMatrix<f64>,
) -> Result<f64> {
    let (t, c) = groups(z)?;
    let l = cholesky(covariance).map_err(|e| match e {
        Error::NotPositiveDefinite { minor, .. } => Error::Collinear(format!(
            "covariance is singular; column {} is a linear combination of earlier columns",
            minor - 1
        )),
        other => other,
    })?;
    // Whiten rows: solve L w = x for each row.
    let white = l
        .solve_lower_triangular(&design.transpose())
        .ok_or_else(|| Error::Collinear("covariance factor is singular".into()))?;
    let col = |i: usize| white.column(i);
    let nearest = |from: &[usize], to: &[usize]| -> f64 {
        from.iter()
            .map(|&i| {
                let a = col(i);
                to.iter()
                    .map(|&j| (a - col(j)).norm_squared())
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .sum()
    };
    let total = nearest(&t, &c) + nearest(&c, &t);
    Ok(total / z.len() as f64)
}

/// Mean nearest-counterfactual Mahalanobis distance under the pooled
/// covariance.
pub fn mahalanobis_counterfactual_distance(design: &DMatrix<f64>, z: &[bool]) -> Result<f64> {
    let cov = pooled_covariance(design, z)?;
    mahalanobis_with_covariance(design, z, &cov)
}

/// Euclidean norm of the difference of group mean vectors.
pub fn mean_imbalance(design: &DMatrix<f64>, z: &[bool]) -> Result<f64> {
    let (t, c) = groups(z)?;
    let mt = select_rows(design, &t).row_mean();
    let mc = select_rows(design, &c).row_mean();
    Ok((mt - mc).norm())
}

/// Options for the entropic transport approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    /// Regularization relative to the mean pairwise cost.
    pub epsilon: f64,
    pub iterations: usize,
    pub max_group: usize,
    pub tolerance: f64,
    /// Over-relaxation factor in [1, 2); 1 is plain Sinkhorn.
    pub relaxation: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            iterations: 500,
            max_group: 500,
            tolerance: 1e-4,
            relaxation: 1.5,
        }
    }
}

/// Debiased entropic transport cost between uniform measures on the rows of
/// `a` and `b` with squared-Euclidean ground cost:
/// `T(a, b) - T(a, a) / 2 - T(b, b) / 2`, where `T` is `sum P * C` of the
/// regularized plan. The regularization is `epsilon` times the mean cost
/// between `a` and `b` for all three terms. Subtracting the self terms
/// removes most of the blur the regularization adds, and identical sets
/// give exactly 0.
pub fn sinkhorn_cost(a: &DMatrix<f64>, b: &DMatrix<f64>, opts: &SinkhornOptions) -> Result<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::invalid("transport needs two nonempty point sets"));
    }
    if a == b {
        return Ok(0.0);
    }
    let sq = |p: &DMatrix<f64>, q: &DMatrix<f64>| {
        DMatrix::from_fn(p.nrows(), q.nrows(), |i, j| (p.row(i) - q.row(j)).norm_squared())
    };
    let cross = sq(a, b);
    let scale = cross.mean();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let target = opts.epsilon * scale;
    let ab = entropic_plan_cost(&cross, scale, target, opts)?;
    let aa = symmetric_plan_cost(&sq(a, a), target, opts)?;
    let bb = symmetric_plan_cost(&sq(b, b), target, opts)?;
    Ok((ab - 0.5 * (aa + bb)).max(0.0))
}

/// `sum P * C` of the entropic self-transport plan of a point set with
/// itself. The plan is `diag(u) K diag(u)`, and the averaged update
/// `u <- sqrt(u * r / (K u))` converges in a few dozen steps.
fn symmetric_plan_cost(cost: &DMatrix<f64>, eps: f64, opts: &SinkhornOptions) -> Result<f64> {
    let n = cost.nrows();
    let r = 1.0 / n as f64;
    let kernel = cost.map(|c| (-c / eps).exp());
    let mut u = DVector::from_element(n, r.sqrt());
    let mut err = f64::INFINITY;
    for _ in 0..opts.iterations {
        let ku = &kernel * &u;
        err = u.iter().zip(ku.iter()).map(|(ui, s)| (ui * s - r).abs()).sum();
        if err < opts.tolerance * 1e-3 {
            break;
        }
        u.zip_apply(&ku, |x, s| *x = (*x * r / s).sqrt());
    }
    if !(err <= opts.tolerance) {
        return Err(Error::Sinkhorn {
            iterations: opts.iterations,
            marginal_error: err,
        });
    }
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            total += u[i] * kernel[(i, j)] * u[j] * cost[(i, j)];
        }
    }
    Ok(total)
}

/// `sum P * C` of the entropic plan at regularization `target`, annealed
/// down from `scale`.
fn entropic_plan_cost(
    cost: &DMatrix<f64>,
    scale: f64,
    target: f64,
    opts: &SinkhornOptions,
) -> Result<f64> {
    let (n, m) = cost.shape();
    // Anneal the regularization from the mean cost down to the target,
    // halving every few iterations and carrying the dual potentials across
    // stages; the final iterations run at the target alone.
    const STAGE: usize = 10;
    // Over-relaxed updates share the fixed point of plain Sinkhorn and
    // converge much faster near it.
    let omega = opts.relaxation;
    let relax = |old: f64, new: f64| {
        if omega == 1.0 {
            new
        } else {
            old.powf(1.0 - omega) * new.powf(omega)
        }
    };
    let eps_at = |it: usize| (scale * 0.5f64.powi((it / STAGE) as i32)).max(target);
    let (ra, rb) = (1.0 / n as f64, 1.0 / m as f64);
    let mut f = DVector::zeros(n);
    let mut g = DVector::zeros(m);
    let mut eps = f64::NAN;
    let mut kernel = DMatrix::zeros(n, m);
    let mut u = DVector::from_element(n, 1.0);
    let mut v = DVector::from_element(m, 1.0);
    let mut err = f64::INFINITY;
    for it in 0..opts.iterations {
        let e = eps_at(it);
        if e != eps {
            if eps.is_finite() {
                f += u.map(|x: f64| eps * x.ln());
                g += v.map(|x: f64| eps * x.ln());
            }
            eps = e;
            // The kernel absorbs the potentials so that u and v restart at 1.
            kernel = DMatrix::from_fn(n, m, |i, j| ((f[i] + g[j] - cost[(i, j)]) / eps).exp());
            u.fill(1.0);
            v.fill(1.0);
        }
        let ku = kernel.tr_mul(&u);
        v.zip_apply(&ku, |x, s| *x = relax(*x, rb / s));
        let kv = &kernel * &v;
        if eps == target && (it % 10 == 9 || it + 1 == opts.iterations) {
            err = u.iter().zip(kv.iter()).map(|(ui, s)| (ui * s - ra).abs()).sum();
            if err < opts.tolerance * 1e-3 {
                break;
            }
        }
        u.zip_apply(&kv, |x, s| *x = relax(*x, ra / s));
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            break;
        }
    }
    if !(err <= opts.tolerance) {
        return Err(Error::Sinkhorn {
            iterations: opts.iterations,
            marginal_error: err,
        });
    }
    let mut total = 0.0;
    for j in 0..m {
        for i in 0..n {
            total += u[i] * kernel[(i, j)] * v[j] * cost[(i, j)];
        }
    }
    Ok(total)
}

/// Transport distance between treated and control rows of `design`, each
/// group subsampled to at most `max_group` rows with a stream derived from
/// `seed`.
pub fn wasserstein_distance(
    design: &DMatrix<f64>,
    z: &[bool],
    seed: u64,
    opts: &SinkhornOptions,
) -> Result<f64> {
    let (t, c) = groups(z)?;
    let mut rng = rng::derived_stream(seed, &[rng::purpose::METRICS]);
    let mut cap = |rows: Vec<usize>| -> Vec<usize> {
        if rows.len() <= opts.max_group {
            return rows;
        }
        let mut idx = sample(&mut rng, rows.len(), opts.max_group).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| rows[k]).collect()
    };
    let (t, c) = (cap(t), cap(c));
    sinkhorn_cost(&select_rows(design, &t), &select_rows(design, &c), opts)
}

/// Pearson correlation of the true propensity logit with the untreated
/// outcome `y0` over rows outside penalty regions; 0 when the propensity is
/// constant there. The observed outcome would also pick up the treatment
/// effect, which tracks `e` through `z` whatever the alignment.
pub fn alignment_correlation(realization: &Realization) -> f64 {
    let (l, y): (Vec<f64>, Vec<f64>) = (0..realization.n())
        .filter(|&i| !realization.penalized[i] && realization.truth.e[i] > 0.0)
        .map(|i| (logit(realization.truth.e[i]), realization.truth.y0[i]))
        .unzip();
    if l.len() < 2 {
        return 0.0;
    }
    correlation(&l, &y)
}

/// Standard deviation of `mu1 - mu0` over rows, divided by the sd of `y`.
pub fn heterogeneity_sd(realization: &Realization) -> f64 {
    let s = pop_sd(&realization.truth.cate);
    if s == 0.0 {
        return 0.0;
    }
    let sy = sd(&realization.observed.y);
    if sy == 0.0 {
        return 0.0;
    }
    s / sy
}

/// Squared correlation between estimated unit-level effects and estimated
/// propensities (the R^2 of a simple regression); 0 if either is constant.
pub fn nonoracle_alignment_proxy(tau_hat: &[f64], e_hat: &[f64]) -> Result<f64> {
    if tau_hat.is_empty() {
        return Err(Error::MissingEffects(
            "the alignment proxy needs unit-level effects from flexible_rs".into(),
        ));
    }
    if tau_hat.len() != e_hat.len() {
        return Err(Error::invalid(format!(
            "{} effects but {} propensities",
            tau_hat.len(),
            e_hat.len()
        )));
    }
    let r = correlation(tau_hat, e_hat);
    Ok(r * r)
}

/// Observable metric names, in column order.
pub const OBSERVABLE_METRICS: [&str; 7] = [
    "treated_fraction",
    "r2_y_obs",
    "propensity_r2_obs",
    "mahalanobis_obs",
    "mean_imbalance_obs",
    "wasserstein_obs",
    "alignment_proxy",
];

/// Oracle metric names (without the `oracle_` prefix), in column order.
pub const ORACLE_METRICS: [&str; 18] = [
    "treatment_model",
    "overlap",
    "response_model",
    "alignment",
    "heterogeneity",
    "r2_y_true",
    "r2_ratio",
    "propensity_r2_true",
    "r2_y0_control_obs",
    "r2_y1_treated_obs",
    "r2_y0_control_true",
    "r2_y1_treated_true",
    "r2_tau_obs",
    "r2_tau_true",
    "mahalanobis_true",
    "mean_imbalance_true",
    "alignment_correlation",
    "heterogeneity_sd",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub oracle: bool,
}

/// Descriptors of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub setting: usize,
    pub replication: usize,
    pub entries: Vec<Metric>,
}

impl MetricVector {
    /// Column name as written to CSV: oracle entries carry an `oracle_`
    /// prefix.
    pub fn column(m: &Metric) -> String {
        if m.oracle {
            format!("oracle_{}", m.name)
        } else {
            m.name.clone()
        }
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|m| Self::column(m) == column)
            .map(|m| m.value)
    }

    pub fn observable(&self) -> Vec<f64> {
        self.entries.iter().filter(|m| !m.oracle).map(|m| m.value).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|m| m.value).collect()
    }
}

/// All metric column names: observable first, then oracle.
pub fn metric_columns(include_oracle: bool) -> Vec<String> {
    let mut cols: Vec<String> = OBSERVABLE_METRICS.iter().map(|s| s.to_string()).collect();
    if include_oracle {
        cols.extend(ORACLE_METRICS.iter().map(|s| format!("oracle_{s}")));
    }
    cols
}

/// Options shared by the metric computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub sinkhorn: SinkhornOptions,
    pub estimator: EstimatorOptions,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            sinkhorn: SinkhornOptions::default(),
            estimator: EstimatorOptions::default(),
        }
    }
}

/// Metrics computable from observables only, evaluated on a canonical row
/// order so the result does not depend on the input order. This signature cannot see
/// truth: it takes the covariates and the observed `(z, y)` alone.
pub fn observable_metrics(
    x: &Standardized,
    observed: &Observed,
    seed: u64,
    opts: &MetricOptions,
) -> Result<Vec<Metric>> {
    let order = canonical_order(&x.matrix, observed);
    let (x, observed) = (&reorder_x(x, &order), &reorder_observed(observed, &order));
    let z = &observed.z;
    let y = &observed.y;
    let input = EstimatorInput::new(x.matrix.clone(), z.clone(), y.clone())?;
    let flex = flexible_fit(&input, &opts.estimator)?;
    let e_hat = fit_propensity(&x.matrix, z)?.fitted;
    let values = [
        observed.treated() as f64 / z.len() as f64,
        r2_linear(y, &x.matrix)?,
        propensity_r2(z, &x.matrix)?.value,
        mahalanobis_counterfactual_distance(&x.matrix, z)?,
        mean_imbalance(&x.matrix, z)?,
        wasserstein_distance(&x.matrix, z, seed, &opts.sinkhorn)?,
        nonoracle_alignment_proxy(&flex.effects(), &e_hat)?,
    ];
    Ok(OBSERVABLE_METRICS
        .iter()
        .zip(values)
        .map(|(n, v)| Metric {
            name: n.to_string(),
            value: v,
            oracle: false,
        })
        .collect())
}

/// Row order used for all metric computations: by treatment, then outcome,
/// then covariate values. Metrics computed on this order do not depend on
/// how the caller happened to order the rows.
fn canonical_order(x: &DMatrix<f64>, observed: &Observed) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..observed.z.len()).collect();
    idx.sort_by(|&a, &b| {
        observed.z[a]
            .cmp(&observed.z[b])
            .then(observed.y[a].total_cmp(&observed.y[b]))
            .then_with(|| {
                (0..x.ncols())
                    .map(|j| x[(a, j)].total_cmp(&x[(b, j)]))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    idx
}

fn reorder_x(x: &Standardized, order: &[usize]) -> Standardized {
    Standardized {
        matrix: select_rows(&x.matrix, order),
        columns: x.columns.clone(),
    }
}

fn reorder_observed(observed: &Observed, order: &[usize]) -> Observed {
    Observed {
        z: order.iter().map(|&i| observed.z[i]).collect(),
        y: order.iter().map(|&i| observed.y[i]).collect(),
    }
}

fn reorder_realization(r: &Realization, order: &[usize]) -> Realization {
    let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let t = &r.truth;
    Realization {
        observed: reorder_observed(&r.observed, order),
        truth: Truth {
            e: pick(&t.e),
            mu0: pick(&t.mu0),
            mu1: pick(&t.mu1),
            y0: pick(&t.y0),
            y1: pick(&t.y1),
            tau: pick(&t.tau),
            cate: pick(&t.cate),
        },
        penalized: order.iter().map(|&i| r.penalized[i]).collect(),
    }
}

fn group_r2(y: &[f64], design: &DMatrix<f64>, rows: &[usize]) -> Result<f64> {
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    r2_linear(&ys, &select_rows(design, rows))
}

/// Metrics that need the DGP and the realization's truth.
pub fn oracle_metrics(
    spec: &DgpSpec,
    x: &Standardized,
    realization: &Realization,
    r2_observed: f64,
) -> Result<Vec<Metric>> {
    let order = canonical_order(&x.matrix, &realization.observed);
    let (x, realization) = (&reorder_x(x, &order), &reorder_realization(realization, &order));
    let truth_design = spec.ground_truth_design(&x.matrix);
    let keep = varying_columns(&truth_design);
    let truth_design = select_columns(&truth_design, &keep);
    let z = &realization.observed.z;
    let y = &realization.observed.y;
    let (t, c) = groups(z)?;
    let r2_true = r2_linear(y, &truth_design)?;
    let codes = spec.knobs.codes();
    let values = [
        codes[0],
        codes[2],
        codes[3],
        codes[4],
        codes[5],
        r2_true,
        if r2_true > 0.0 { r2_observed / r2_true } else { 0.0 },
        propensity_r2(z, &truth_design)?.value,
        group_r2(y, &x.matrix, &c)?,
        group_r2(y, &x.matrix, &t)?,
        group_r2(y, &truth_design, &c)?,
        group_r2(y, &truth_design, &t)?,
        r2_linear(&realization.truth.cate, &x.matrix)?,
        r2_linear(&realization.truth.cate, &truth_design)?,
        mahalanobis_counterfactual_distance(&truth_design, z)?,
        mean_imbalance(&truth_design, z)?,
        alignment_correlation(realization),
        heterogeneity_sd(realization),
    ];
    Ok(ORACLE_METRICS
        .iter()
        .zip(values)
        .map(|(n, v)| Metric {
            name: n.to_string(),
            value: v,
            oracle: true,
        })
        .collect())
}

/// Observable and (optionally) oracle metrics for one realization.
pub fn describe(
    setting: usize,
    replication: usize,
    x: &Standardized,
    observed: &Observed,
    oracle: Option<(&DgpSpec, &Realization)>,
    seed: u64,
    opts: &MetricOptions,
) -> Result<MetricVector> {
    let mut entries = observable_metrics(x, observed, seed, opts)?;
    if let Some((spec, realization)) = oracle {
        let r2_obs = entries[1].value;
        entries.extend(oracle_metrics(spec, x, realization, r2_obs)?);
    }
    Ok(MetricVector {
        setting,
        replication,
        entries,
    })
}

/// Write metric vectors (all with the same columns) to CSV.
pub fn write_metrics_csv(path: &Path, rows: &[MetricVector]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::dgp::csv_io(path, e))?;
    let columns: Vec<String> = rows
        .first()
        .map(|r| r.entries.iter().map(MetricVector::column).collect())
        .unwrap_or_else(|| metric_columns(true));
    let mut header = vec!["setting".to_owned(), "replication".to_owned()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for r in rows {
        let cols: Vec<String> = r.entries.iter().map(MetricVector::column).collect();
        if cols != columns {
            return Err(Error::invalid("metric rows have different column sets"));
        }
        let mut rec = vec![r.setting.to_string(), r.replication.to_string()];
        rec.extend(r.entries.iter().map(|m| crate::dgp::fmt(m.value)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a metrics CSV back into metric vectors.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricVector>> {
    let parse = |message: String| Error::Parse {
        path: path.display().to_string(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| crate::dgp::csv_io(path, e))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 2 || header[0] != "setting" || header[1] != "replication" {
        return Err(parse("header must start with setting,replication".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse::<f64>().map_err(|_| {
                parse(format!("row {}, column {}: '{}' is not a number", i + 1, header[j], &rec[j]))
            })
        };
        let entries = (2..header.len())
            .map(|j| {
                let (name, oracle) = match header[j].strip_prefix("oracle_") {
                    Some(n) => (n.to_owned(), true),
                    None => (header[j].clone(), false),
                };
                Ok(Metric {
                    name,
                    value: num(j)?,
                    oracle,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(MetricVector {
            setting: num(0)? as usize,
            replication: num(1)? as usize,
            entries,
        });
    }
    Ok(out)
}
