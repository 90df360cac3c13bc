//! Dense linear-algebra building blocks: least squares, sandwich variances,
//! Cholesky with diagnostics, and IRLS logistic regression.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::sigmoid;

/// Relative singular-value cutoff used to decide numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Prepend a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, x.ncols() + 1);
    out.column_mut(0).fill(1.0);
    out.columns_mut(1, x.ncols()).copy_from(x);
    out
}

/// Select a subset of rows.
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

/// Columns whose values are not all identical.
pub fn varying_columns(x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| {
            let col = x.column(j);
            let first = col[0];
            col.iter().any(|&v| v != first)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    pub fitted: DVector<f64>,
    pub rank: usize,
}

/// Minimum-norm least squares via SVD.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Ok(LeastSquares {
            coef: DVector::zeros(0),
            fitted: DVector::zeros(y.len()),
            rank: 0,
        });
    }
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = (max_sv * RANK_TOL).max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let coef = svd
        .solve(y, eps)
        .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
    let fitted = x * &coef;
    Ok(LeastSquares { coef, fitted, rank })
}

/// Weighted least squares with nonnegative weights (min-norm on the
/// row-scaled system).
pub fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
) -> Result<LeastSquares> {
    let sw: Vec<f64> = w.iter().map(|v| v.max(0.0).sqrt()).collect();
    let xs = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * sw[i]);
    let ys = DVector::from_fn(y.len(), |i, _| y[i] * sw[i]);
    let fit = least_squares(&xs, &ys)?;
    let fitted = x * &fit.coef;
    Ok(LeastSquares {
        coef: fit.coef,
        fitted,
        rank: fit.rank,
    })
}

/// OLS with heteroskedasticity-robust (HC1) covariance. Requires full
/// column rank.
#[derive(Debug, Clone)]
pub struct RobustOls {
    pub coef: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub residuals: DVector<f64>,
}

pub fn robust_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RobustOls> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(Error::invalid(format!(
            "need more rows ({n}) than columns ({k})"
        )));
    }
    let fit = least_squares(x, y)?;
    if fit.rank < k {
        return Err(Error::Collinear(format!(
            "design of {k} columns has numerical rank {}",
            fit.rank
        )));
    }
    let xtx = x.transpose() * x;
    let bread = xtx
        .try_inverse()
        .ok_or_else(|| Error::Collinear("X'X is singular".into()))?;
    let residuals = y - &fit.fitted;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = x.row(i);
        let e2 = residuals[i] * residuals[i];
        meat += row.transpose() * row * e2;
    }
    let scale = n as f64 / (n - k) as f64;
    let cov = &bread * meat * &bread * scale;
    Ok(RobustOls {
        coef: fit.coef,
        cov,
        residuals,
    })
}

/// Lower Cholesky factor of a symmetric matrix, reporting the first leading
/// minor (1-based) whose pivot is not positive.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("cholesky of non-square matrix"));
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite {
                minor: j + 1,
                pivot: d,
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solve `L L' x = b` given the lower factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Options for IRLS logistic regression.
#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    /// Ridge penalty on non-intercept coefficients.
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-8,
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// Coefficients; the first entry is the intercept.
    pub coef: DVector<f64>,
    pub fitted: Vec<f64>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub iterations: usize,
    /// Max-abs gradient of the penalized log-likelihood at the returned point.
    pub grad_norm: f64,
    pub separated: bool,
}

impl LogisticFit {
    /// McFadden pseudo-R^2, clamped to [0, 1].
    pub fn pseudo_r2(&self) -> f64 {
        if self.separated {
            return 1.0;
        }
        if self.loglik_null == 0.0 {
            return 0.0;
        }
        (1.0 - self.loglik / self.loglik_null).clamp(0.0, 1.0)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let eta = with_intercept(x) * &self.coef;
        eta.iter().map(|&v| sigmoid(v)).collect()
    }
}

fn log_likelihood(eta: &DVector<f64>, z: &[bool]) -> f64 {
    eta.iter()
        .zip(z)
        .map(|(&e, &zi)| {
            // log sigma(e) = -log(1 + exp(-e))
            let s = if zi { e } else { -e };
            if s > 0.0 {
                -(-s).exp().ln_1p()
            } else {
                s - s.exp().ln_1p()
            }
        })
        .sum()
}

/// Logistic regression of `z` on `x` (an intercept is added) by iteratively
/// reweighted least squares with step halving.
pub fn logistic_irls(x: &DMatrix<f64>, z: &[bool], opts: LogisticOptions) -> Result<LogisticFit> {
    let n = x.nrows();
    if z.len() != n {
        return Err(Error::invalid("treatment length does not match design"));
    }
    let n1 = z.iter().filter(|&&v| v).count();
    if n1 == 0 || n1 == n {
        return Err(Error::Logistic(
            "treatment indicator has a single class".into(),
        ));
    }
    let xd = with_intercept(x);
    let k = xd.ncols();
    let pbar = n1 as f64 / n as f64;
    let loglik_null = n1 as f64 * pbar.ln() + (n - n1) as f64 * (1.0 - pbar).ln();

    let mut beta = DVector::zeros(k);
    beta[0] = crate::stats::logit(pbar);
    let penalized = |beta: &DVector<f64>, eta: &DVector<f64>| {
        let pen: f64 = beta.iter().skip(1).map(|b| b * b).sum::<f64>() * opts.ridge;
        log_likelihood(eta, z) - pen
    };
    let mut eta = &xd * &beta;
    let mut obj = penalized(&beta, &eta);
    let mut iterations = 0;
    let mut separated = false;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_fn(n, |i, _| if z[i] { 1.0 } else { 0.0 } - p[i]);
        let mut grad = xd.transpose() * &resid;
        for j in 1..k {
            grad[j] -= 2.0 * opts.ridge * beta[j];
        }
        if grad.amax() < opts.tol {
            break;
        }
        let xw = DMatrix::from_fn(n, k, |i, j| xd[(i, j)] * p[i] * (1.0 - p[i]));
        let mut hess = xd.transpose() * xw;
        for j in 1..k {
            hess[(j, j)] += 2.0 * opts.ridge;
        }
        // Tiny jitter on every pivot keeps saturated fits solvable.
        for j in 0..k {
            hess[(j, j)] += 1e-12;
        }
        let step = match cholesky(&hess) {
            Ok(l) => cholesky_solve(&l, &grad),
            Err(_) => hess
                .clone()
                .pseudo_inverse(1e-14)
                .map_err(|e| Error::Logistic(e.to_string()))?
                * &grad,
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_eta = &xd * &cand;
            let cand_obj = penalized(&cand, &cand_eta);
            if cand_obj >= obj - 1e-12 * obj.abs().max(1.0) {
                beta = cand;
                eta = cand_eta;
                let gain = cand_obj - obj;
                obj = cand_obj;
                improved = gain.abs() > 0.0 || t == 1.0;
                break;
            }
            t *= 0.5;
        }
        // Perfect separation: every unit classified correctly with a wide margin.
        let margin = eta
            .iter()
            .zip(z)
            .map(|(&e, &zi)| if zi { e } else { -e })
            .fold(f64::INFINITY, f64::min);
        if margin > 15.0 {
            separated = true;
            break;
        }
        if !improved {
            break;
        }
        if step.amax() * t < 1e-13 {
            break;
        }
    }
    // A fitted predictor that classifies every unit correctly is itself a
    // separating hyperplane, so the unpenalized MLE does not exist.
    separated = separated
        || eta
            .iter()
            .zip(z)
            .all(|(&e, &zi)| if zi { e > 0.0 } else { e < 0.0 });
    let fitted: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    let resid = DVector::from_fn(n, |i, _| if z[i] { 1.0 } else { 0.0 } - fitted[i]);
    let mut g = xd.transpose() * &resid;
    for j in 1..k {
        g[j] -= 2.0 * opts.ridge * beta[j];
    }
    let grad_norm = g.amax();
    Ok(LogisticFit {
        loglik: log_likelihood(&eta, z),
        coef: beta,
        fitted,
        loglik_null,
        iterations,
        grad_norm,
        separated,
    })
}
