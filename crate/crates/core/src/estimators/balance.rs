//! Entropy balancing: exponential tilting of base weights so weighted
//! control means match treated means exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::flexible::{bootstrap_config, control_surface_cv, control_surface_fixed};
use super::weighting::{att_weights, effective_sample_size, fit_propensity};
use super::{
    bootstrap_interval, pick, EstimateResult, EstimatorInput, EstimatorOptions, Method,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceOptions {
    pub max_iter: usize,
    /// Largest admissible absolute difference between weighted control
    /// means and targets.
    pub tol: f64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSolution {
    /// Weights summing to 1.
    pub weights: Vec<f64>,
    /// Dual variables on the scaled constraint columns.
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub max_violation: f64,
}

/// Reweight rows of `c` (one row per control, one column per constraint)
/// so that the weighted column means equal `targets`, minimizing the
/// Kullback-Leibler divergence from `base`. Solved by damped Newton steps
/// on the dual `log sum_j q_j exp(lambda' (c_j - t))`.
pub fn entropy_balance(
    c: &DMatrix<f64>,
    targets: &[f64],
    base: &[f64],
    names: &[String],
    opts: &BalanceOptions,
) -> Result<BalanceSolution> {
    let (n, k) = c.shape();
    if targets.len() != k || base.len() != n || names.len() != k {
        return Err(Error::invalid("balance inputs have inconsistent shapes"));
    }
    if n == 0 {
        return Err(Error::invalid("no units to reweight"));
    }
    if base.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
        return Err(Error::invalid("base weights must be finite and nonnegative"));
    }
    let qsum: f64 = base.iter().sum();
    if qsum <= 0.0 {
        return Err(Error::invalid("base weights sum to zero"));
    }
    let logq: Vec<f64> = base.iter().map(|q| (q / qsum).ln()).collect();

    // Centre on the targets and scale each column by its spread; columns
    // constant among the controls are either already satisfied or make the
    // problem infeasible.
    let mut active = Vec::new();
    let mut scales = Vec::new();
    for j in 0..k {
        let col: Vec<f64> = (0..n).map(|i| c[(i, j)] - targets[j]).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = hi - lo;
        if spread <= 1e-12 * (1.0 + targets[j].abs()) {
            if col[0].abs() > opts.tol {
                return Err(Error::BalanceInfeasible {
                    column: names[j].clone(),
                    violation: col[0],
                });
            }
            continue;
        }
        if lo > 0.0 || hi < 0.0 {
            return Err(Error::BalanceInfeasible {
                column: names[j].clone(),
                violation: if lo > 0.0 { lo } else { hi },
            });
        }
        active.push(j);
        scales.push(spread);
    }
    let m = active.len();
    let d = DMatrix::from_fn(n, m, |i, a| (c[(i, active[a])] - targets[active[a]]) / scales[a]);

    let eval = |lambda: &DVector<f64>| -> (f64, Vec<f64>) {
        let eta: Vec<f64> = (0..n)
            .map(|i| logq[i] + (0..m).map(|a| d[(i, a)] * lambda[a]).sum::<f64>())
            .collect();
        let top = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = eta.iter().map(|e| (e - top).exp()).sum();
        let w = eta.iter().map(|e| (e - top).exp() / s).collect();
        (top + s.ln(), w)
    };
    let violations = |w: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|j| (0..n).map(|i| w[i] * c[(i, j)]).sum::<f64>() - targets[j])
            .collect()
    };

    let mut lambda = DVector::zeros(m);
    let (mut f, mut w) = eval(&lambda);
    for it in 0..=opts.max_iter {
        let viol = violations(&w);
        let worst = viol.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if worst <= opts.tol {
            return Ok(BalanceSolution {
                weights: w,
                lambda: lambda.iter().copied().collect(),
                iterations: it,
                max_violation: worst,
            });
        }
        if it == opts.max_iter {
            return Err(Error::BalanceNonConvergence {
                iterations: it,
                max_violation: worst,
            });
        }
        let grad = DVector::from_fn(m, |a, _| (0..n).map(|i| w[i] * d[(i, a)]).sum::<f64>());
        let mut hess = DMatrix::zeros(m, m);
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            for a in 0..m {
                let da = d[(i, a)] * w[i];
                for b in 0..=a {
                    hess[(a, b)] += da * d[(i, b)];
                }
            }
        }
        for a in 0..m {
            for b in 0..=a {
                let v = hess[(a, b)] - grad[a] * grad[b];
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        let jitter = 1e-12 * (1.0 + hess.trace() / m as f64);
        for a in 0..m {
            hess[(a, a)] += jitter;
        }
        let step = match cholesky(&hess) {
            Ok(l) => cholesky_solve(&l, &grad),
            Err(_) => hess
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::invalid(format!("balance Newton step: {e}")))?
                * &grad,
        };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &lambda - &step * t;
            let (fc, wc) = eval(&cand);
            if fc <= f - 1e-4 * t * slope || (fc <= f && t < 1e-6) {
                lambda = cand;
                f = fc;
                w = wc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || lambda.amax() > 1e6 {
            let (j, v) = viol
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(j, &v)| (j, v))
                .unwrap_or((0, worst));
            return Err(Error::BalanceInfeasible {
                column: names[j].clone(),
                violation: v,
            });
        }
    }
    unreachable!("loop returns on the last iteration")
}

struct BalanceFit {
    estimate: f64,
    effects: Vec<f64>,
    solution: BalanceSolution,
}

fn balance_point(
    input: &EstimatorInput,
    mu0: &[f64],
    opts: &EstimatorOptions,
) -> Result<BalanceFit> {
    let fit = fit_propensity(&input.x, &input.z)?;
    let w_att = att_weights(&input.z, &fit.fitted, opts.truncation);
    let treated = input.treated();
    let controls = input.controls();
    let p = input.x.ncols();
    // Constraint columns: every covariate plus the fitted control surface.
    let value = |i: usize, j: usize| if j < p { input.x[(i, j)] } else { mu0[i] };
    let c = DMatrix::from_fn(controls.len(), p + 1, |r, j| value(controls[r], j));
    let targets: Vec<f64> = (0..=p)
        .map(|j| mean(&treated.iter().map(|&i| value(i, j)).collect::<Vec<_>>()))
        .collect();
    let names: Vec<String> = (0..p)
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("mu0_hat".to_owned()))
        .collect();
    let base = pick(&w_att, &controls);
    let solution = entropy_balance(&c, &targets, &base, &names, &opts.balance)?;
    let correction: f64 = controls
        .iter()
        .zip(&solution.weights)
        .map(|(&i, w)| w * (input.y[i] - mu0[i]))
        .sum();
    let effects: Vec<f64> = treated
        .iter()
        .map(|&i| input.y[i] - mu0[i] - correction)
        .collect();
    Ok(BalanceFit {
        estimate: mean(&effects),
        effects,
        solution,
    })
}

/// Doubly robust entropy balancing: ATT logistic base weights are tilted so
/// that controls match treated means of every covariate and of the boosted
/// control surface; the estimate is the treated mean minus the balanced
/// control mean.
pub fn entropy_balance_dr(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let (mu0, rounds) = control_surface_cv(input, opts)?;
    let fit = balance_point(input, &mu0, opts)?;
    let (boot_rounds, cfg) = bootstrap_config(opts, rounds);
    let boot = bootstrap_interval(
        input,
        fit.estimate,
        opts.bootstrap,
        opts.seed,
        opts.interval,
        opts.level,
        |d| {
            let mu0 = control_surface_fixed(d, boot_rounds, &cfg)?;
            balance_point(d, &mu0, opts).map(|f| f.estimate)
        },
    )?;
    let w = &fit.solution.weights;
    Ok(
        EstimateResult::new(Method::EntropyBalanceDr, fit.estimate, (boot.lo, boot.hi))
            .diag("newton_iterations", fit.solution.iterations as f64)
            .diag("max_violation", fit.solution.max_violation)
            .diag("control_ess", effective_sample_size(w))
            .diag("rounds_mu0", rounds as f64)
            .diag("bootstrap_failures", boot.failed as f64)
            .effects(fit.effects),
    )
}
