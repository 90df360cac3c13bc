//! One-to-one nearest-neighbour matching with replacement on the estimated
//! propensity logit.

use nalgebra::DVector;

use super::weighting::fit_propensity;
use super::{EstimateResult, EstimatorInput, EstimatorOptions, Method};
use crate::error::{Error, Result};
use crate::linalg::{select_columns, with_intercept};
use crate::stats::{mean, normal_quantile};

/// For each treated unit (in row order), the control row whose score is
/// closest. Ties go to the lowest row index.
pub fn nearest_matches(score: &[f64], z: &[bool]) -> Result<Vec<usize>> {
    let controls: Vec<usize> = (0..z.len()).filter(|&i| !z[i]).collect();
    if controls.is_empty() {
        return Err(Error::invalid("matching needs at least one control"));
    }
    Ok((0..z.len())
        .filter(|&i| z[i])
        .map(|i| nearest(score, score[i], &controls, None))
        .collect())
}

fn nearest(score: &[f64], target: f64, pool: &[usize], exclude: Option<usize>) -> usize {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for &j in pool {
        if Some(j) == exclude {
            continue;
        }
        let d = (score[j] - target).abs();
        if d < best_d || (d == best_d && j < best) {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Propensity-score matching for the treated. The variance adds the
/// spread of matched-pair differences to a term for controls reused as
/// matches, with control conditional variances estimated from each
/// control's nearest other control.
pub fn psm_match(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let fit = fit_propensity(&input.x, &input.z)?;
    let all: Vec<usize> = (0..input.n()).collect();
    let cols = super::varying_within(&input.x, &all);
    let eta: DVector<f64> = with_intercept(&select_columns(&input.x, &cols)) * &fit.coef;
    let score: Vec<f64> = eta.iter().copied().collect();
    let matches = nearest_matches(&score, &input.z)?;
    let treated = input.treated();
    let diffs: Vec<f64> = treated
        .iter()
        .zip(&matches)
        .map(|(&i, &m)| input.y[i] - input.y[m])
        .collect();
    let est = mean(&diffs);
    let n1 = diffs.len() as f64;

    let mut uses = vec![0usize; input.n()];
    for &m in &matches {
        uses[m] += 1;
    }
    let controls = input.controls();
    let pair_term: f64 = diffs.iter().map(|d| (d - est).powi(2)).sum();
    let reuse_term: f64 = if controls.len() > 1 {
        controls
            .iter()
            .filter(|&&j| uses[j] > 1)
            .map(|&j| {
                let k = uses[j] as f64;
                let other = nearest(&score, score[j], &controls, Some(j));
                let s2 = 0.5 * (input.y[j] - input.y[other]).powi(2);
                k * (k - 1.0) * s2
            })
            .sum()
    } else {
        0.0
    };
    let se = ((pair_term + reuse_term) / (n1 * n1)).sqrt();
    let half = normal_quantile(0.5 + opts.level / 2.0) * se;
    let distinct = uses.iter().filter(|&&u| u > 0).count();
    Ok(EstimateResult::new(Method::PsmMatch, est, (est - half, est + half))
        .diag("se", se)
        .diag("distinct_controls", distinct as f64)
        .diag("max_reuse", uses.iter().copied().max().unwrap_or(0) as f64)
        .effects(diffs))
}
