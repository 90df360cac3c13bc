use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EstimatorInput;
use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::stats::{normal_quantile, quantile, sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Percentile,
    /// Point estimate plus or minus a normal quantile times the bootstrap sd.
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapInterval {
    pub lo: f64,
    pub hi: f64,
    pub replicates: Vec<f64>,
    pub failed: usize,
}

/// Row indices of a resample drawn with replacement within each treatment
/// group, so group sizes are preserved.
pub fn resample(z: &[bool], seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed);
    let treated: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
    let controls: Vec<usize> = (0..z.len()).filter(|&i| !z[i]).collect();
    let mut rows = Vec::with_capacity(z.len());
    for group in [&treated, &controls] {
        for _ in 0..group.len() {
            rows.push(group[rng.random_range(0..group.len())]);
        }
    }
    rows
}

/// Bootstrap interval for `estimate` at `input`. Resample `b` uses a seed
/// derived from `(seed, b)`, so results do not depend on evaluation order.
/// The percentile interval is widened if needed to contain `point`.
pub fn bootstrap_interval<F>(
    input: &EstimatorInput,
    point: f64,
    resamples: usize,
    seed: u64,
    kind: IntervalKind,
    level: f64,
    estimate: F,
) -> Result<BootstrapInterval>
where
    F: Fn(&EstimatorInput) -> Result<f64>,
{
    if resamples < 2 {
        return Err(Error::invalid("the bootstrap needs at least 2 resamples"));
    }
    let mut replicates = Vec::with_capacity(resamples);
    let mut failed = 0;
    for b in 0..resamples {
        let rows = resample(&input.z, rng::derive_seed(seed, &[purpose::BOOTSTRAP, b as u64]));
        match estimate(&input.subset(&rows)) {
            Ok(v) if v.is_finite() => replicates.push(v),
            _ => failed += 1,
        }
    }
    if failed * 10 > resamples || replicates.len() < 2 {
        return Err(Error::Bootstrap {
            failed,
            total: resamples,
        });
    }
    let alpha = 1.0 - level;
    let (lo, hi) = match kind {
        IntervalKind::Percentile => (
            quantile(&replicates, alpha / 2.0).min(point),
            quantile(&replicates, 1.0 - alpha / 2.0).max(point),
        ),
        IntervalKind::Normal => {
            let half = normal_quantile(1.0 - alpha / 2.0) * sd(&replicates);
            (point - half, point + half)
        }
    };
    Ok(BootstrapInterval {
        lo,
        hi,
        replicates,
        failed,
    })
}
