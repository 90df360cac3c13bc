//! The oracle baseline: conditional average effect on the treated.

use super::{EstimateResult, Method};
use crate::dgp::Realization;
use crate::error::Result;

/// Mean of `mu1(x) - mu0(x)` over treated units, with a zero-width interval.
pub fn oracle_catt(realization: &Realization) -> Result<EstimateResult> {
    let start = std::time::Instant::now();
    let v = realization.catt()?;
    let treated = realization.treated_indices();
    let mut out = EstimateResult::new(Method::OracleCatt, v, (v, v));
    out.individual_effects = Some(treated.iter().map(|&i| realization.truth.cate[i]).collect());
    out.wall_time = start.elapsed().as_secs_f64();
    Ok(out)
}
