//! Method-of-moments variance components of log absolute error over a
//! methods x settings grid with replications.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::explain::log_abs_error;
use super::grid::{EstimateRow, TruthRow};
use super::summary::join_truths;
use super::SCHEMA_VERSION;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub methods: f64,
    pub settings: f64,
    pub interaction: f64,
    /// Realization-to-realization variation within a method and setting.
    pub realizations: f64,
}

impl Components {
    pub fn sum(&self) -> f64 {
        self.methods + self.settings + self.interaction + self.realizations
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            methods: f(self.methods),
            settings: f(self.settings),
            interaction: f(self.interaction),
            realizations: f(self.realizations),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub schema_version: u32,
    pub response: String,
    /// Estimates after truncating negatives to zero.
    pub components: Components,
    pub total: f64,
    pub shares: Components,
    /// Estimates before truncation.
    pub raw: Components,
    /// Names of components that were negative and set to zero.
    pub truncated: Vec<String>,
    /// Sums of squares; in a balanced grid they add up to the total sum of
    /// squares about the grand mean.
    pub sums_of_squares: Components,
    pub total_sum_of_squares: f64,
    pub n_methods: usize,
    pub n_settings: usize,
    pub observations: usize,
    /// Harmonic mean of replications per method x setting cell.
    pub replications: f64,
}

/// One response value labelled by method and setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub method: usize,
    pub setting: usize,
    pub value: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Decompose labelled observations. Every method x setting cell must be
/// present; unequal replication counts are handled by unweighted cell means
/// with the harmonic-mean replication count.
pub fn decompose(obs: &[Observation]) -> Result<VarianceComponents> {
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for o in obs {
        if !o.value.is_finite() {
            return Err(Error::invalid("non-finite response in variance decomposition"));
        }
        cells.entry((o.method, o.setting)).or_default().push(o.value);
    }
    let methods: Vec<usize> = {
        let mut v: Vec<usize> = cells.keys().map(|k| k.0).collect();
        v.dedup();
        v
    };
    let mut settings: Vec<usize> = cells.keys().map(|k| k.1).collect();
    settings.sort_unstable();
    settings.dedup();
    let (m, s) = (methods.len(), settings.len());
    if m == 0 {
        return Err(Error::invalid("no observations"));
    }
    if s < 2 {
        return Err(Error::invalid("variance components need at least 2 settings"));
    }
    let mut means = vec![vec![0.0; s]; m];
    let mut inv_sum = 0.0;
    let mut ss_e = 0.0;
    for (a, &mi) in methods.iter().enumerate() {
        for (b, &si) in settings.iter().enumerate() {
            let v = cells.get(&(mi, si)).ok_or_else(|| {
                Error::invalid(format!("method {mi} has no observations in setting {si}"))
            })?;
            let mu = mean(v);
            means[a][b] = mu;
            inv_sum += 1.0 / v.len() as f64;
            ss_e += v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>();
        }
    }
    let n = obs.len();
    let df_e = n as f64 - (m * s) as f64;
    if df_e < 1.0 {
        return Err(Error::invalid("variance components need at least 2 replications per cell"));
    }
    let r = (m * s) as f64 / inv_sum;
    let row: Vec<f64> = means.iter().map(|v| mean(v)).collect();
    let col: Vec<f64> = (0..s).map(|b| means.iter().map(|v| v[b]).sum::<f64>() / m as f64).collect();
    let grand = mean(&row);
    let ss_m = s as f64 * r * row.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let ss_s = m as f64 * r * col.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let mut ss_ms = 0.0;
    for a in 0..m {
        for b in 0..s {
            ss_ms += r * (means[a][b] - row[a] - col[b] + grand).powi(2);
        }
    }
    let all: Vec<f64> = obs.iter().map(|o| o.value).collect();
    let overall = mean(&all);
    let ss_t: f64 = all.iter().map(|x| (x - overall).powi(2)).sum();

    let ms_e = ss_e / df_e;
    let ms_s = ss_s / (s - 1) as f64;
    let raw = if m == 1 {
        Components {
            methods: 0.0,
            settings: (ms_s - ms_e) / r,
            interaction: 0.0,
            realizations: ms_e,
        }
    } else {
        let ms_m = ss_m / (m - 1) as f64;
        let ms_ms = ss_ms / ((m - 1) * (s - 1)) as f64;
        Components {
            methods: (ms_m - ms_ms) / (s as f64 * r),
            settings: (ms_s - ms_ms) / (m as f64 * r),
            interaction: (ms_ms - ms_e) / r,
            realizations: ms_e,
        }
    };
    let components = raw.map(|v| v.max(0.0));
    let truncated = [
        ("methods", raw.methods),
        ("settings", raw.settings),
        ("interaction", raw.interaction),
        ("realizations", raw.realizations),
    ]
    .iter()
    .filter(|(_, v)| *v < 0.0)
    .map(|(k, _)| (*k).to_owned())
    .collect();
    let total = components.sum();
    let shares = if total > 0.0 {
        components.map(|v| v / total)
    } else {
        components.map(|_| 0.0)
    };
    Ok(VarianceComponents {
        schema_version: SCHEMA_VERSION,
        response: "log_abs_error".into(),
        components,
        total,
        shares,
        raw,
        truncated,
        sums_of_squares: Components {
            methods: ss_m,
            settings: ss_s,
            interaction: ss_ms,
            realizations: ss_e,
        },
        total_sum_of_squares: ss_t,
        n_methods: m,
        n_settings: s,
        observations: n,
        replications: r,
    })
}

/// Components of `log(|estimate - satt| + 1e-6)` over successful rows.
pub fn variance_components(
    estimates: &[EstimateRow],
    truths: &[TruthRow],
) -> Result<VarianceComponents> {
    let truth = join_truths(estimates, truths)?;
    let obs: Vec<Observation> = estimates
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| Observation {
            method: r.method as usize,
            setting: r.setting,
            value: log_abs_error(r.satt_hat.unwrap_or_default() - truth[&r.key()]),
        })
        .collect();
    decompose(&obs)
}
