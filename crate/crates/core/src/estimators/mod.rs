//! SATT estimators over observable data only.
//!
//! Every method receives an [`EstimatorInput`] (covariates, treatment,
//! outcome) and returns an [`EstimateResult`]. The oracle baseline lives in
//! [`oracle`] and needs a [`crate::dgp::Realization`], which observable
//! methods never see.

mod balance;
mod bootstrap;
mod flexible;
pub mod gbm;
mod matching;
pub mod oracle;
mod regression;
mod weighting;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use balance::{entropy_balance, entropy_balance_dr, BalanceOptions, BalanceSolution};
pub use bootstrap::{bootstrap_interval, resample, BootstrapInterval, IntervalKind};
pub use flexible::{flexible_fit, flexible_rs, FlexibleFit};
pub use gbm::{fit_gbm, fit_gbm_cv, CvFit, Gbm, GbmConfig};
pub use matching::{nearest_matches, psm_match};
pub use oracle::oracle_catt;
pub use regression::{diff_in_means, ols_adjust, ps_stratify, regression_ra};
pub use weighting::{
    att_weights, effective_sample_size, fit_propensity, ipw_ra_dr, ipw_ra_dr_columns, iptw_att,
};

/// Observable data handed to an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorInput {
    pub x: DMatrix<f64>,
    pub z: Vec<bool>,
    pub y: Vec<f64>,
}

impl EstimatorInput {
    pub fn new(x: DMatrix<f64>, z: Vec<bool>, y: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        if z.len() != n || y.len() != n {
            return Err(Error::invalid(format!(
                "input lengths differ: x has {n} rows, z {}, y {}",
                z.len(),
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("y[{i}] is not finite")));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "x[{}, {}] is not finite",
                k % n.max(1),
                k / n.max(1)
            )));
        }
        let input = Self { x, z, y };
        if input.n_treated() == 0 {
            return Err(Error::NoTreated);
        }
        if input.n_treated() == n {
            return Err(Error::invalid("no control units"));
        }
        Ok(input)
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn n_treated(&self) -> usize {
        self.z.iter().filter(|&&t| t).count()
    }

    pub fn treated(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.z[i]).collect()
    }

    pub fn controls(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.z[i]).collect()
    }

    /// Rows in the given order (repeats allowed).
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: crate::linalg::select_rows(&self.x, rows),
            z: rows.iter().map(|&i| self.z[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// The same data with a subset of covariate columns.
    pub fn with_columns(&self, cols: &[usize]) -> Self {
        Self {
            x: crate::linalg::select_columns(&self.x, cols),
            z: self.z.clone(),
            y: self.y.clone(),
        }
    }
}

/// One method's estimate on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: String,
    pub satt_hat: f64,
    pub lo: f64,
    pub hi: f64,
    /// Per-treated-unit effect estimates, in row order of the treated units.
    pub individual_effects: Option<Vec<f64>>,
    pub wall_time: f64,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl EstimateResult {
    pub fn new(method: Method, satt_hat: f64, (lo, hi): (f64, f64)) -> Self {
        Self {
            method: method.name().to_owned(),
            satt_hat,
            lo: lo.min(satt_hat),
            hi: hi.max(satt_hat),
            individual_effects: None,
            wall_time: 0.0,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.lo <= truth && truth <= self.hi
    }

    fn diag(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_owned(), value);
        self
    }

    fn effects(mut self, effects: Vec<f64>) -> Self {
        self.individual_effects = Some(effects);
        self
    }
}

/// Shared tuning for all estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Bootstrap resamples for methods whose interval is bootstrapped.
    pub bootstrap: usize,
    pub interval: IntervalKind,
    pub level: f64,
    pub seed: u64,
    /// Fitted propensities are clamped to this range.
    pub truncation: (f64, f64),
    pub n_strata: usize,
    pub cv_folds: usize,
    pub gbm: GbmConfig,
    /// Boosting rounds used for refits inside the bootstrap.
    pub bootstrap_rounds: usize,
    pub balance: BalanceOptions,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            bootstrap: 250,
            interval: IntervalKind::Percentile,
            level: 0.95,
            seed: 0,
            truncation: (0.01, 0.99),
            n_strata: 5,
            cv_folds: 5,
            gbm: GbmConfig::default(),
            bootstrap_rounds: 200,
            balance: BalanceOptions::default(),
        }
    }
}

/// Registered methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DiffInMeans,
    OlsAdjust,
    RegressionRa,
    IptwAtt,
    IpwRaDr,
    PsmMatch,
    PsStratify,
    EntropyBalanceDr,
    FlexibleRs,
    /// Needs oracle access; only the harness can run it.
    OracleCatt,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::DiffInMeans,
        Method::OlsAdjust,
        Method::RegressionRa,
        Method::IptwAtt,
        Method::IpwRaDr,
        Method::PsmMatch,
        Method::PsStratify,
        Method::EntropyBalanceDr,
        Method::FlexibleRs,
        Method::OracleCatt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DiffInMeans => "diff_in_means",
            Method::OlsAdjust => "ols_adjust",
            Method::RegressionRa => "regression_ra",
            Method::IptwAtt => "iptw_att",
            Method::IpwRaDr => "ipw_ra_dr",
            Method::PsmMatch => "psm_match",
            Method::PsStratify => "ps_stratify",
            Method::EntropyBalanceDr => "entropy_balance_dr",
            Method::FlexibleRs => "flexible_rs",
            Method::OracleCatt => "oracle_catt",
        }
    }

    pub fn is_oracle(self) -> bool {
        self == Method::OracleCatt
    }

    /// Comma-separated list of every registered name.
    pub fn registered() -> String {
        Method::ALL.map(Method::name).join(", ")
    }

    /// Run an observable-data method, timing it.
    pub fn estimate(self, input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
        let start = Instant::now();
        let mut out = match self {
            Method::DiffInMeans => diff_in_means(input, opts),
            Method::OlsAdjust => ols_adjust(input, opts),
            Method::RegressionRa => regression_ra(input, opts),
            Method::IptwAtt => iptw_att(input, opts),
            Method::IpwRaDr => ipw_ra_dr(input, opts),
            Method::PsmMatch => psm_match(input, opts),
            Method::PsStratify => ps_stratify(input, opts),
            Method::EntropyBalanceDr => entropy_balance_dr(input, opts),
            Method::FlexibleRs => flexible_rs(input, opts),
            Method::OracleCatt => Err(Error::invalid(
                "oracle_catt needs oracle access; run it through the harness",
            )),
        }?;
        out.wall_time = start.elapsed().as_secs_f64();
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod {
                name: s.to_owned(),
                registered: Method::registered(),
            })
    }
}

/// Values of `v` at `rows`.
pub(crate) fn pick(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| v[i]).collect()
}

/// Covariate columns that vary within `rows`.
pub(crate) fn varying_within(x: &DMatrix<f64>, rows: &[usize]) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| {
            let first = rows.first().map(|&i| x[(i, j)]);
            rows.iter().any(|&i| Some(x[(i, j)]) != first)
        })
        .collect()
}
