//! The realized data-generating process and its evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::knobs::Knobs;
use super::terms::{evaluate_sum, Basis, Condition, FunctionTerm};
use crate::error::{Error, Result};
use crate::stats::sigmoid;

/// A conjunction of threshold conditions whose rows can never be treated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRegion {
    pub conditions: Vec<Condition>,
}

impl PenaltyRegion {
    pub fn contains(&self, row: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.holds(row[c.column]))
    }

    pub fn as_basis(&self) -> Basis {
        Basis::Region {
            conditions: self.conditions.clone(),
        }
    }
}

/// `logit e(x) = intercept + scale * sum(terms)` outside penalty regions;
/// `e(x) = 0` inside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMechanism {
    pub terms: Vec<FunctionTerm>,
    pub intercept: f64,
    pub scale: f64,
    pub penalty_regions: Vec<PenaltyRegion>,
    pub target_share: f64,
}

/// `mu0(x) = shift + scale * sum(terms)`,
/// `mu1(x) = mu0(x) + effect_shift + scale * sum(effect_terms)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface {
    pub terms: Vec<FunctionTerm>,
    pub effect_terms: Vec<FunctionTerm>,
    pub shift: f64,
    pub scale: f64,
    pub effect_shift: f64,
    /// Propensity-weighted average of `mu1 - mu0` on the build sample.
    pub target_effect: f64,
    /// Indices into `terms` that were copied from the assignment mechanism.
    pub copied_from_assignment: Vec<usize>,
}

/// Student-t outcome noise: `scale * t_df`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub df: f64,
    pub scale: f64,
}

impl NoiseModel {
    pub fn variance(&self) -> f64 {
        self.scale * self.scale * self.df / (self.df - 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub knobs: Knobs,
    pub seed: u64,
    pub assignment: AssignmentMechanism,
    pub response: ResponseSurface,
    pub noise: NoiseModel,
}

/// Oracle quantities of a DGP evaluated on a covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceValues {
    pub propensity: Vec<f64>,
    pub penalized: Vec<bool>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    /// `mu1 - mu0` evaluated directly from the effect terms.
    pub cate: Vec<f64>,
}

impl DgpSpec {
    pub fn raw_logit(&self, x: &DMatrix<f64>) -> Vec<f64> {
        evaluate_sum(&self.assignment.terms, x)
    }

    pub fn penalized(&self, x: &DMatrix<f64>) -> Vec<bool> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                self.assignment
                    .penalty_regions
                    .iter()
                    .any(|reg| reg.contains(&row))
            })
            .collect()
    }

    /// Logit of the propensity score; `-inf` inside penalty regions.
    pub fn logit(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let a = &self.assignment;
        self.raw_logit(x)
            .into_iter()
            .zip(self.penalized(x))
            .map(|(r, pen)| {
                if pen {
                    f64::NEG_INFINITY
                } else {
                    a.intercept + a.scale * r
                }
            })
            .collect()
    }

    pub fn propensity(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.logit(x)
            .into_iter()
            .map(|l| if l == f64::NEG_INFINITY { 0.0 } else { sigmoid(l) })
            .collect()
    }

    pub fn mu0(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let r = &self.response;
        evaluate_sum(&r.terms, x)
            .into_iter()
            .map(|v| r.shift + r.scale * v)
            .collect()
    }

    pub fn cate(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let r = &self.response;
        if r.effect_terms.is_empty() {
            return vec![r.effect_shift; x.nrows()];
        }
        evaluate_sum(&r.effect_terms, x)
            .into_iter()
            .map(|v| r.effect_shift + r.scale * v)
            .collect()
    }

    pub fn surfaces(&self, x: &DMatrix<f64>) -> SurfaceValues {
        let mu0 = self.mu0(x);
        let cate = self.cate(x);
        let mu1 = mu0.iter().zip(&cate).map(|(a, b)| a + b).collect();
        SurfaceValues {
            propensity: self.propensity(x),
            penalized: self.penalized(x),
            mu0,
            mu1,
            cate,
        }
    }

    /// Number of response terms copied from the assignment mechanism.
    pub fn shared_terms(&self) -> usize {
        self.response.copied_from_assignment.len()
    }

    /// Fraction of assignment terms that were copied into the response.
    pub fn copied_fraction(&self) -> f64 {
        if self.assignment.terms.is_empty() {
            return 0.0;
        }
        self.shared_terms() as f64 / self.assignment.terms.len() as f64
    }

    /// Every distinct basis used anywhere in the DGP (assignment, response,
    /// effect and penalty-region terms), in first-use order.
    pub fn ground_truth_bases(&self) -> Vec<Basis> {
        let mut out: Vec<Basis> = Vec::new();
        let all = self
            .assignment
            .terms
            .iter()
            .chain(&self.response.terms)
            .chain(&self.response.effect_terms)
            .map(|t| t.basis.clone())
            .chain(self.assignment.penalty_regions.iter().map(|r| r.as_basis()));
        for b in all {
            if !out.contains(&b) {
                out.push(b);
            }
        }
        out
    }

    /// The ground-truth design: one column per distinct basis.
    pub fn ground_truth_design(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let bases = self.ground_truth_bases();
        let mut m = DMatrix::zeros(x.nrows(), bases.len());
        for (j, b) in bases.iter().enumerate() {
            for (i, v) in b.evaluate(x).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(Error::from)
    }
}
