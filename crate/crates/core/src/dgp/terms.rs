//! Function terms used to assemble assignment mechanisms and response
//! surfaces over the standardized covariates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Above,
    AtOrBelow,
}

/// One threshold condition `x_j > cutoff` or `x_j <= cutoff`, with the
/// cutoff taken at a marginal quantile of column `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub column: usize,
    pub direction: Direction,
    pub quantile: f64,
    pub cutoff: f64,
}

impl Condition {
    pub fn holds(&self, v: f64) -> bool {
        match self.direction {
            Direction::Above => v > self.cutoff,
            Direction::AtOrBelow => v <= self.cutoff,
        }
    }
}

/// A basis function of the standardized covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    Linear {
        column: usize,
    },
    Quadratic {
        column: usize,
    },
    Cubic {
        column: usize,
    },
    /// `I{x <= threshold}`
    Jump {
        column: usize,
        threshold: f64,
    },
    /// `(x - location) I{x <= threshold}`
    Kink {
        column: usize,
        location: f64,
        threshold: f64,
    },
    /// Product of two or three factors.
    Interaction {
        factors: Vec<Basis>,
    },
    /// `exp` of a sum of weighted sub-functions.
    Exponential {
        inner: Vec<FunctionTerm>,
    },
    /// Product of threshold indicators (a penalty-region indicator).
    Region {
        conditions: Vec<Condition>,
    },
}

impl Basis {
    pub fn value(&self, row: &[f64]) -> f64 {
        match self {
            Basis::Linear { column } => row[*column],
            Basis::Quadratic { column } => row[*column] * row[*column],
            Basis::Cubic { column } => row[*column].powi(3),
            Basis::Jump { column, threshold } => {
                if row[*column] <= *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Basis::Kink {
                column,
                location,
                threshold,
            } => {
                let v = row[*column];
                if v <= *threshold {
                    v - location
                } else {
                    0.0
                }
            }
            Basis::Interaction { factors } => factors.iter().map(|f| f.value(row)).product(),
            Basis::Exponential { inner } => inner
                .iter()
                .map(|t| t.coefficient * t.basis.value(row))
                .sum::<f64>()
                .exp(),
            Basis::Region { conditions } => {
                if conditions.iter().all(|c| c.holds(row[c.column])) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Covariate columns this basis reads, in first-use order.
    pub fn columns(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns(&self, out: &mut Vec<usize>) {
        let mut push = |c: usize| {
            if !out.contains(&c) {
                out.push(c);
            }
        };
        match self {
            Basis::Linear { column }
            | Basis::Quadratic { column }
            | Basis::Cubic { column }
            | Basis::Jump { column, .. }
            | Basis::Kink { column, .. } => push(*column),
            Basis::Interaction { factors } => {
                for f in factors {
                    f.collect_columns(out);
                }
            }
            Basis::Exponential { inner } => {
                for t in inner {
                    t.basis.collect_columns(out);
                }
            }
            Basis::Region { conditions } => {
                for c in conditions {
                    push(c.column);
                }
            }
        }
    }

    /// Highest polynomial degree in any single column.
    pub fn degree(&self) -> usize {
        match self {
            Basis::Linear { .. } | Basis::Jump { .. } | Basis::Kink { .. } | Basis::Region { .. } => 1,
            Basis::Quadratic { .. } => 2,
            Basis::Cubic { .. } => 3,
            Basis::Interaction { factors } => factors.iter().map(Basis::degree).max().unwrap_or(0),
            Basis::Exponential { inner } => inner.iter().map(|t| t.basis.degree()).max().unwrap_or(0),
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, Basis::Exponential { .. })
    }

    /// Evaluate on every row of `x`.
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                self.value(&row)
            })
            .collect()
    }
}

/// A weighted basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionTerm {
    pub basis: Basis,
    pub coefficient: f64,
}

impl FunctionTerm {
    pub fn new(basis: Basis, coefficient: f64) -> Self {
        Self { basis, coefficient }
    }
}

/// `sum_k coefficient_k * basis_k(x_i)` for every row.
pub fn evaluate_sum(terms: &[FunctionTerm], x: &DMatrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; x.nrows()];
    for t in terms {
        for (o, v) in out.iter_mut().zip(t.basis.evaluate(x)) {
            *o += t.coefficient * v;
        }
    }
    out
}
