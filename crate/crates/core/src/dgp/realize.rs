//! Drawing treatment and outcomes from a rescaled DGP.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use super::spec::DgpSpec;
use crate::covariates::Standardized;
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RealizeOptions {
    /// When false, potential outcomes equal their conditional means.
    pub noise: bool,
}

impl Default for RealizeOptions {
    fn default() -> Self {
        Self { noise: true }
    }
}

/// Observed data for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub z: Vec<bool>,
    pub y: Vec<f64>,
}

impl Observed {
    pub fn treated(&self) -> usize {
        self.z.iter().filter(|&&z| z).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["z", "y"])?;
        for (z, y) in self.z.iter().zip(&self.y) {
            w.write_record([u8::from(*z).to_string(), fmt(*y)])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_numeric(path, &["z", "y"])?;
        let mut z = Vec::with_capacity(rows.len());
        let mut y = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            z.push(match r[0] {
                v if v == 0.0 => false,
                v if v == 1.0 => true,
                v => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        message: format!("row {}, column z: expected 0 or 1, found {v}", i + 1),
                    })
                }
            });
            y.push(r[1]);
        }
        Ok(Self { z, y })
    }
}

/// Ground truth withheld from estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub e: Vec<f64>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// `y1 - y0`, noise included.
    pub tau: Vec<f64>,
    /// `mu1 - mu0`, the noiseless individual effect.
    pub cate: Vec<f64>,
}

const TRUTH_COLUMNS: [&str; 7] = ["e", "mu0", "mu1", "y0", "y1", "tau", "cate"];

impl Truth {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(TRUTH_COLUMNS)?;
        for i in 0..self.e.len() {
            w.write_record(
                [
                    self.e[i], self.mu0[i], self.mu1[i], self.y0[i], self.y1[i], self.tau[i],
                    self.cate[i],
                ]
                .map(fmt),
            )?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_numeric(path, &TRUTH_COLUMNS)?;
        let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
        Ok(Self {
            e: col(0),
            mu0: col(1),
            mu1: col(2),
            y0: col(3),
            y1: col(4),
            tau: col(5),
            cate: col(6),
        })
    }
}

/// One generated dataset with its oracle truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub observed: Observed,
    pub truth: Truth,
    pub penalized: Vec<bool>,
}

impl Realization {
    pub fn n(&self) -> usize {
        self.observed.z.len()
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        treated_indices(&self.observed.z)
    }

    pub fn treated_fraction(&self) -> f64 {
        self.observed.treated() as f64 / self.n() as f64
    }

    /// Mean of `y1 - y0` over treated units.
    pub fn satt(&self) -> Result<f64> {
        satt(&self.observed.z, &self.truth.tau)
    }

    /// Mean of `mu1 - mu0` over treated units.
    pub fn catt(&self) -> Result<f64> {
        satt(&self.observed.z, &self.truth.cate)
    }
}

pub fn treated_indices(z: &[bool]) -> Vec<usize> {
    z.iter()
        .enumerate()
        .filter(|(_, &t)| t)
        .map(|(i, _)| i)
        .collect()
}

/// Mean of `tau` over units with `z = 1`.
pub fn satt(z: &[bool], tau: &[f64]) -> Result<f64> {
    if z.len() != tau.len() {
        return Err(Error::invalid(format!(
            "z has {} entries but tau has {}",
            z.len(),
            tau.len()
        )));
    }
    let (sum, count) = z
        .iter()
        .zip(tau)
        .filter(|(&t, _)| t)
        .fold((0.0, 0usize), |(s, c), (_, v)| (s + v, c + 1));
    if count == 0 {
        return Err(Error::NoTreated);
    }
    Ok(sum / count as f64)
}

/// Draw one realization. Treatment and noise use separate streams derived
/// from `seed`, so the assignment vector does not depend on the noise draws.
pub fn realize(
    spec: &DgpSpec,
    x: &Standardized,
    seed: u64,
    options: RealizeOptions,
) -> Result<Realization> {
    let s = spec.surfaces(&x.matrix);
    let n = x.rows();
    let mut assign = rng::derived_stream(seed, &[purpose::ASSIGNMENT]);
    let z: Vec<bool> = s
        .propensity
        .iter()
        .map(|&e| assign.random::<f64>() < e)
        .collect();

    let (mut y0, mut y1) = (s.mu0.clone(), s.mu1.clone());
    if options.noise && spec.noise.scale > 0.0 {
        let t = StudentT::new(spec.noise.df)
            .map_err(|e| Error::invalid(format!("noise df: {e}")))?;
        let mut noise = rng::derived_stream(seed, &[purpose::NOISE]);
        for i in 0..n {
            y0[i] += spec.noise.scale * t.sample(&mut noise);
            y1[i] += spec.noise.scale * t.sample(&mut noise);
        }
    }
    let y = (0..n).map(|i| if z[i] { y1[i] } else { y0[i] }).collect();
    let tau = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
    Ok(Realization {
        observed: Observed { z, y },
        truth: Truth {
            e: s.propensity,
            mu0: s.mu0,
            mu1: s.mu1,
            y0,
            y1,
            tau,
            cate: s.cate,
        },
        penalized: s.penalized,
    })
}

/// Manifest entry for one generated realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub setting: usize,
    pub replication: usize,
    pub seed: u64,
    pub satt: f64,
}

/// Shortest round-tripping decimal representation.
pub(crate) fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

/// Read a headed CSV of numbers, checking the header against `expected`.
pub(crate) fn read_numeric(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let parse_err = |message: String| Error::Parse {
        path: path.display().to_string(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != expected {
        return Err(parse_err(format!(
            "expected header {expected:?}, found {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(format!("row {}: {e}", i + 1)))?;
        let mut row = Vec::with_capacity(expected.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(format!(
                    "row {}, column {}: cannot parse '{cell}' as a number",
                    i + 1,
                    expected[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(parse_err(format!(
                    "row {}, column {}: non-finite value",
                    i + 1,
                    expected[j]
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}
