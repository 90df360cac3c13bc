//! Synthetic covariate tables.
//!
//! The real study covariates behind the original benchmark are not
//! distributable, so tables are drawn from a Gaussian copula: a latent
//! multivariate normal with a block-structured correlation is pushed through
//! the inverse CDF of each column's marginal. The default schema reproduces
//! the published covariate-type counts (3 categorical, 5 binary, 27 count,
//! 23 continuous); the marginal parameters and the correlation blocks are
//! stand-ins, not calibrated values.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::rng;
use crate::stats::{normal_cdf, quantile_sorted, sorted};

/// Values beyond the 1st..99th percentile window are clipped to this bound.
pub const CLIP: f64 = 1.5;
pub const LOWER_PERCENTILE: f64 = 0.01;
pub const UPPER_PERCENTILE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousFamily {
    Gaussian,
    LogNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical { probabilities: Vec<f64> },
    Binary { p: f64 },
    Count { rate: f64 },
    /// For `LogNormal`, location and scale apply on the log scale.
    Continuous {
        family: ContinuousFamily,
        location: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn categorical(name: &str, probabilities: &[f64]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical {
                probabilities: probabilities.to_vec(),
            },
        }
    }

    pub fn binary(name: &str, p: f64) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Binary { p },
        }
    }

    pub fn count(name: &str, rate: f64) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Count { rate },
        }
    }

    pub fn gaussian(name: &str, location: f64, scale: f64) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous {
                family: ContinuousFamily::Gaussian,
                location,
                scale,
            },
        }
    }

    pub fn lognormal(name: &str, location: f64, scale: f64) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous {
                family: ContinuousFamily::LogNormal,
                location,
                scale,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("column {}: {msg}", self.name)));
        match &self.kind {
            ColumnKind::Categorical { probabilities } => {
                if probabilities.len() < 3 {
                    return bad("categorical columns need at least 3 levels");
                }
                if probabilities.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                    return bad("level probabilities must lie in (0, 1)");
                }
                if (probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("level probabilities must sum to 1");
                }
            }
            ColumnKind::Binary { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return bad("success probability must lie in (0, 1)");
                }
            }
            ColumnKind::Count { rate } => {
                if !(*rate > 0.0) {
                    return bad("rate must be positive");
                }
            }
            ColumnKind::Continuous { scale, location, .. } => {
                if !(*scale > 0.0) || !location.is_finite() {
                    return bad("scale must be positive and location finite");
                }
            }
        }
        Ok(())
    }

    /// Analytic mean and variance of the marginal.
    pub fn moments(&self) -> (f64, f64) {
        match &self.kind {
            ColumnKind::Categorical { probabilities } => {
                let m: f64 = probabilities.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                let m2: f64 = probabilities
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (k * k) as f64 * p)
                    .sum();
                (m, m2 - m * m)
            }
            ColumnKind::Binary { p } => (*p, p * (1.0 - p)),
            ColumnKind::Count { rate } => (*rate, *rate),
            ColumnKind::Continuous {
                family: ContinuousFamily::Gaussian,
                location,
                scale,
            } => (*location, scale * scale),
            ColumnKind::Continuous {
                family: ContinuousFamily::LogNormal,
                location,
                scale,
            } => {
                let s2 = scale * scale;
                let m = (location + s2 / 2.0).exp();
                (m, (s2.exp() - 1.0) * (2.0 * location + s2).exp())
            }
        }
    }

    /// Map a latent standard-normal coordinate onto this marginal.
    fn from_latent(&self, latent: f64) -> f64 {
        match &self.kind {
            ColumnKind::Continuous {
                family,
                location,
                scale,
            } => {
                let v = location + scale * latent;
                match family {
                    ContinuousFamily::Gaussian => v,
                    ContinuousFamily::LogNormal => v.exp(),
                }
            }
            ColumnKind::Binary { p } => {
                if normal_cdf(latent) > 1.0 - p {
                    1.0
                } else {
                    0.0
                }
            }
            ColumnKind::Categorical { probabilities } => {
                let u = normal_cdf(latent);
                let mut acc = 0.0;
                for (k, p) in probabilities.iter().enumerate() {
                    acc += p;
                    if u <= acc {
                        return k as f64;
                    }
                }
                (probabilities.len() - 1) as f64
            }
            ColumnKind::Count { rate } => poisson_quantile(*rate, normal_cdf(latent)) as f64,
        }
    }
}

fn poisson_quantile(rate: f64, u: f64) -> u64 {
    let cap = (rate + 60.0 * rate.sqrt() + 60.0) as u64;
    let mut pmf = (-rate).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    while cdf < u && k < cap {
        k += 1;
        pmf *= rate / k as f64;
        cdf += pmf;
    }
    k
}

/// The full-scale schema: 58 columns, 3 categorical, 5 binary, 27 count and
/// 23 continuous.
pub fn default_schema() -> Vec<ColumnSchema> {
    const CATEGORICAL: [&[f64]; 3] = [
        &[0.5, 0.3, 0.2],
        &[0.4, 0.3, 0.2, 0.1],
        &[0.3, 0.25, 0.2, 0.15, 0.1],
    ];
    const BINARY: [f64; 5] = [0.1, 0.25, 0.4, 0.55, 0.7];

    let mut cols = Vec::with_capacity(58);
    for (i, probs) in CATEGORICAL.iter().enumerate() {
        cols.push(ColumnSchema::categorical(&format!("cat_{}", i + 1), probs));
    }
    for (i, p) in BINARY.iter().enumerate() {
        cols.push(ColumnSchema::binary(&format!("bin_{}", i + 1), *p));
    }
    // Rates evenly spaced over [1, 20].
    for i in 0..27 {
        let rate = 1.0 + 19.0 * i as f64 / 26.0;
        cols.push(ColumnSchema::count(&format!("count_{}", i + 1), rate));
    }
    for i in 0..23 {
        let name = format!("cont_{}", i + 1);
        if i % 2 == 0 {
            let location = -5.0 + 0.5 * i as f64;
            let scale = 1.0 + (i % 4) as f64;
            cols.push(ColumnSchema::gaussian(&name, location, scale));
        } else {
            let location = 0.5 + 0.1 * (i % 5) as f64;
            let scale = 0.25 + 0.1 * (i % 5) as f64;
            cols.push(ColumnSchema::lognormal(&name, location, scale));
        }
    }
    cols
}

/// A 20-column schema with the same type mix at desk scale.
pub fn desk_schema() -> Vec<ColumnSchema> {
    let full = default_schema();
    let pick = |prefix: &str, idx: &[usize]| -> Vec<ColumnSchema> {
        idx.iter()
            .map(|i| {
                full.iter()
                    .find(|c| c.name == format!("{prefix}_{i}"))
                    .cloned()
                    .expect("schema column")
            })
            .collect()
    };
    let mut cols = pick("cat", &[2]);
    cols.extend(pick("bin", &[2, 4]));
    cols.extend(pick("count", &[1, 4, 7, 10, 13, 16, 19, 22, 25]));
    cols.extend(pick("cont", &[1, 2, 3, 4, 5, 6, 7, 8]));
    cols
}

/// Covariate presets: the full-scale layout or a small one for quick grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Paper,
    Desk,
}

impl Preset {
    pub fn rows(self) -> usize {
        match self {
            Preset::Paper => 4802,
            Preset::Desk => 1000,
        }
    }

    pub fn schema(self) -> Vec<ColumnSchema> {
        match self {
            Preset::Paper => default_schema(),
            Preset::Desk => desk_schema(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::invalid(format!(
                "unknown preset '{other}' (expected paper or desk)"
            ))),
        }
    }
}

/// Block-structured correlation for `p` columns.
///
/// Built from a one-factor-per-block model plus a global factor, so it is
/// positive definite by construction: within-block entries fall in
/// [0.3, 0.6] and cross-block entries in [0.06, 0.16]. Blocks interleave
/// columns (`block = index mod blocks`) so each block mixes types.
pub fn block_correlation(p: usize) -> DMatrix<f64> {
    let blocks = p.div_ceil(6).max(1);
    let frac = |x: f64| x - x.floor();
    let block_loading: Vec<f64> = (0..p)
        .map(|i| 0.5 + 0.15 * frac(i as f64 * 0.618_033_988_75))
        .collect();
    let global_loading: Vec<f64> = (0..p)
        .map(|i| 0.25 + 0.15 * frac(i as f64 * 0.414_213_562_37 + 0.5))
        .collect();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            let shared = if i % blocks == j % blocks {
                block_loading[i] * block_loading[j]
            } else {
                0.0
            };
            shared + global_loading[i] * global_loading[j]
        }
    })
}

/// An `n x p` table of raw covariate values with its schema.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub schema: Vec<ColumnSchema>,
    pub values: DMatrix<f64>,
}

impl CovariateTable {
    pub fn new(schema: Vec<ColumnSchema>, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != schema.len() {
            return Err(Error::invalid(format!(
                "{} schema columns but {} value columns",
                schema.len(),
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::invalid("covariate table has no rows"));
        }
        for (j, col) in schema.iter().enumerate() {
            col.validate()?;
            for i in 0..values.nrows() {
                let v = values[(i, j)];
                let ok = match &col.kind {
                    ColumnKind::Categorical { probabilities } => {
                        v.fract() == 0.0 && v >= 0.0 && (v as usize) < probabilities.len()
                    }
                    ColumnKind::Binary { .. } => v == 0.0 || v == 1.0,
                    ColumnKind::Count { .. } => v.fract() == 0.0 && v >= 0.0,
                    ColumnKind::Continuous { .. } => v.is_finite(),
                };
                if !ok {
                    return Err(Error::Parse {
                        path: "covariates".into(),
                        message: format!(
                            "row {}, column {}: value {v} does not match its type",
                            i + 1,
                            col.name
                        ),
                    });
                }
            }
        }
        Ok(Self { schema, values })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let header: Vec<&str> = self.schema.iter().map(|c| c.name.as_str()).collect();
        writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        let mut line = String::new();
        for i in 0..self.rows() {
            line.clear();
            for j in 0..self.cols() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&self.values[(i, j)].to_string());
            }
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read a table written by [`CovariateTable::write_csv`], validating
    /// every cell against `schema`.
    pub fn read_csv(path: &Path, schema: Vec<ColumnSchema>) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
        let header = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        let expected: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
        let got: Vec<&str> = header.iter().collect();
        if got != expected {
            return Err(parse_err(format!(
                "header {got:?} does not match schema {expected:?}"
            )));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(format!("row {}: {e}", i + 1)))?;
            if rec.len() != schema.len() {
                return Err(parse_err(format!(
                    "row {}: expected {} fields, found {}",
                    i + 1,
                    schema.len(),
                    rec.len()
                )));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    parse_err(format!(
                        "row {}, column {}: cannot parse '{field}'",
                        i + 1,
                        schema[j].name
                    ))
                })?;
                data.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(parse_err("no data rows".into()));
        }
        let values = DMatrix::from_row_slice(rows, schema.len(), &data);
        Self::new(schema, values).map_err(|e| match e {
            Error::Parse { message, .. } => parse_err(message),
            other => other,
        })
    }
}

/// Draw `n` rows from the Gaussian copula defined by `correlation` and the
/// column marginals in `schema`.
pub fn generate_covariates(
    schema: &[ColumnSchema],
    n: usize,
    correlation: &DMatrix<f64>,
    seed: u64,
) -> Result<CovariateTable> {
    let p = schema.len();
    if n < 2 {
        return Err(Error::invalid("need at least 2 rows"));
    }
    if correlation.nrows() != p || correlation.ncols() != p {
        return Err(Error::invalid(format!(
            "correlation is {}x{} but schema has {p} columns",
            correlation.nrows(),
            correlation.ncols()
        )));
    }
    for i in 0..p {
        if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "correlation diagonal entry {i} is {} (must be 1)",
                correlation[(i, i)]
            )));
        }
        for j in 0..i {
            if (correlation[(i, j)] - correlation[(j, i)]).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "correlation is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    for col in schema {
        col.validate()?;
    }
    let chol = cholesky(correlation)?;
    let mut rng = rng::stream(seed);
    let mut values = DMatrix::zeros(n, p);
    let mut draw = vec![0.0; p];
    for i in 0..n {
        for d in draw.iter_mut() {
            *d = rng.sample(StandardNormal);
        }
        for j in 0..p {
            let mut latent = 0.0;
            for k in 0..=j {
                latent += chol[(j, k)] * draw[k];
            }
            values[(i, j)] = schema[j].from_latent(latent);
        }
    }
    CovariateTable::new(schema.to_vec(), values)
}

/// Convenience: a preset table with the block correlation.
pub fn generate_preset(preset: Preset, seed: u64) -> Result<CovariateTable> {
    let schema = preset.schema();
    let corr = block_correlation(schema.len());
    generate_covariates(&schema, preset.rows(), &corr, seed)
}

/// Affine map taking a column's 1st..99th percentile window onto [-1, 1],
/// clipped to `[-CLIP, CLIP]`. A constant column maps to zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineScaler {
    pub lo: f64,
    pub hi: f64,
}

impl AffineScaler {
    pub fn fit(values: &[f64]) -> Self {
        let s = sorted(values);
        let mut lo = quantile_sorted(&s, LOWER_PERCENTILE);
        let mut hi = quantile_sorted(&s, UPPER_PERCENTILE);
        if hi <= lo {
            // Rare-level indicators and similar: fall back to the full range.
            lo = s[0];
            hi = s[s.len() - 1];
        }
        Self { lo, hi }
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        (2.0 * (v - self.lo) / (self.hi - self.lo) - 1.0).clamp(-CLIP, CLIP)
    }
}

/// One column of the standardized (expanded) design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardColumn {
    pub name: String,
    /// Index of the raw schema column this was derived from.
    pub source: usize,
    /// Level indicator for categorical sources.
    pub level: Option<usize>,
    pub scaler: AffineScaler,
    /// Number of distinct raw values (2 for indicators and binaries).
    pub distinct: usize,
}

/// The standardized view of a covariate table: categoricals expanded into
/// indicators for every non-reference level, every column scaled to roughly
/// [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub columns: Vec<StandardColumn>,
    pub matrix: DMatrix<f64>,
}

impl Standardized {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.matrix.column(j).iter().copied().collect()
    }
}

fn expanded_raw(table: &CovariateTable) -> Vec<(String, usize, Option<usize>, Vec<f64>)> {
    let mut out = Vec::new();
    for (j, col) in table.schema.iter().enumerate() {
        let raw: Vec<f64> = table.values.column(j).iter().copied().collect();
        match &col.kind {
            ColumnKind::Categorical { probabilities } => {
                for level in 1..probabilities.len() {
                    let ind = raw
                        .iter()
                        .map(|&v| if v as usize == level { 1.0 } else { 0.0 })
                        .collect();
                    out.push((format!("{}_{level}", col.name), j, Some(level), ind));
                }
            }
            _ => out.push((col.name.clone(), j, None, raw)),
        }
    }
    out
}

fn distinct_count(values: &[f64]) -> usize {
    let s = sorted(values);
    1 + s.windows(2).filter(|w| w[0] != w[1]).count()
}

pub fn standardize(table: &CovariateTable) -> Standardized {
    let expanded = expanded_raw(table);
    let n = table.rows();
    let mut matrix = DMatrix::zeros(n, expanded.len());
    let mut columns = Vec::with_capacity(expanded.len());
    for (k, (name, source, level, raw)) in expanded.into_iter().enumerate() {
        let scaler = AffineScaler::fit(&raw);
        for (i, v) in raw.iter().enumerate() {
            matrix[(i, k)] = scaler.apply(*v);
        }
        columns.push(StandardColumn {
            name,
            source,
            level,
            scaler,
            distinct: distinct_count(&raw),
        });
    }
    Standardized { columns, matrix }
}

pub fn write_schema(schema: &[ColumnSchema], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(schema)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_schema(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{correlation, mean};

    fn count_kinds(schema: &[ColumnSchema]) -> (usize, usize, usize, usize) {
        let mut c = (0, 0, 0, 0);
        for col in schema {
            match col.kind {
                ColumnKind::Categorical { .. } => c.0 += 1,
                ColumnKind::Binary { .. } => c.1 += 1,
                ColumnKind::Count { .. } => c.2 += 1,
                ColumnKind::Continuous { .. } => c.3 += 1,
            }
        }
        c
    }

    #[test]
    fn default_schema_type_counts() {
        let s = default_schema();
        assert_eq!(s.len(), 58);
        assert_eq!(count_kinds(&s), (3, 5, 27, 23));
        assert_eq!(s, default_schema());
        for col in &s {
            col.validate().unwrap();
            if let ColumnKind::Categorical { probabilities } = &col.kind {
                assert!((3..=5).contains(&probabilities.len()));
            }
            if let ColumnKind::Count { rate } = col.kind {
                assert!((1.0..=20.0).contains(&rate));
            }
        }
    }

    #[test]
    fn desk_schema_mixes_types() {
        let s = desk_schema();
        assert_eq!(s.len(), 20);
        assert_eq!(count_kinds(&s), (1, 2, 9, 8));
    }

    #[test]
    fn block_correlation_is_positive_definite_with_documented_ranges() {
        for p in [2, 7, 20, 58] {
            let c = block_correlation(p);
            cholesky(&c).unwrap();
            let blocks = p.div_ceil(6);
            for i in 0..p {
                for j in 0..i {
                    let v = c[(i, j)];
                    if i % blocks == j % blocks {
                        assert!((0.3..=0.6).contains(&v), "within {v}");
                    } else {
                        assert!((0.0..=0.2).contains(&v), "cross {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn independent_columns_are_uncorrelated() {
        let schema = vec![
            ColumnSchema::gaussian("a", 0.0, 1.0),
            ColumnSchema::gaussian("b", 3.0, 2.0),
        ];
        let t = generate_covariates(&schema, 10_000, &DMatrix::identity(2, 2), 1).unwrap();
        let a: Vec<f64> = t.values.column(0).iter().copied().collect();
        let b: Vec<f64> = t.values.column(1).iter().copied().collect();
        assert!(correlation(&a, &b).abs() <= 0.05);
    }

    #[test]
    fn correlated_columns_follow_the_copula() {
        let schema = vec![
            ColumnSchema::gaussian("a", 0.0, 1.0),
            ColumnSchema::gaussian("b", 0.0, 1.0),
        ];
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let t = generate_covariates(&schema, 10_000, &corr, 3).unwrap();
        let a: Vec<f64> = t.values.column(0).iter().copied().collect();
        let b: Vec<f64> = t.values.column(1).iter().copied().collect();
        let r = correlation(&a, &b);
        assert!((0.52..=0.68).contains(&r), "r = {r}");
    }

    #[test]
    fn generation_is_deterministic() {
        let schema = desk_schema();
        let corr = block_correlation(schema.len());
        let a = generate_covariates(&schema, 200, &corr, 7).unwrap();
        let b = generate_covariates(&schema, 200, &corr, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_covariates(&schema, 200, &corr, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_non_positive_definite_correlation() {
        let schema = vec![
            ColumnSchema::gaussian("a", 0.0, 1.0),
            ColumnSchema::gaussian("b", 0.0, 1.0),
            ColumnSchema::gaussian("c", 0.0, 1.0),
        ];
        let corr =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.9, 0.9, 1.0, -0.9, 0.9, -0.9, 1.0]);
        let err = generate_covariates(&schema, 10, &corr, 0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { minor: 3, .. }), "{err}");
        assert!(err.to_string().contains("leading minor 3"));
    }

    #[test]
    fn marginals_match_analytic_means() {
        let schema = default_schema();
        let corr = block_correlation(schema.len());
        let t = generate_covariates(&schema, 10_000, &corr, 11).unwrap();
        for (j, col) in schema.iter().enumerate() {
            let v: Vec<f64> = t.values.column(j).iter().copied().collect();
            let (m, var) = col.moments();
            let se = (var / v.len() as f64).sqrt();
            let got = mean(&v);
            assert!(
                (got - m).abs() <= 4.0 * se,
                "{}: mean {got} vs {m} (se {se})",
                col.name
            );
        }
    }

    #[test]
    fn standardize_keeps_unit_range_column() {
        let raw: Vec<f64> = (0..300).map(|i| (i % 3) as f64 - 1.0).collect();
        let sc = AffineScaler::fit(&raw);
        for v in &raw {
            assert!((sc.apply(*v) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_constant_column_is_zero() {
        let sc = AffineScaler::fit(&[5.0; 50]);
        assert!(sc.is_degenerate());
        assert_eq!(sc.apply(5.0), 0.0);
    }

    #[test]
    fn standardize_normal_column_mostly_in_range() {
        let schema = vec![ColumnSchema::gaussian("a", 10.0, 2.0)];
        let t = generate_covariates(&schema, 5000, &DMatrix::identity(1, 1), 5).unwrap();
        let s = standardize(&t);
        let inside = s.matrix.iter().filter(|v| v.abs() <= 1.0).count();
        assert!(inside as f64 / 5000.0 >= 0.98);
        assert!(s.matrix.iter().all(|v| v.abs() <= CLIP));
    }

    #[test]
    fn standardize_expands_categoricals() {
        let t = generate_preset(Preset::Desk, 1).unwrap();
        let s = standardize(&t);
        // one 4-level categorical -> 3 indicators
        assert_eq!(s.cols(), 22);
        assert_eq!(s.columns[0].name, "cat_2_1");
        assert_eq!(s.columns[0].level, Some(1));
        assert!(s.matrix.iter().all(|v| v.abs() <= CLIP));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = generate_preset(Preset::Desk, 2).unwrap();
        let path = dir.path().join("x.csv");
        t.write_csv(&path).unwrap();
        let back = CovariateTable::read_csv(&path, t.schema.clone()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_reader_names_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "bin_1,cont_1\n1,0.5\n2,0.1\n").unwrap();
        let schema = vec![
            ColumnSchema::binary("bin_1", 0.5),
            ColumnSchema::gaussian("cont_1", 0.0, 1.0),
        ];
        let err = CovariateTable::read_csv(&path, schema).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("bin_1"), "{err}");
    }
}
