//! Running every method over a grid of settings and replications.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cells::{read_json, run_cells, write_json, CellCache, CellKey};
use super::SCHEMA_VERSION;
use crate::covariates::{generate_preset, standardize, CovariateTable, Preset, Standardized};
use crate::dgp::{
    build_dgp, fmt, realize, DgpConfig, DgpSpec, Knobs, Observed, Realization, RealizeOptions,
};
use crate::error::{Error, Result};
use crate::estimators::{oracle_catt, EstimatorInput, EstimatorOptions, Method};
use crate::metrics::{describe, write_metrics_csv, MetricOptions, MetricVector};
use crate::rng::{derive_seed, purpose};

/// A grid setting: one of the canonical 77 or a custom knob tuple with its
/// own identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setting {
    pub id: usize,
    pub knobs: Knobs,
}

impl Setting {
    pub fn canonical(id: usize) -> Result<Self> {
        Ok(Self {
            id,
            knobs: Knobs::setting(id)?,
        })
    }

    pub fn canonical_list(ids: &[usize]) -> Result<Vec<Self>> {
        ids.iter().map(|&i| Self::canonical(i)).collect()
    }
}

/// Seed of the grid-wide covariate table.
pub fn covariate_seed(master: u64) -> u64 {
    derive_seed(master, &[purpose::COVARIATES])
}

/// Seed of one realization; the DGP, assignment, noise, estimators and
/// metrics all derive from it.
pub fn cell_seed(master: u64, key: CellKey) -> u64 {
    derive_seed(master, &[purpose::REALIZE, key.setting as u64, key.replication as u64])
}

/// Covariates shared by every cell of a grid.
#[derive(Debug, Clone)]
pub struct Context {
    pub table: CovariateTable,
    pub x: Standardized,
}

impl Context {
    pub fn new(preset: Preset, master_seed: u64) -> Result<Self> {
        let table = generate_preset(preset, covariate_seed(master_seed))?;
        let x = standardize(&table);
        Ok(Self { table, x })
    }
}

/// Build the DGP of one cell and draw its realization.
pub fn simulate(
    x: &Standardized,
    setting: &Setting,
    key: CellKey,
    master_seed: u64,
    cfg: &DgpConfig,
) -> Result<(DgpSpec, Realization)> {
    let seed = cell_seed(master_seed, key);
    let spec = build_dgp(setting.knobs, x, derive_seed(seed, &[purpose::DGP]), cfg)?;
    let real = realize(&spec, x, seed, RealizeOptions::default())?;
    Ok((spec, real))
}

/// One method's result on one realization. Failed methods keep their row
/// with `error` set and no numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub setting: usize,
    pub replication: usize,
    pub method: Method,
    pub satt_hat: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub pehe: Option<f64>,
    pub error: Option<String>,
    /// Seconds; kept out of the deterministic CSVs.
    pub wall_time: Option<f64>,
}

impl EstimateRow {
    pub fn key(&self) -> CellKey {
        CellKey::new(self.setting, self.replication)
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.satt_hat.is_some()
    }
}

/// Root-mean-squared difference between estimated and true unit effects.
pub fn pehe(effects: &[f64], truth: &[f64]) -> Result<f64> {
    if effects.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} estimated effects but {} true effects",
            effects.len(),
            truth.len()
        )));
    }
    if effects.is_empty() {
        return Err(Error::invalid("no effects to compare"));
    }
    let ss: f64 = effects.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / effects.len() as f64).sqrt())
}

/// Options for scoring against truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scoring {
    /// Score individual effects against noisy `y1 - y0` rather than the
    /// noiseless `mu1 - mu0`.
    pub pehe_noisy: bool,
}

/// Run `methods` on one realization. Estimators only see `(x, z, y)`;
/// `truth`, when given, is used for the oracle baseline and for PEHE.
pub fn estimate_cell(
    x: &Standardized,
    observed: &Observed,
    truth: Option<&Realization>,
    methods: &[Method],
    opts: &EstimatorOptions,
    key: CellKey,
    scoring: Scoring,
) -> Vec<EstimateRow> {
    let row = |method, res: Result<(f64, f64, f64, Option<f64>)>, secs| match res {
        Ok((v, lo, hi, pehe)) => EstimateRow {
            setting: key.setting,
            replication: key.replication,
            method,
            satt_hat: Some(v),
            lo: Some(lo),
            hi: Some(hi),
            pehe,
            error: None,
            wall_time: Some(secs),
        },
        Err(e) => EstimateRow {
            setting: key.setting,
            replication: key.replication,
            method,
            satt_hat: None,
            lo: None,
            hi: None,
            pehe: None,
            error: Some(e.to_string()),
            wall_time: Some(secs),
        },
    };
    let input = EstimatorInput::new(x.matrix.clone(), observed.z.clone(), observed.y.clone());
    let treated = crate::dgp::treated_indices(&observed.z);
    methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let result = if m.is_oracle() {
                truth
                    .ok_or_else(|| Error::invalid("oracle_catt needs the realization's truth"))
                    .and_then(oracle_catt)
            } else {
                match &input {
                    Ok(input) => m.estimate(input, opts),
                    Err(e) => Err(Error::invalid(e.to_string())),
                }
            };
            let scored = result.and_then(|r| {
                let score = match (truth, &r.individual_effects) {
                    (Some(t), Some(eff)) => {
                        let source = if scoring.pehe_noisy { &t.truth.tau } else { &t.truth.cate };
                        let target: Vec<f64> = treated.iter().map(|&i| source[i]).collect();
                        Some(pehe(eff, &target)?)
                    }
                    _ => None,
                };
                Ok((r.satt_hat, r.lo, r.hi, score))
            });
            row(m, scored, start.elapsed().as_secs_f64())
        })
        .collect()
}

/// SATT of one realization, as joined against estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub setting: usize,
    pub replication: usize,
    pub satt: f64,
}

/// Everything computed for one cell of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutput {
    pub setting: usize,
    pub replication: usize,
    pub seed: u64,
    pub satt: Option<f64>,
    pub catt: Option<f64>,
    pub treated_fraction: Option<f64>,
    pub estimates: Vec<EstimateRow>,
    pub metrics: Option<MetricVector>,
    /// Set when the DGP could not be built or realized.
    pub error: Option<String>,
}

/// Grid run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub master_seed: u64,
    pub preset: Preset,
    pub settings: Vec<Setting>,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub estimator: EstimatorOptions,
    pub dgp: DgpConfig,
    /// Compute metric vectors when set.
    pub metrics: Option<MetricOptions>,
    pub oracle_metrics: bool,
    pub scoring: Scoring,
    /// Worker threads; machine parallelism when `None`.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl GridConfig {
    pub fn new(preset: Preset, settings: Vec<Setting>, replications: usize, master_seed: u64) -> Self {
        Self {
            master_seed,
            preset,
            settings,
            replications,
            methods: Method::ALL.to_vec(),
            estimator: EstimatorOptions::default(),
            dgp: DgpConfig::default(),
            metrics: None,
            oracle_metrics: true,
            scoring: Scoring::default(),
            threads: None,
        }
    }

    pub fn keys(&self) -> Vec<CellKey> {
        self.settings
            .iter()
            .flat_map(|s| (1..=self.replications).map(move |r| CellKey::new(s.id, r)))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.settings.is_empty() {
            return Err(Error::invalid("no settings selected"));
        }
        let ids: BTreeSet<usize> = self.settings.iter().map(|s| s.id).collect();
        if ids.len() != self.settings.len() {
            return Err(Error::invalid("setting identifiers must be unique"));
        }
        Ok(())
    }
}

/// Run one cell end to end.
pub fn run_cell(ctx: &Context, cfg: &GridConfig, setting: &Setting, key: CellKey) -> CellOutput {
    let seed = cell_seed(cfg.master_seed, key);
    let mut out = CellOutput {
        setting: key.setting,
        replication: key.replication,
        seed,
        satt: None,
        catt: None,
        treated_fraction: None,
        estimates: Vec::new(),
        metrics: None,
        error: None,
    };
    let (spec, real) = match simulate(&ctx.x, setting, key, cfg.master_seed, &cfg.dgp) {
        Ok(v) => v,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.satt = real.satt().ok();
    out.catt = real.catt().ok();
    out.treated_fraction = Some(real.treated_fraction());
    let opts = EstimatorOptions {
        seed: derive_seed(seed, &[purpose::ESTIMATE]),
        ..cfg.estimator.clone()
    };
    out.estimates = estimate_cell(&ctx.x, &real.observed, Some(&real), &cfg.methods, &opts, key, cfg.scoring);
    if let Some(mopts) = &cfg.metrics {
        let oracle = cfg.oracle_metrics.then_some((&spec, &real));
        let mseed = derive_seed(seed, &[purpose::METRICS]);
        match describe(key.setting, key.replication, &ctx.x, &real.observed, oracle, mseed, mopts) {
            Ok(m) => out.metrics = Some(m),
            Err(e) => out.error = Some(format!("metrics: {e}")),
        }
    }
    out
}

/// Manifest of a grid run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub schema_version: u32,
    pub config: GridConfig,
    pub completed: Vec<CellKey>,
}

/// Results of a grid, in setting-then-replication order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    pub cells: Vec<CellOutput>,
}

impl GridOutput {
    pub fn estimates(&self) -> Vec<EstimateRow> {
        self.cells.iter().flat_map(|c| c.estimates.iter().cloned()).collect()
    }

    pub fn truths(&self) -> Vec<TruthRow> {
        self.cells
            .iter()
            .filter_map(|c| {
                c.satt.map(|satt| TruthRow {
                    setting: c.setting,
                    replication: c.replication,
                    satt,
                })
            })
            .collect()
    }

    pub fn metrics(&self) -> Vec<MetricVector> {
        self.cells.iter().filter_map(|c| c.metrics.clone()).collect()
    }

    /// Cells whose DGP or any estimator failed.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.cells {
            if let Some(e) = &c.error {
                out.push(format!("setting {} replication {}: {e}", c.setting, c.replication));
            }
            for r in c.estimates.iter().filter(|r| r.error.is_some()) {
                out.push(format!(
                    "setting {} replication {} {}: {}",
                    c.setting,
                    c.replication,
                    r.method,
                    r.error.as_deref().unwrap_or_default()
                ));
            }
        }
        out
    }

    /// Write estimates.csv, timings.csv, truths.csv and (when present)
    /// metrics.csv into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_estimates_csv(&dir.join("estimates.csv"), &self.estimates())?;
        write_timings_csv(&dir.join("timings.csv"), &self.estimates())?;
        write_truths_csv(&dir.join("truths.csv"), &self.truths())?;
        let metrics = self.metrics();
        if !metrics.is_empty() {
            write_metrics_csv(&dir.join("metrics.csv"), &metrics)?;
        }
        Ok(())
    }
}

/// Run the grid. With `out`, each finished cell is stored under
/// `out/cells/`, the manifest lists completed cells, and a rerun of the
/// same configuration only computes what is missing. Output is identical
/// for any thread count and any interruption point.
pub fn run_grid(cfg: &GridConfig, out: Option<&Path>) -> Result<GridOutput> {
    cfg.validate()?;
    let ctx = Context::new(cfg.preset, cfg.master_seed)?;
    let keys = cfg.keys();
    let manifest_path = out.map(|d| d.join("manifest.json"));
    let mut completed = BTreeSet::new();
    let cache = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("manifest.json");
            if path.exists() {
                let old: GridManifest = read_json(&path)?;
                let neutral = |c: &GridConfig| GridConfig {
                    threads: None,
                    ..c.clone()
                };
                if neutral(&old.config) != neutral(cfg) {
                    return Err(Error::invalid(format!(
                        "{} belongs to a different grid configuration",
                        dir.display()
                    )));
                }
                completed.extend(old.completed);
            }
            Some(CellCache::new(dir.join("cells"), "cell")?)
        }
        None => None,
    };
    let save = |done: &BTreeSet<CellKey>| -> Result<()> {
        match &manifest_path {
            Some(p) => write_json(
                p,
                &GridManifest {
                    schema_version: SCHEMA_VERSION,
                    config: cfg.clone(),
                    completed: done.iter().copied().collect(),
                },
            ),
            None => Ok(()),
        }
    };
    let cells = run_cells(
        &keys,
        cfg.threads,
        cache.as_ref(),
        &completed,
        |key| {
            let setting = cfg
                .settings
                .iter()
                .find(|s| s.id == key.setting)
                .expect("keys come from the settings");
            Ok(run_cell(&ctx, cfg, setting, key))
        },
        save,
    )?;
    let output = GridOutput { cells };
    if let Some(dir) = out {
        save(&keys.iter().copied().collect())?;
        output.write(dir)?;
    }
    Ok(output)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| crate::dgp::csv_io(path, e))
}

pub fn write_estimates_csv(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["setting", "replication", "method", "satt_hat", "lo", "hi", "pehe", "error"])?;
    for r in rows {
        w.write_record([
            r.setting.to_string(),
            r.replication.to_string(),
            r.method.name().to_owned(),
            opt(r.satt_hat),
            opt(r.lo),
            opt(r.hi),
            opt(r.pehe),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_timings_csv(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["setting", "replication", "method", "wall_time"])?;
    for r in rows {
        w.write_record([
            r.setting.to_string(),
            r.replication.to_string(),
            r.method.name().to_owned(),
            opt(r.wall_time),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_truths_csv(path: &Path, rows: &[TruthRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["setting", "replication", "satt"])?;
    for r in rows {
        w.write_record([r.setting.to_string(), r.replication.to_string(), fmt(r.satt)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Reader {
    path: String,
    header: Vec<String>,
    inner: csv::Reader<fs::File>,
}

impl Reader {
    fn open(path: &Path, expected: &[&str]) -> Result<Self> {
        let mut inner = csv::Reader::from_path(path).map_err(|e| crate::dgp::csv_io(path, e))?;
        let header: Vec<String> = inner.headers()?.iter().map(str::to_owned).collect();
        let path = path.display().to_string();
        if header != expected {
            return Err(Error::Parse {
                path,
                message: format!("expected header {}", expected.join(",")),
            });
        }
        Ok(Self {
            path,
            header,
            inner,
        })
    }

    fn rows(&mut self) -> Result<Vec<csv::StringRecord>> {
        self.inner.records().map(|r| r.map_err(Error::from)).collect()
    }

    fn err(&self, row: usize, col: usize, what: &str) -> Error {
        Error::Parse {
            path: self.path.clone(),
            message: format!("row {}, column {}: {what}", row + 1, self.header[col]),
        }
    }

    fn index(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<usize> {
        rec[col].parse().map_err(|_| self.err(row, col, "expected a nonnegative integer"))
    }

    fn number(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<Option<f64>> {
        if rec[col].is_empty() {
            return Ok(None);
        }
        rec[col].parse().map(Some).map_err(|_| self.err(row, col, "expected a number"))
    }
}

pub fn read_estimates_csv(path: &Path) -> Result<Vec<EstimateRow>> {
    let mut r = Reader::open(
        path,
        &["setting", "replication", "method", "satt_hat", "lo", "hi", "pehe", "error"],
    )?;
    let rows = r.rows()?;
    rows.iter()
        .enumerate()
        .map(|(i, rec)| {
            Ok(EstimateRow {
                setting: r.index(rec, i, 0)?,
                replication: r.index(rec, i, 1)?,
                method: rec[2].parse().map_err(|e: Error| r.err(i, 2, &e.to_string()))?,
                satt_hat: r.number(rec, i, 3)?,
                lo: r.number(rec, i, 4)?,
                hi: r.number(rec, i, 5)?,
                pehe: r.number(rec, i, 6)?,
                error: (!rec[7].is_empty()).then(|| rec[7].to_owned()),
                wall_time: None,
            })
        })
        .collect()
}

/// Attach wall times from a timings.csv to matching estimate rows.
pub fn read_timings_into(path: &Path, rows: &mut [EstimateRow]) -> Result<()> {
    let mut r = Reader::open(path, &["setting", "replication", "method", "wall_time"])?;
    let recs = r.rows()?;
    let mut times = std::collections::BTreeMap::new();
    for (i, rec) in recs.iter().enumerate() {
        let key = (r.index(rec, i, 0)?, r.index(rec, i, 1)?, rec[2].to_owned());
        times.insert(key, r.number(rec, i, 3)?);
    }
    for row in rows {
        let key = (row.setting, row.replication, row.method.name().to_owned());
        if let Some(t) = times.get(&key) {
            row.wall_time = *t;
        }
    }
    Ok(())
}

pub fn read_truths_csv(path: &Path) -> Result<Vec<TruthRow>> {
    let mut r = Reader::open(path, &["setting", "replication", "satt"])?;
    let rows = r.rows()?;
    rows.iter()
        .enumerate()
        .map(|(i, rec)| {
            Ok(TruthRow {
                setting: r.index(rec, i, 0)?,
                replication: r.index(rec, i, 1)?,
                satt: r.number(rec, i, 2)?.ok_or_else(|| r.err(i, 2, "missing value"))?,
            })
        })
        .collect()
}
