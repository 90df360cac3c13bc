//! The five pipeline stages over a run directory:
//!
//! ```text
//! <out>/manifest.json          seeds, settings, one record per realization
//! <out>/schema.json            covariate schema
//! <out>/realizations/sNN_rNNN/ spec.json x.csv zy.csv truth.csv
//! <out>/cells/                 per-cell estimate caches (resumable)
//! <out>/metrics.csv estimates.csv timings.csv
//! <out>/summary.csv r2_table.csv varcomp.json report.txt
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use causal_testbed::covariates::{read_schema, standardize, write_schema, CovariateTable, Preset, Standardized};
use causal_testbed::dgp::{DgpConfig, DgpSpec, Observed, Realization, RealizationRecord, Truth};
use causal_testbed::estimators::{EstimatorOptions, Method};
use causal_testbed::eval::{
    cell_seed, estimate_cell, explain_performance, read_estimates_csv, read_json,
    read_timings_into, render_report, run_cells, simulate, summarize, variance_components,
    write_estimates_csv, write_json, write_r2_table_csv, write_summary_csv, write_timings_csv,
    CellCache, CellKey, Context, EstimateRow, Scoring, Setting, TruthRow, SCHEMA_VERSION,
};
use causal_testbed::metrics::{describe, read_metrics_csv, write_metrics_csv, MetricOptions};
use causal_testbed::rng::{derive_seed, purpose};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Complete,
    /// Some cells failed; the messages name them.
    Partial(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub setting: usize,
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub preset: Preset,
    pub settings: Vec<Setting>,
    pub replications: usize,
    pub realizations: Vec<RealizationRecord>,
    pub failures: Vec<Failure>,
}

impl DataManifest {
    fn same_grid(&self, other: &DataManifest) -> bool {
        self.master_seed == other.master_seed
            && self.preset == other.preset
            && self.settings == other.settings
            && self.replications == other.replications
    }

    pub fn truths(&self) -> Vec<TruthRow> {
        self.realizations
            .iter()
            .map(|r| TruthRow {
                setting: r.setting,
                replication: r.replication,
                satt: r.satt,
            })
            .collect()
    }
}

fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.json")
}

pub fn realization_dir(root: &Path, key: CellKey) -> PathBuf {
    root.join("realizations").join(key.label())
}

const REALIZATION_FILES: [&str; 4] = ["spec.json", "x.csv", "zy.csv", "truth.csv"];

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("missing input {}", path.display());
    }
    Ok(())
}

pub fn load_manifest(root: &Path) -> Result<DataManifest> {
    let path = manifest_path(root);
    require(&path)?;
    Ok(read_json(&path)?)
}

fn write_realization(dir: &Path, spec: &DgpSpec, table: &CovariateTable, real: &Realization) -> Result<()> {
    let tmp = dir.with_extension("partial");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).with_context(|| format!("cannot clear {}", tmp.display()))?;
    }
    fs::create_dir_all(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
    fs::write(tmp.join("spec.json"), spec.to_json()?)
        .with_context(|| format!("cannot write {}", tmp.join("spec.json").display()))?;
    table.write_csv(&tmp.join("x.csv"))?;
    real.observed.write_csv(&tmp.join("zy.csv"))?;
    real.truth.write_csv(&tmp.join("truth.csv"))?;
    if dir.exists() {
        fs::remove_dir_all(dir).with_context(|| format!("cannot replace {}", dir.display()))?;
    }
    fs::rename(&tmp, dir).with_context(|| format!("cannot move {} into place", dir.display()))?;
    Ok(())
}

/// Draw every requested realization. Realizations already on disk and in
/// the manifest are kept, so a rerun is a no-op.
pub fn generate(cfg: &RunConfig) -> Result<Outcome> {
    let root = &cfg.output_dir;
    fs::create_dir_all(root.join("realizations"))
        .with_context(|| format!("cannot create {}", root.display()))?;
    let settings = Setting::canonical_list(&cfg.settings)?;
    let mut manifest = DataManifest {
        schema_version: SCHEMA_VERSION,
        master_seed: cfg.seed,
        preset: cfg.preset,
        settings: settings.clone(),
        replications: cfg.replications,
        realizations: Vec::new(),
        failures: Vec::new(),
    };
    let previous = match manifest_path(root).exists() {
        true => {
            let old = load_manifest(root)?;
            if !old.same_grid(&manifest) {
                bail!(
                    "{} already holds a different grid (seed, preset, settings or replications differ)",
                    root.display()
                );
            }
            old.realizations
        }
        false => Vec::new(),
    };
    let ctx = Context::new(cfg.preset, cfg.seed)?;
    write_schema(&ctx.table.schema, &root.join("schema.json"))?;
    let keys: Vec<CellKey> = settings
        .iter()
        .flat_map(|s| (1..=cfg.replications).map(move |r| CellKey::new(s.id, r)))
        .collect();
    let dgp = DgpConfig::default();
    let results: Vec<std::result::Result<RealizationRecord, Failure>> = run_cells(
        &keys,
        cfg.threads,
        None,
        &BTreeSet::new(),
        |key| {
            let dir = realization_dir(root, key);
            let done = previous
                .iter()
                .find(|r| r.setting == key.setting && r.replication == key.replication);
            if let Some(rec) = done {
                if REALIZATION_FILES.iter().all(|f| dir.join(f).exists()) {
                    return Ok(Ok(rec.clone()));
                }
            }
            let setting = settings.iter().find(|s| s.id == key.setting).expect("key from settings");
            let failure = |e: String| Failure {
                setting: key.setting,
                replication: key.replication,
                error: e,
            };
            let (spec, real) = match simulate(&ctx.x, setting, key, cfg.seed, &dgp) {
                Ok(v) => v,
                Err(e) => return Ok(Err(failure(e.to_string()))),
            };
            let satt = match real.satt() {
                Ok(v) => v,
                Err(e) => return Ok(Err(failure(e.to_string()))),
            };
            write_realization(&dir, &spec, &ctx.table, &real)
                .map_err(|e| causal_testbed::Error::Invalid(format!("{e:#}")))?;
            Ok(Ok(RealizationRecord {
                setting: key.setting,
                replication: key.replication,
                seed: cell_seed(cfg.seed, key),
                satt,
            }))
        },
        |_| Ok(()),
    )?;
    for r in results {
        match r {
            Ok(rec) => manifest.realizations.push(rec),
            Err(f) => manifest.failures.push(f),
        }
    }
    write_json(&manifest_path(root), &manifest)?;
    let failures: Vec<String> = manifest
        .failures
        .iter()
        .map(|f| format!("setting {} replication {}: {}", f.setting, f.replication, f.error))
        .collect();
    Ok(if failures.is_empty() {
        Outcome::Complete
    } else {
        Outcome::Partial(failures)
    })
}

fn load_x(root: &Path, dir: &Path) -> Result<Standardized> {
    let schema_path = root.join("schema.json");
    require(&schema_path)?;
    let schema = read_schema(&schema_path)?;
    let x_path = dir.join("x.csv");
    require(&x_path)?;
    Ok(standardize(&CovariateTable::read_csv(&x_path, schema)?))
}

fn load_observed(dir: &Path) -> Result<Observed> {
    let p = dir.join("zy.csv");
    require(&p)?;
    Ok(Observed::read_csv(&p)?)
}

fn load_truth(dir: &Path, observed: &Observed) -> Result<Realization> {
    let p = dir.join("truth.csv");
    require(&p)?;
    let truth = Truth::read_csv(&p)?;
    if truth.e.len() != observed.z.len() {
        bail!("{} has {} rows but zy.csv has {}", p.display(), truth.e.len(), observed.z.len());
    }
    let penalized = truth.e.iter().map(|&e| e == 0.0).collect();
    Ok(Realization {
        observed: observed.clone(),
        truth,
        penalized,
    })
}

fn record_keys(manifest: &DataManifest) -> Vec<CellKey> {
    manifest
        .realizations
        .iter()
        .map(|r| CellKey::new(r.setting, r.replication))
        .collect()
}

fn to_core(e: anyhow::Error) -> causal_testbed::Error {
    causal_testbed::Error::Invalid(format!("{e:#}"))
}

/// Compute metrics.csv. With `no_oracle` only observable metrics are
/// computed and truth.csv and spec.json are never opened.
pub fn describe_cmd(cfg: &RunConfig, no_oracle: bool) -> Result<Outcome> {
    let root = &cfg.output_dir;
    let manifest = load_manifest(root)?;
    let keys = record_keys(&manifest);
    let opts = MetricOptions::default();
    let rows = run_cells(
        &keys,
        cfg.threads,
        None,
        &BTreeSet::new(),
        |key| {
            let run = || -> Result<_> {
                let dir = realization_dir(root, key);
                let x = load_x(root, &dir)?;
                let observed = load_observed(&dir)?;
                let seed = derive_seed(cell_seed(manifest.master_seed, key), &[purpose::METRICS]);
                let oracle = if no_oracle {
                    None
                } else {
                    let spec_path = dir.join("spec.json");
                    require(&spec_path)?;
                    let text = fs::read_to_string(&spec_path)?;
                    let spec = DgpSpec::from_json(&text)?;
                    let mut real = load_truth(&dir, &observed)?;
                    real.penalized = spec.penalized(&x.matrix);
                    Some((spec, real))
                };
                let oracle_ref = oracle.as_ref().map(|(s, r)| (s, r));
                Ok(describe(key.setting, key.replication, &x, &observed, oracle_ref, seed, &opts)?)
            };
            run().map_err(to_core)
        },
        |_| Ok(()),
    )?;
    write_metrics_csv(&root.join("metrics.csv"), &rows)?;
    Ok(Outcome::Complete)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EstimateManifest {
    schema_version: u32,
    methods: Vec<Method>,
    options: EstimatorOptions,
    scoring: Scoring,
    completed: Vec<CellKey>,
}

/// Run the selected methods on every realization, caching each cell so an
/// interrupted run resumes where it stopped.
pub fn estimate_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let root = &cfg.output_dir;
    let manifest = load_manifest(root)?;
    let keys = record_keys(&manifest);
    let options = EstimatorOptions {
        bootstrap: cfg.bootstrap,
        ..EstimatorOptions::default()
    };
    let scoring = Scoring {
        pehe_noisy: cfg.pehe_noisy,
    };
    let em_path = root.join("estimate_manifest.json");
    let cells_dir = root.join("cells");
    let mut completed = BTreeSet::new();
    if em_path.exists() {
        let old: EstimateManifest = read_json(&em_path)?;
        if old.methods == cfg.methods && old.options == options && old.scoring == scoring {
            completed.extend(old.completed);
        } else if cells_dir.exists() {
            fs::remove_dir_all(&cells_dir)
                .with_context(|| format!("cannot clear {}", cells_dir.display()))?;
        }
    }
    let cache = CellCache::new(&cells_dir, "estimates")?;
    let save = |done: &BTreeSet<CellKey>| {
        write_json(
            &em_path,
            &EstimateManifest {
                schema_version: SCHEMA_VERSION,
                methods: cfg.methods.clone(),
                options: options.clone(),
                scoring,
                completed: done.iter().copied().collect(),
            },
        )
    };
    let cells: Vec<Vec<EstimateRow>> = run_cells(
        &keys,
        cfg.threads,
        Some(&cache),
        &completed,
        |key| {
            let run = || -> Result<Vec<EstimateRow>> {
                let dir = realization_dir(root, key);
                let x = load_x(root, &dir)?;
                let observed = load_observed(&dir)?;
                let truth = match dir.join("truth.csv").exists() {
                    true => Some(load_truth(&dir, &observed)?),
                    false => None,
                };
                let opts = EstimatorOptions {
                    seed: derive_seed(cell_seed(manifest.master_seed, key), &[purpose::ESTIMATE]),
                    ..options.clone()
                };
                Ok(estimate_cell(&x, &observed, truth.as_ref(), &cfg.methods, &opts, key, scoring))
            };
            run().map_err(to_core)
        },
        save,
    )?;
    let rows: Vec<EstimateRow> = cells.into_iter().flatten().collect();
    write_estimates_csv(&root.join("estimates.csv"), &rows)?;
    write_timings_csv(&root.join("timings.csv"), &rows)?;
    let mut failures: Vec<String> = manifest
        .failures
        .iter()
        .map(|f| format!("setting {} replication {}: {}", f.setting, f.replication, f.error))
        .collect();
    failures.extend(rows.iter().filter_map(|r| {
        r.error.as_ref().map(|e| {
            format!("setting {} replication {} {}: {e}", r.setting, r.replication, r.method)
        })
    }));
    Ok(if failures.is_empty() {
        Outcome::Complete
    } else {
        Outcome::Partial(failures)
    })
}

fn load_estimates(root: &Path) -> Result<Vec<EstimateRow>> {
    let path = root.join("estimates.csv");
    require(&path)?;
    let mut rows = read_estimates_csv(&path)?;
    let timings = root.join("timings.csv");
    if timings.exists() {
        read_timings_into(&timings, &mut rows)?;
    }
    Ok(rows)
}

/// Write summary.csv, r2_table.csv and varcomp.json.
pub fn evaluate_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let root = &cfg.output_dir;
    let manifest = load_manifest(root)?;
    let estimates = load_estimates(root)?;
    let metrics_path = root.join("metrics.csv");
    require(&metrics_path)?;
    let metrics = read_metrics_csv(&metrics_path)?;
    let truths = manifest.truths();
    let summary = summarize(&estimates, &truths)?;
    write_summary_csv(&root.join("summary.csv"), &summary)?;
    let explain = explain_performance(&estimates, &truths, &metrics)?;
    write_r2_table_csv(&root.join("r2_table.csv"), &explain)?;
    let vc = variance_components(&estimates, &truths)?;
    write_json(&root.join("varcomp.json"), &vc)?;
    Ok(Outcome::Complete)
}

/// Rank methods by RMSE (ties alphabetical) and write report.txt, which
/// leaves wall time out so it stays reproducible. Returns the table with
/// wall times for the terminal.
pub fn report_cmd(cfg: &RunConfig) -> Result<String> {
    let root = &cfg.output_dir;
    let manifest = load_manifest(root)?;
    let estimates = load_estimates(root)?;
    let summary = summarize(&estimates, &manifest.truths())?;
    let path = root.join("report.txt");
    fs::write(&path, render_report(&summary, false))
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(render_report(&summary, true))
}
