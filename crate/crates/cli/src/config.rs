//! Run configuration: JSON file, environment and flags (flags win).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use causal_testbed::covariates::Preset;
use causal_testbed::estimators::Method;
use causal_testbed::Error;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 20_170_707;
pub const DEFAULT_OUTPUT: &str = "testbed-out";

/// Setting selection as written in a config file: `"all"`, `"1-5,8"`, or a
/// list of indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingSelection {
    Text(String),
    List(Vec<usize>),
}

impl SettingSelection {
    pub fn resolve(&self) -> Result<Vec<usize>> {
        let ids = match self {
            SettingSelection::Text(s) => parse_settings(s)?,
            SettingSelection::List(v) => v.clone(),
        };
        for &id in &ids {
            if !(1..=77).contains(&id) {
                return Err(Error::SettingOutOfRange(id).into());
            }
        }
        let mut seen = ids.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != ids.len() {
            bail!("setting selection lists a setting twice");
        }
        if ids.is_empty() {
            bail!("setting selection is empty");
        }
        Ok(ids)
    }
}

/// Parse `"all"` or comma-separated indices and inclusive ranges.
pub fn parse_settings(s: &str) -> Result<Vec<usize>> {
    if s.trim() == "all" {
        return Ok((1..=77).collect());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |t: &str| -> Result<usize> {
            t.trim()
                .parse()
                .with_context(|| format!("'{t}' is not a setting index"))
        };
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    bail!("empty setting range {part}");
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(out)
}

/// Everything a config file may set. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub settings: Option<SettingSelection>,
    pub replications: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub output_dir: Option<PathBuf>,
    pub bootstrap: Option<usize>,
    pub threads: Option<usize>,
    pub allow_partial: Option<bool>,
    pub pehe_noisy: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub settings: Option<String>,
    pub replications: Option<usize>,
    pub methods: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub bootstrap: Option<usize>,
    pub threads: Option<usize>,
    pub allow_partial: bool,
    pub pehe_noisy: bool,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    pub settings: Vec<usize>,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub bootstrap: usize,
    pub threads: Option<usize>,
    pub allow_partial: bool,
    pub pehe_noisy: bool,
}

pub fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    for n in names {
        let m: Method = n.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        bail!("no methods selected");
    }
    Ok(out)
}

impl RunConfig {
    pub fn resolve(file: FileConfig, cli: Overrides) -> Result<Self> {
        let settings = match cli.settings {
            Some(s) => SettingSelection::Text(s),
            None => file.settings.unwrap_or(SettingSelection::Text("all".into())),
        }
        .resolve()?;
        let methods = match cli.methods {
            Some(s) => parse_methods(&s.split(',').map(str::to_owned).collect::<Vec<_>>())?,
            None => match file.methods {
                Some(v) => parse_methods(&v)?,
                None => Method::ALL.to_vec(),
            },
        };
        let replications = cli.replications.or(file.replications).unwrap_or(1);
        if replications == 0 {
            bail!("replications must be at least 1");
        }
        let threads = cli.threads.or(file.threads);
        if threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(Self {
            seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            preset: cli.preset.or(file.preset).unwrap_or(Preset::Desk),
            settings,
            replications,
            methods,
            output_dir: cli
                .output_dir
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
            bootstrap: cli.bootstrap.or(file.bootstrap).unwrap_or(250),
            threads,
            allow_partial: cli.allow_partial || file.allow_partial.unwrap_or(false),
            pehe_noisy: cli.pehe_noisy || file.pehe_noisy.unwrap_or(false),
        })
    }
}
