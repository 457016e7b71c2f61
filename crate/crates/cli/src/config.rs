//! Run configuration: one JSON file, resolved against the file's directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use ccpo_core::data::{
    load_prices, load_returns, synth_returns, to_returns, ReturnsPanel, SectorLayout, SynthParams,
};
use ccpo_core::experiments::{sector_partition, DEFAULT_N_SAMPLES, DEFAULT_N_SECTORS, DEFAULT_SEED};
use ccpo_core::objectives::{CvarParams, MarkowitzParams};
use ccpo_core::projection::{GroupConfig, GroupPartition};
use ccpo_core::solver::{Model, Problem, SolverConfig};
use ccpo_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Groups; omitted means one group of all assets with no cardinality cap.
    #[serde(default)]
    pub partition: Option<PartitionSource>,
    pub objective: Objective,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Drives the synthetic generator, solver initialization and sampling.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("ccpo-out")
}

/// Exactly one of the three fields must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    /// Price CSV with a `date` column.
    #[serde(default)]
    pub prices: Option<PathBuf>,
    /// Returns CSV with a header of tickers.
    #[serde(default)]
    pub returns: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Ticker to sector label for file-based data, inline or as a JSON file.
    #[serde(default)]
    pub sectors: Option<SectorMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SectorMap {
    File(PathBuf),
    Inline(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_assets: usize,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// A sector count, or explicit sector sizes.
    #[serde(default = "default_sectors")]
    pub sectors: SectorsSpec,
    #[serde(default)]
    pub params: SynthParams,
}

fn default_samples() -> usize {
    DEFAULT_N_SAMPLES
}

fn default_sectors() -> SectorsSpec {
    SectorsSpec::Count(DEFAULT_N_SECTORS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SectorsSpec {
    Count(usize),
    Sizes(Vec<usize>),
}

impl SectorsSpec {
    pub fn layout(&self, n_assets: usize) -> SectorLayout {
        match self {
            SectorsSpec::Count(m) => SectorLayout::Even((*m).min(n_assets.max(1))),
            SectorsSpec::Sizes(s) => SectorLayout::Sizes(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartitionSource {
    /// JSON file holding a list of groups.
    File(PathBuf),
    Groups(Vec<GroupConfig>),
    Rule(PartitionRule),
}

/// Shorthand partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionRule {
    /// One group of all assets holding at most this many.
    #[serde(default)]
    pub global_k: Option<usize>,
    /// One group per sector holding at most this many each.
    #[serde(default)]
    pub sector_k: Option<usize>,
    /// Sectors forced to zero weight (with `sector_k`).
    #[serde(default)]
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum Objective {
    Markowitz {
        #[serde(default)]
        gamma_return: f64,
        #[serde(default)]
        lambda_ridge: f64,
    },
    Cvar {
        beta: f64,
        #[serde(default = "default_rho")]
        rho_relax: f64,
    },
}

fn default_rho() -> f64 {
    CvarParams::DEFAULT_RHO
}

impl RunConfig {
    /// Read `path` and make relative paths inside it relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.prices.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.returns.as_mut() {
            fix(p);
        }
        if let Some(SectorMap::File(p)) = self.data.sectors.as_mut() {
            fix(p);
        }
        if let Some(PartitionSource::File(p)) = self.partition.as_mut() {
            fix(p);
        }
    }

    /// Every violated invariant that can be checked without loading data.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let d = &self.data;
        let sources = [d.prices.is_some(), d.returns.is_some(), d.synthetic.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if sources != 1 {
            v.push(format!(
                "data: exactly one of `prices`, `returns`, `synthetic` must be set, found {sources}"
            ));
        }
        let sector_file = match &d.sectors {
            Some(SectorMap::File(p)) => Some(p.clone()),
            _ => None,
        };
        for p in [&d.prices, &d.returns, &sector_file].into_iter().flatten() {
            if !p.is_file() {
                v.push(format!("data: file {} does not exist", p.display()));
            }
        }
        if let Some(s) = &d.synthetic {
            if s.n_assets == 0 {
                v.push("data.synthetic: n_assets must be at least 1".into());
            }
            if s.n_samples < 2 {
                v.push("data.synthetic: n_samples must be at least 2".into());
            }
        }
        match &self.partition {
            Some(PartitionSource::File(p)) if !p.is_file() => {
                v.push(format!("partition: file {} does not exist", p.display()));
            }
            Some(PartitionSource::Rule(r)) => {
                if r.global_k.is_some() == r.sector_k.is_some() {
                    v.push("partition: set exactly one of `global_k` and `sector_k`".into());
                }
                if r.global_k == Some(0) || r.sector_k == Some(0) {
                    v.push("partition: cardinality must be at least 1".into());
                }
                if r.global_k.is_some() && !r.excluded.is_empty() {
                    v.push("partition: `excluded` needs `sector_k`".into());
                }
            }
            _ => {}
        }
        if let Err(e) = self.model_params_check() {
            v.extend(messages(e));
        }
        if let Err(e) = self.solver.validate() {
            v.extend(messages(e));
        }
        v
    }

    fn model_params_check(&self) -> Result<()> {
        match self.objective {
            Objective::Markowitz {
                gamma_return,
                lambda_ridge,
            } => MarkowitzParams {
                gamma_return,
                lambda_ridge,
            }
            .validate(),
            Objective::Cvar { beta, rho_relax } => CvarParams { beta, rho_relax }.validate(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// The solver settings with the run seed applied.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed,
            ..self.solver.clone()
        }
    }

    pub fn load_panel(&self) -> Result<ReturnsPanel> {
        let d = &self.data;
        let mut panel = if let Some(p) = &d.prices {
            to_returns(&load_prices(File::open(p)?)?)?
        } else if let Some(p) = &d.returns {
            load_returns(File::open(p)?)?
        } else if let Some(s) = &d.synthetic {
            synth_returns(
                s.n_assets,
                s.n_samples,
                &s.sectors.layout(s.n_assets),
                &s.params,
                self.seed,
            )?
        } else {
            return Err(Error::Validation(vec!["data: no source given".into()]));
        };
        if let Some(source) = &d.sectors {
            let map = match source {
                SectorMap::File(p) => serde_json::from_reader(File::open(p)?)?,
                SectorMap::Inline(m) => m.clone(),
            };
            let labels = panel
                .tickers
                .iter()
                .map(|t| {
                    map.get(t)
                        .cloned()
                        .ok_or_else(|| format!("data.sectors: no sector for ticker {t}"))
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|m| Error::Validation(vec![m]))?;
            panel.sectors = Some(labels);
        }
        Ok(panel)
    }

    pub fn partition(&self, panel: &ReturnsPanel) -> Result<GroupPartition> {
        let n = panel.n_assets();
        match &self.partition {
            None => GroupPartition::single(n, n),
            Some(PartitionSource::File(p)) => {
                let groups: Vec<GroupConfig> = serde_json::from_reader(File::open(p)?)?;
                GroupPartition::from_config(&groups, &panel.tickers)
            }
            Some(PartitionSource::Groups(g)) => GroupPartition::from_config(g, &panel.tickers),
            Some(PartitionSource::Rule(r)) => match (r.global_k, r.sector_k) {
                (Some(k), None) => GroupPartition::single(n, k.min(n)),
                (None, Some(k)) => {
                    let excluded: Vec<&str> = r.excluded.iter().map(String::as_str).collect();
                    sector_partition(panel, k, &excluded)
                }
                _ => Err(Error::Validation(vec![
                    "partition: set exactly one of `global_k` and `sector_k`".into(),
                ])),
            },
        }
    }

    pub fn model(&self, panel: &ReturnsPanel) -> Model {
        match self.objective {
            Objective::Markowitz {
                gamma_return,
                lambda_ridge,
            } => Model::markowitz(
                ccpo_core::data::estimate_moments(panel),
                MarkowitzParams {
                    gamma_return,
                    lambda_ridge,
                },
            ),
            Objective::Cvar { beta, rho_relax } => {
                Model::cvar(panel, CvarParams { beta, rho_relax })
            }
        }
    }

    pub fn problem(&self, panel: &ReturnsPanel) -> Result<Problem> {
        Problem::new(self.model(panel), self.partition(panel)?)
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn messages(e: Error) -> Vec<String> {
    match e {
        Error::Validation(v) => v,
        other => vec![other.to_string()],
    }
}
