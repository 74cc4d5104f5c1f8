//! Run configuration: command-line flags override the config file, which
//! overrides built-in defaults.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cfacar::model::Hyperparameters;
use cfacar::sampler::SamplerConfig;
use cfacar::simulation::{CatalogSpec, SimScenario};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Environment variable giving the default worker-thread count.
pub const JOBS_ENV: &str = "CFACAR_JOBS";

pub const DEFAULT_BFDR: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub sampler: SamplerConfig,
    pub hyper: Hyperparameters,
    /// Bayesian FDR level used to pick the selection threshold.
    pub bfdr: f64,
    /// Drop the network and pin γ at 0.
    pub efa: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            hyper: Hyperparameters::default(),
            bfdr: DEFAULT_BFDR,
            efa: false,
        }
    }
}

/// Flags that can override a [`FitConfig`].
#[derive(Clone, Debug, Default)]
pub struct FitOverrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub bfdr: Option<f64>,
    pub efa: bool,
}

impl FitConfig {
    pub fn resolve(file: Option<&Path>, o: &FitOverrides) -> Result<Self> {
        let mut cfg: FitConfig = read_json_or_default(file)?;
        if let Some(v) = o.seed {
            cfg.sampler.seed = v;
        }
        if let Some(v) = o.chains {
            cfg.sampler.chains = v;
        }
        if let Some(v) = o.iterations {
            cfg.sampler.iterations = v;
        }
        if let Some(v) = o.burn_in {
            cfg.sampler.burn_in = v;
        }
        if let Some(v) = o.bfdr {
            cfg.bfdr = v;
        }
        cfg.efa |= o.efa;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.hyper.validate()?;
        check_level(self.bfdr)
    }
}

pub fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level <= 1.0 {
        Ok(())
    } else {
        anyhow::bail!("BFDR level must lie in (0, 1], got {level}")
    }
}

/// Catalog and data settings for `simulate`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub catalog: CatalogSpec,
    pub scenario: SimScenario,
}

pub fn read_json_or_default<T: DeserializeOwned + Default>(file: Option<&Path>) -> Result<T> {
    match file {
        None => Ok(T::default()),
        Some(path) => read_json(path),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid configuration in {}", path.display()))
}

/// Thread count: the flag, else the environment, else every available core.
pub fn resolve_jobs(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(JOBS_ENV).ok()?.parse().ok())
        .filter(|&j| j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}
