use std::path::{Path, PathBuf};

use metafolio::market_data::validate_universes;
use metafolio::{
    BacktestConfig, CostModel, CovarianceSettings, DecisionPolicy, HrpSettings, LearnerSettings, SignificanceTest,
    UniverseSpec, WindowConfig,
};
use serde::{Deserialize, Serialize};

/// A complete run, read from one TOML file.
///
/// Only `data` and `universes` are required. Defaults:
///
/// | key | default |
/// |---|---|
/// | `seed` | 0 |
/// | `output` | `results` |
/// | `significance` | `paired_t` |
/// | `density_bucket` | 252 days |
/// | `policy` | `learned` |
/// | `[window]` | t_r 756, t_m 63, t_h 21, t_a 21 |
/// | `[cost]` | rate 0.001 |
/// | `[covariance]` | estimator `dcc`, fallback `ewma`, ewma_decay 0.94 |
/// | `[hrp]` | linkage `single`, bisection `halving` |
/// | `[learner]` | budget 30, cadence 6, default search box and initial params |
///
/// Relative `data` and `output` paths are resolved against the directory
/// holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Long-format price CSV with header `date,ticker,price`.
    pub data: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub significance: SignificanceTest,
    /// Days per density bucket; clipped to the evaluated span when longer.
    #[serde(default = "default_bucket")]
    pub density_bucket: usize,
    #[serde(default)]
    pub policy: DecisionPolicy,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub covariance: CovarianceSettings,
    #[serde(default)]
    pub hrp: HrpSettings,
    #[serde(default)]
    pub learner: LearnerSettings,
    pub universes: Vec<UniverseSpec>,
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_bucket() -> usize {
    252
}

impl RunConfig {
    #[cfg(test)]
    pub fn new(data: PathBuf, universes: Vec<UniverseSpec>) -> Self {
        Self {
            data,
            seed: 0,
            output: default_output(),
            significance: SignificanceTest::default(),
            density_bucket: default_bucket(),
            policy: DecisionPolicy::default(),
            window: WindowConfig::default(),
            cost: CostModel::default(),
            covariance: CovarianceSettings::default(),
            hrp: HrpSettings::default(),
            learner: LearnerSettings::default(),
            universes,
        }
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn backtest(&self) -> BacktestConfig {
        BacktestConfig {
            window: self.window,
            cost: self.cost,
            covariance: self.covariance,
            hrp: self.hrp,
            learner: self.learner,
            policy: self.policy,
        }
    }

    /// Every violated invariant, as readable lines; empty means valid.
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.universes.is_empty() {
            out.push("no universes defined".to_string());
        }
        out.extend(validate_universes(&self.universes));
        out.extend(self.backtest().validate());
        if self.density_bucket == 0 {
            out.push("density_bucket must be at least 1".to_string());
        }
        out
    }

    pub fn resolve(base: &Path, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        }
    }
}
