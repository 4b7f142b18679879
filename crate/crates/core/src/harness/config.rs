//! Experiment configuration.
//!
//! A config file is TOML whose keys mirror [`ExperimentConfig`]; every key is
//! optional and falls back to the protocol defaults below.
//!
//! ```toml
//! algorithms = ["fedavg-s", "scaffold-catalyst-s"]
//! s_values = [0.0, 5.0, 10.0]
//! grid = [0.1, 0.05, 0.01]
//! budget = 500
//! seeds = 5
//! out = "results"
//!
//! [sync]
//! deterministic = { tau = 20 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    AlgorithmConfig, AlgorithmKind, CatalystConfig, InitialPoint, InnerStop, StepsizeSchedule, SyncSchedule,
};
use crate::error::{Error, Result};
use crate::testbed::{DEFAULT_CLIENTS, DEFAULT_DIM, DEFAULT_LAMBDA};

/// Base stepsizes of the default grid, divided by `max(s, 1)` per instance.
pub const DEFAULT_GRID: [f64; 3] = [0.1, 0.05, 0.01];
pub const DEFAULT_BUDGET: u64 = 500;
pub const DEFAULT_SEEDS: u64 = 5;
pub const DEFAULT_TAU: usize = 20;

fn default_algorithms() -> Vec<AlgorithmKind> {
    AlgorithmKind::ALL.to_vec()
}
fn default_s_values() -> Vec<f64> {
    (0..=15).map(f64::from).collect()
}
fn default_d() -> usize {
    DEFAULT_DIM
}
fn default_n() -> usize {
    DEFAULT_CLIENTS
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_sync() -> SyncSchedule {
    SyncSchedule::Deterministic { tau: DEFAULT_TAU }
}
fn default_grid() -> Vec<f64> {
    DEFAULT_GRID.to_vec()
}
fn default_true() -> bool {
    true
}
fn default_theta() -> f64 {
    1.0
}
fn default_budget() -> u64 {
    DEFAULT_BUDGET
}
fn default_seeds() -> u64 {
    DEFAULT_SEEDS
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// One stepsize choice of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub gamma_l: f64,
    pub gamma_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmKind>,
    #[serde(default = "default_s_values")]
    pub s_values: Vec<f64>,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_sync")]
    pub sync: SyncSchedule,
    /// Base stepsizes; each entry is used as `gamma_l = gamma_g`.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    /// Divide grid entries by `max(s, 1)`.
    #[serde(default = "default_true")]
    pub scale_grid: bool,
    /// Explicit local stepsize. Setting either explicit stepsize replaces the
    /// grid by the single unscaled pair, the missing one copying the other.
    #[serde(default)]
    pub gamma_l: Option<f64>,
    #[serde(default)]
    pub gamma_g: Option<f64>,
    /// FedAvg-S uses `gamma / (sqrt(k) + 1)` instead of constant stepsizes.
    #[serde(default = "default_true")]
    pub fedavg_decay: bool,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub inner_stop: InnerStop,
    /// Communication rounds per run.
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Replicates per cell.
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub init: InitialPoint,
    #[serde(default)]
    pub sigma: f64,
    /// Row stride of the traces; one row per expected round when absent.
    #[serde(default)]
    pub thin: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: default_algorithms(),
            s_values: default_s_values(),
            d: DEFAULT_DIM,
            n: DEFAULT_CLIENTS,
            lambda: DEFAULT_LAMBDA,
            sync: default_sync(),
            grid: default_grid(),
            scale_grid: true,
            gamma_l: None,
            gamma_g: None,
            fedavg_decay: true,
            theta: default_theta(),
            inner_stop: InnerStop::default(),
            budget: DEFAULT_BUDGET,
            seeds: DEFAULT_SEEDS,
            master_seed: 0,
            out: default_out(),
            init: InitialPoint::default(),
            sigma: 0.0,
            thin: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        if self.s_values.is_empty() {
            return bad("no s values selected".into());
        }
        if let Some(s) = self.s_values.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return bad(format!("s values must be finite and non-negative, got {s}"));
        }
        if self.d == 0 || self.n == 0 {
            return bad(format!("d and n must be positive, got d={}, n={}", self.d, self.n));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        self.sync.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.grid.is_empty() {
            return bad("stepsize grid is empty".into());
        }
        let explicit = [self.gamma_l, self.gamma_g].into_iter().flatten();
        if let Some(g) = self.grid.iter().copied().chain(explicit).find(|g| !(*g > 0.0) || !g.is_finite()) {
            return bad(format!("stepsizes must be positive, got {g}"));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return bad(format!("theta must be non-negative, got {}", self.theta));
        }
        if self.budget < 1 {
            return bad("budget must be at least one round".into());
        }
        if self.seeds < 1 {
            return bad("at least one seed is required".into());
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if self.thin == Some(0) {
            return bad("thin must be at least 1".into());
        }
        // Surface per-run validation problems before anything executes.
        for &algorithm in &self.algorithms {
            for &s in &self.s_values {
                for point in self.grid_for(s) {
                    self.algorithm_config(algorithm, point)
                        .validate()
                        .map_err(|e| Error::Config(format!("{algorithm}: {e}")))?;
                }
            }
        }
        Ok(())
    }

    /// Stepsize choices used on instances with heterogeneity `s`.
    pub fn grid_for(&self, s: f64) -> Vec<GridPoint> {
        if self.gamma_l.is_some() || self.gamma_g.is_some() {
            let gamma_l = self.gamma_l.or(self.gamma_g).unwrap_or_default();
            let gamma_g = self.gamma_g.unwrap_or(gamma_l);
            return vec![GridPoint { index: 0, gamma_l, gamma_g }];
        }
        let scale = if self.scale_grid { s.max(1.0) } else { 1.0 };
        self.grid
            .iter()
            .enumerate()
            .map(|(index, g)| GridPoint {
                index,
                gamma_l: g / scale,
                gamma_g: g / scale,
            })
            .collect()
    }

    /// Run settings of one algorithm at one stepsize choice.
    pub fn algorithm_config(&self, algorithm: AlgorithmKind, point: GridPoint) -> AlgorithmConfig {
        let steps = if algorithm == AlgorithmKind::FedavgS && self.fedavg_decay {
            StepsizeSchedule::decaying(point.gamma_l, point.gamma_g)
        } else {
            StepsizeSchedule::constant(point.gamma_l, point.gamma_g)
        };
        let mut config = AlgorithmConfig::new(algorithm, self.sync, steps);
        config.sigma = self.sigma;
        config.init = self.init.clone();
        config.catalyst = CatalystConfig {
            theta: self.theta,
            stop: self.inner_stop,
            ..CatalystConfig::default()
        };
        config.thin = self.thin.unwrap_or_else(|| self.sync.steps_per_round());
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_protocol() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.s_values.len(), 16);
        assert_eq!(c.algorithms.len(), 5);
        let grid = c.grid_for(10.0);
        assert_eq!(grid.len(), 3);
        assert!((grid[0].gamma_l - 0.01).abs() < 1e-18);
        assert!((grid[2].gamma_g - 0.001).abs() < 1e-18);
        assert_eq!(c.grid_for(0.0)[1].gamma_l, 0.05);
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig {
            sync: SyncSchedule::Probabilistic { p: 0.05 },
            gamma_l: Some(0.2),
            thin: Some(3),
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parses_documented_example() {
        let text = r#"
            algorithms = ["fedavg-s", "scaffold-catalyst-s"]
            s_values = [0.0, 5.0, 10.0]
            budget = 50
            [sync]
            deterministic = { tau = 20 }
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.algorithms, vec![AlgorithmKind::FedavgS, AlgorithmKind::ScaffoldCatalystS]);
        assert_eq!(c.sync, SyncSchedule::Deterministic { tau: 20 });
        assert_eq!(c.budget, 50);
    }

    #[test]
    fn unknown_algorithm_is_a_config_error() {
        let err = ExperimentConfig::from_toml_str(r#"algorithms = ["fedprox"]"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for text in ["grid = [0.1, -0.1]", "budget = 0", "seeds = 0", "s_values = []", "lambda = 0.0", "thin = 0"] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
    }

    #[test]
    fn explicit_pair_replaces_grid() {
        let c = ExperimentConfig {
            gamma_g: Some(0.3),
            ..ExperimentConfig::default()
        };
        assert_eq!(
            c.grid_for(12.0),
            vec![GridPoint { index: 0, gamma_l: 0.3, gamma_g: 0.3 }]
        );
    }

    #[test]
    fn fedavg_mismatch_surfaces_before_running() {
        let c = ExperimentConfig {
            gamma_l: Some(0.1),
            gamma_g: Some(0.2),
            algorithms: vec![AlgorithmKind::FedavgS],
            ..ExperimentConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn fedavg_decays_by_default() {
        let c = ExperimentConfig::default();
        let p = c.grid_for(0.0)[0];
        assert_ne!(c.algorithm_config(AlgorithmKind::FedavgS, p).steps.factor(4), 1.0);
        assert_eq!(c.algorithm_config(AlgorithmKind::ScaffoldS, p).steps.factor(4), 1.0);
        assert_eq!(c.algorithm_config(AlgorithmKind::ScaffoldS, p).thin, 20);
    }
}
