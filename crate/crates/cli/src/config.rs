//! Experiment configuration: per-system defaults overlaid with a TOML file.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use tracker_core::features::{DifferenceReference, FeatureMode};
use tracker_core::nnet::{Activation, TrainConfig, Trainer};
use tracker_core::plant::{LtiStateSpace, Trajectory};

use crate::systems::{Plant, SystemKind};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    /// Seeds both row sampling and network initialisation.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomSystem>,
    pub recipe: Recipe,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub test: TestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSystem {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

/// Training-trajectory family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub amplitudes: Vec<f64>,
    pub frequencies_hz: Vec<f64>,
    /// Sample period in seconds.
    pub period: f64,
    pub steps: usize,
    pub per_source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    pub difference: bool,
    pub difference_reference: DifferenceReference,
    /// Identified from the plant when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub trajectory: TestTrajectory,
    pub steps: usize,
    /// Transient steps excluded from RMS metrics; defaults to the plant order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<usize>,
    /// Tail used for steady-state error on step trajectories.
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestTrajectory {
    /// `sin(2 pi t / 15) + cos(2 pi t / 12) - 1` with `t` the step index.
    TwoTone,
    /// `0.5 sin(2 pi 0.13 s) + 0.3 cos(2 pi 0.57 s) - 0.3` with `s` in seconds;
    /// neither frequency belongs to the pendulum training family.
    Unseen,
    Step { at: usize, amplitude: f64 },
}

impl TestTrajectory {
    pub fn build(&self, period: f64, steps: usize) -> Trajectory {
        match *self {
            TestTrajectory::TwoTone => Trajectory::from_fn(period, steps, |t| {
                let t = t as f64;
                (2.0 * PI * t / 15.0).sin() + (2.0 * PI * t / 12.0).cos() - 1.0
            }),
            TestTrajectory::Unseen => Trajectory::from_fn(period, steps, |t| {
                let s = t as f64 * period;
                0.5 * (2.0 * PI * 0.13 * s).sin() + 0.3 * (2.0 * PI * 0.57 * s).cos() - 0.3
            }),
            TestTrajectory::Step { at, amplitude } => {
                Trajectory::from_fn(period, steps, |t| if t >= at { amplitude } else { 0.0 })
            }
        }
    }

    pub fn is_step(&self) -> bool {
        matches!(self, TestTrajectory::Step { .. })
    }
}

impl ExperimentConfig {
    /// Recipe used for the reproductions of each shipped system.
    pub fn defaults_for(system: SystemKind) -> Self {
        let train = TrainConfig {
            hidden_layers: vec![20, 20],
            activation: Activation::Tanh,
            trainer: Trainer::LevenbergMarquardt,
            max_iterations: 100,
            loss_tolerance: 1e-10,
            ..TrainConfig::default()
        };
        let features = FeatureConfig {
            mode: FeatureMode::StateSpace,
            difference: false,
            difference_reference: DifferenceReference::ActualNow,
            relative_degree: None,
            order: None,
        };
        if system.is_pendulum() {
            Self {
                system,
                seed: 0,
                custom: None,
                recipe: Recipe {
                    amplitudes: vec![0.2, 0.4, 0.6, 0.8, 1.0],
                    frequencies_hz: vec![0.05, 0.1, 0.2, 0.4, 0.8],
                    period: 0.02,
                    steps: 1000,
                    per_source: 200,
                },
                features,
                train: TrainConfig {
                    max_iterations: 60,
                    ..train
                },
                test: TestConfig {
                    trajectory: TestTrajectory::Unseen,
                    steps: 1500,
                    skip: None,
                    tail_fraction: 0.25,
                },
            }
        } else {
            Self {
                system,
                seed: 0,
                custom: None,
                recipe: Recipe {
                    amplitudes: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                    frequencies_hz: vec![0.024, 0.032, 0.048, 0.091, 1.0],
                    period: 1.0,
                    steps: 1000,
                    per_source: 200,
                },
                features,
                train,
                test: TestConfig {
                    trajectory: TestTrajectory::TwoTone,
                    steps: 500,
                    skip: None,
                    tail_fraction: 0.25,
                },
            }
        }
    }

    /// Difference-mode variant used by the gain-mismatch study: the
    /// transfer-function window of desired outputs, referenced to `y_d(t)`,
    /// tested on a long unit step.
    pub fn difference_study(system: SystemKind) -> Self {
        let mut cfg = Self::defaults_for(system);
        cfg.features.mode = FeatureMode::TransferFunction;
        cfg.features.difference = true;
        cfg.features.difference_reference = DifferenceReference::DesiredNow;
        cfg.train.max_iterations = 100;
        cfg.test = TestConfig {
            trajectory: TestTrajectory::Step {
                at: 50,
                amplitude: 1.0,
            },
            steps: 1500,
            skip: None,
            tail_fraction: 0.25,
        };
        cfg
    }

    /// Parses TOML text. Keys not given fall back to the defaults of the
    /// selected system (`system` itself defaults to `sim_stable`).
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        Self::resolve(text, None, None)
    }

    /// As [`ExperimentConfig::from_toml`], with command-line overrides for
    /// the system and the seed taking precedence over the file.
    pub fn resolve(
        text: &str,
        system: Option<SystemKind>,
        seed: Option<u64>,
    ) -> Result<Self, CliError> {
        let mut user: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        if let Some(system) = system {
            user.insert("system".into(), toml::Value::String(system.name().into()));
        }
        if let Some(seed) = seed {
            let seed = i64::try_from(seed)
                .map_err(|_| CliError::Config(format!("seed {seed} does not fit in TOML")))?;
            user.insert("seed".into(), toml::Value::Integer(seed));
        }
        let system = match user.get("system") {
            Some(v) => SystemKind::deserialize(v.clone())
                .map_err(|e| CliError::Config(format!("system: {e}")))?,
            None => SystemKind::SimStable,
        };
        let mut merged = toml::Table::try_from(Self::defaults_for(system))
            .map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(
        path: Option<&Path>,
        system: Option<SystemKind>,
        seed: Option<u64>,
    ) -> Result<Self, CliError> {
        let text = match path {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
            None => String::new(),
        };
        Self::resolve(&text, system, seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let r = &self.recipe;
        if r.amplitudes.is_empty() || r.frequencies_hz.is_empty() {
            return bad("recipe needs at least one amplitude and one frequency".into());
        }
        if r.amplitudes.iter().chain(&r.frequencies_hz).any(|v| !v.is_finite()) {
            return bad("recipe values must be finite".into());
        }
        if !(r.period > 0.0 && r.period.is_finite()) {
            return bad(format!("sample period must be positive, got {}", r.period));
        }
        if r.per_source == 0 || r.steps <= r.per_source {
            return bad("need 0 < per_source < steps".into());
        }
        if self.test.steps == 0 {
            return bad("test trajectory needs at least one step".into());
        }
        if !(self.test.tail_fraction > 0.0 && self.test.tail_fraction <= 0.5) {
            return bad("tail_fraction must lie in (0, 0.5]".into());
        }
        if self.train.hidden_layers.contains(&0) {
            return bad("hidden layers must have at least one unit".into());
        }
        match (self.system, &self.custom) {
            (SystemKind::Custom, None) => return bad("system = \"custom\" needs a [custom] table".into()),
            (SystemKind::Custom, Some(_)) => {}
            (_, Some(_)) => return bad("[custom] given for a shipped system".into()),
            _ => {}
        }
        if self.system.is_pendulum() {
            let dt = tracker_core::plant::PendulumParams::default().dt;
            if (r.period - dt).abs() > 1e-12 {
                return bad(format!("pendulum runs at period {dt}, recipe says {}", r.period));
            }
        }
        self.plant()?;
        Ok(())
    }

    pub fn plant(&self) -> Result<Plant, CliError> {
        match (&self.custom, Plant::shipped(self.system)) {
            (_, Some(p)) => Ok(p),
            (Some(c), None) => LtiStateSpace::from_slices(&c.a, &c.b, &c.c)
                .map(Plant::Lti)
                .map_err(|e| CliError::Config(format!("custom system: {e}"))),
            (None, None) => Err(CliError::Config("custom system without matrices".into())),
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_stable_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::defaults_for(SystemKind::SimStable));
        assert_eq!(cfg.recipe.amplitudes.len() * cfg.recipe.frequencies_hz.len(), 25);
    }

    #[test]
    fn integers_read_as_floats() {
        let cfg = ExperimentConfig::from_toml("[recipe]\namplitudes = [1, 2]\nperiod = 1\n").unwrap();
        assert_eq!(cfg.recipe.amplitudes, vec![1.0, 2.0]);
        assert_eq!(cfg.recipe.frequencies_hz.len(), 5);
    }

    #[test]
    fn partial_override_keeps_system_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "system = \"pendulum\"\nseed = 4\n[train]\nmax_iterations = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.train.max_iterations, 3);
        assert_eq!(cfg.recipe.period, 0.02);
        assert_eq!(cfg.train.hidden_layers, vec![20, 20]);
    }

    #[test]
    fn round_trips_through_toml() {
        for kind in SystemKind::SHIPPED {
            let cfg = ExperimentConfig::difference_study(kind);
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "[recipe]\namplitudes = []\n",
            "system = \"nope\"\n",
            "colour = 3\n",
            "[train]\nlearning_rat = 0.1\n",
            "system = \"custom\"\n",
            "system = \"pendulum\"\n[recipe]\nperiod = 1.0\n",
            "[test]\ntail_fraction = 0.9\n",
            "system = \"custom\"\n[custom]\na = [[0.5, 0.0]]\nb = [1.0]\nc = [1.0]\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn overrides_beat_file() {
        let cfg = ExperimentConfig::resolve("seed = 3\n", Some(SystemKind::Pendulum), Some(9)).unwrap();
        assert_eq!((cfg.system, cfg.seed), (SystemKind::Pendulum, 9));
        assert_eq!(cfg.recipe.period, 0.02);
    }

    #[test]
    fn custom_matrices() {
        let cfg = ExperimentConfig::from_toml(
            "system = \"custom\"\n[custom]\na = [[0.5]]\nb = [1.0]\nc = [0.5]\n",
        )
        .unwrap();
        assert!(matches!(cfg.plant().unwrap(), Plant::Lti(_)));
    }

    #[test]
    fn step_trajectory() {
        let tr = TestTrajectory::Step { at: 2, amplitude: 1.5 }.build(1.0, 5);
        assert_eq!(tr.values, vec![0.0, 0.0, 1.5, 1.5, 1.5]);
        let two_tone = TestTrajectory::TwoTone.build(1.0, 3);
        assert_eq!(two_tone.values[0], 0.0);
    }
}
