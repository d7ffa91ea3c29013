//! Named plants available to experiments.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use tracker_core::inverse::{AffineInverse, StateSpaceInverse};
use tracker_core::plant::{sim_stable, sim_unstable, ControlAffine, LtiStateSpace, Pendulum};
use tracker_core::sysid::{self, SysIdReport, DEFAULT_MARKOV_TOL};
use tracker_core::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SystemKind {
    SimStable,
    SimUnstable,
    Pendulum,
    PendulumScaledGain,
    Custom,
}

impl SystemKind {
    pub const SHIPPED: [SystemKind; 4] = [
        SystemKind::SimStable,
        SystemKind::SimUnstable,
        SystemKind::Pendulum,
        SystemKind::PendulumScaledGain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::SimStable => "sim_stable",
            SystemKind::SimUnstable => "sim_unstable",
            SystemKind::Pendulum => "pendulum",
            SystemKind::PendulumScaledGain => "pendulum_scaled_gain",
            SystemKind::Custom => "custom",
        }
    }

    pub fn is_pendulum(self) -> bool {
        matches!(self, SystemKind::Pendulum | SystemKind::PendulumScaledGain)
    }
}

/// Reference gain of the scaled pendulum variant.
pub const SCALED_GAIN: f64 = 0.5;

/// A concrete plant behind a [`SystemKind`].
#[derive(Debug, Clone)]
pub enum Plant {
    Lti(LtiStateSpace),
    Pendulum(Pendulum),
}

impl Plant {
    /// Builds a shipped plant; `Custom` needs explicit matrices instead.
    pub fn shipped(kind: SystemKind) -> Option<Self> {
        Some(match kind {
            SystemKind::SimStable => Plant::Lti(sim_stable()),
            SystemKind::SimUnstable => Plant::Lti(sim_unstable()),
            SystemKind::Pendulum => Plant::Pendulum(Pendulum::scaled_gain(1.0)),
            SystemKind::PendulumScaledGain => Plant::Pendulum(Pendulum::scaled_gain(SCALED_GAIN)),
            SystemKind::Custom => return None,
        })
    }

    pub fn order(&self) -> usize {
        self.state_dim()
    }

    pub fn relative_degree(&self) -> Result<usize> {
        match self {
            Plant::Lti(sys) => sysid::relative_degree_lti(sys, DEFAULT_MARKOV_TOL),
            Plant::Pendulum(p) => Ok(p.relative_degree()),
        }
    }

    pub fn identify(&self, period: f64, steps: usize) -> Result<SysIdReport> {
        match self {
            Plant::Lti(sys) => sysid::identify_lti(sys, period, steps),
            Plant::Pendulum(p) => sysid::identify_black_box(p, period, steps),
        }
    }

    /// Exact inverse-dynamics reference at state `x`.
    pub fn oracle(&self, r: usize) -> Result<Oracle<'_>> {
        Ok(match self {
            Plant::Lti(sys) => Oracle::Lti(StateSpaceInverse::new(sys, r)?),
            Plant::Pendulum(p) => Oracle::Pendulum(p),
        })
    }
}

pub enum Oracle<'a> {
    Lti(StateSpaceInverse),
    Pendulum(&'a Pendulum),
}

impl Oracle<'_> {
    pub fn reference(&self, x: &DVector<f64>, yd_future: f64) -> Result<f64> {
        match self {
            Oracle::Lti(inv) => inv.reference(x, yd_future),
            Oracle::Pendulum(p) => p.reference(x, yd_future),
        }
    }
}

impl ControlAffine for Plant {
    fn state_dim(&self) -> usize {
        match self {
            Plant::Lti(s) => s.state_dim(),
            Plant::Pendulum(s) => s.state_dim(),
        }
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Plant::Lti(s) => s.drift(x),
            Plant::Pendulum(s) => s.drift(x),
        }
    }

    fn input_gain(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Plant::Lti(s) => s.input_gain(x),
            Plant::Pendulum(s) => s.input_gain(x),
        }
    }

    fn output(&self, x: &DVector<f64>) -> f64 {
        match self {
            Plant::Lti(s) => s.output(x),
            Plant::Pendulum(s) => s.output(x),
        }
    }

    fn operating_region(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Plant::Lti(s) => s.operating_region(),
            Plant::Pendulum(s) => s.operating_region(),
        }
    }
}
