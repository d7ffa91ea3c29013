//! Baseline closed-loop models and forward simulation.
//!
//! Every model is a single-input single-output discrete-time system whose
//! output is read from the state *before* the update:
//!
//! ```text
//! y(t)   = h(x(t))
//! x(t+1) = f(x(t)) + g(x(t)) u(t)
//! ```

mod lti;
mod nonlinear;
pub mod random;
mod sim;
mod transfer;

pub use lti::{ss_to_tf, tf_to_ss, LtiStateSpace};
pub use nonlinear::{linearize, ControlAffine, Pendulum, PendulumParams};
pub use sim::{simulate, RunLog, Trajectory, DIVERGENCE_LIMIT};
pub(crate) use sim::fmt_full;
pub(crate) use sim::run_closed_loop;
pub use transfer::TransferFunctionModel;

use nalgebra::{dmatrix, dvector, RowDVector};

/// Minimum-phase benchmark loop: poles 0.3 and 0.5, zero at 0.2.
pub fn sim_stable() -> LtiStateSpace {
    LtiStateSpace::new(
        dmatrix![0.0, 1.0; -0.15, 0.8],
        dvector![0.0, 1.0],
        RowDVector::from_row_slice(&[-0.2, 1.0]),
    )
    .expect("shipped system is well formed")
}

/// Same poles as [`sim_stable`] with a zero at 1.002 (non-minimum phase).
pub fn sim_unstable() -> LtiStateSpace {
    LtiStateSpace::new(
        dmatrix![0.0, 1.0; -0.15, 0.8],
        dvector![0.0, 1.0],
        RowDVector::from_row_slice(&[-450.9, 450.0]),
    )
    .expect("shipped system is well formed")
}
