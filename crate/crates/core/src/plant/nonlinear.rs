use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use super::lti::LtiStateSpace;
use crate::error::Result;

/// `x(t+1) = f(x) + g(x) u`, `y = h(x)`.
pub trait ControlAffine {
    fn state_dim(&self) -> usize;

    /// `f(x)`
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `g(x)`
    fn input_gain(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `h(x)`
    fn output(&self, x: &DVector<f64>) -> f64;

    /// Box bounds per state component inside which the model is trusted.
    fn operating_region(&self) -> Option<Vec<(f64, f64)>> {
        None
    }

    fn advance(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        self.drift(x) + self.input_gain(x) * u
    }
}

impl<S: ControlAffine + ?Sized> ControlAffine for &S {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).drift(x)
    }
    fn input_gain(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).input_gain(x)
    }
    fn output(&self, x: &DVector<f64>) -> f64 {
        (**self).output(x)
    }
    fn operating_region(&self) -> Option<Vec<(f64, f64)>> {
        (**self).operating_region()
    }
}

/// Central-difference linearisation about `(x0, u0)`.
pub fn linearize<S: ControlAffine + ?Sized>(
    sys: &S,
    x0: &DVector<f64>,
    u0: f64,
) -> Result<LtiStateSpace> {
    let n = sys.state_dim();
    let h = 1e-6;
    let mut a = DMatrix::zeros(n, n);
    let mut c = RowDVector::zeros(n);
    for j in 0..n {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (sys.advance(&xp, u0) - sys.advance(&xm, u0)) / (2.0 * h);
        a.set_column(j, &col);
        c[j] = (sys.output(&xp) - sys.output(&xm)) / (2.0 * h);
    }
    let b = (sys.advance(x0, u0 + h) - sys.advance(x0, u0 - h)) / (2.0 * h);
    LtiStateSpace::new(a, b, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    /// Sample period in seconds.
    pub dt: f64,
    /// Gravity coefficient `a` in `-a sin(theta)`.
    pub gravity: f64,
    /// Linear viscous damping.
    pub damping: f64,
    /// Quadratic aerodynamic drag, `-drag * w * |w|`.
    pub drag: f64,
    pub kp: f64,
    pub kd: f64,
    /// Fraction of the gravity torque cancelled by the controller.
    pub gravity_compensation: f64,
    /// Factor applied to the reference before it reaches the controller.
    pub reference_gain: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            dt: 0.02,
            gravity: 9.81,
            damping: 0.5,
            drag: 0.5,
            kp: 16.0,
            kd: 8.0,
            gravity_compensation: 1.0,
            reference_gain: 1.0,
        }
    }
}

/// PD-controlled damped pendulum closed loop, Euler-discretised:
///
/// ```text
/// theta+ = theta + dt w
/// w+     = w + dt (-(1-k_g) a sin(theta) - d w - c_q w|w| + kp (gamma u - theta) - kd w)
/// y      = theta
/// ```
///
/// The reference enters two steps before the angle responds (relative degree 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pendulum {
    pub params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self { params }
    }

    /// Same loop with the reference scaled by `gain` (non-unity DC gain).
    pub fn scaled_gain(gain: f64) -> Self {
        Self::new(PendulumParams {
            reference_gain: gain,
            ..PendulumParams::default()
        })
    }

    /// Angular acceleration without the reference contribution.
    pub(crate) fn free_acceleration(&self, theta: f64, w: f64) -> f64 {
        let p = &self.params;
        -(1.0 - p.gravity_compensation) * p.gravity * theta.sin()
            - p.damping * w
            - p.drag * w * w.abs()
            - p.kp * theta
            - p.kd * w
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new(PendulumParams::default())
    }
}

impl ControlAffine for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let dt = self.params.dt;
        DVector::from_column_slice(&[
            x[0] + dt * x[1],
            x[1] + dt * self.free_acceleration(x[0], x[1]),
        ])
    }

    fn input_gain(&self, _x: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        DVector::from_column_slice(&[0.0, p.dt * p.kp * p.reference_gain])
    }

    fn output(&self, x: &DVector<f64>) -> f64 {
        x[0]
    }

    fn operating_region(&self) -> Option<Vec<(f64, f64)>> {
        Some(vec![(-std::f64::consts::PI, std::f64::consts::PI), (-20.0, 20.0)])
    }
}
