//! Closed-form inverse dynamics of known baseline loops.
//!
//! These are the functions a learned reference generator is supposed to
//! approximate; they double as oracles in tests and as ground truth in
//! evaluation traces.

use std::collections::VecDeque;

use nalgebra::{DVector, RowDVector};

use crate::error::{check_dim, Error, Result};
use crate::plant::{ControlAffine, LtiStateSpace, Pendulum, Trajectory, TransferFunctionModel};

/// Cached `c A^r` and `c A^{r-1} b` for the state-space inverse.
#[derive(Debug, Clone)]
pub struct StateSpaceInverse {
    ca_r: RowDVector<f64>,
    gain: f64,
    r: usize,
}

impl StateSpaceInverse {
    pub fn new(sys: &LtiStateSpace, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidArgument("relative degree must be at least 1".into()));
        }
        let mut ca = sys.c().clone();
        for _ in 0..r - 1 {
            ca = &ca * sys.a();
        }
        let gain = ca.dot(&sys.b().transpose());
        if gain == 0.0 {
            return Err(Error::RelativeDegreeLost(gain));
        }
        let ca_r = &ca * sys.a();
        Ok(Self { ca_r, gain, r })
    }

    pub fn relative_degree(&self) -> usize {
        self.r
    }

    /// `u = (y_d(t+r) - c A^r x) / (c A^{r-1} b)`
    pub fn reference(&self, x: &DVector<f64>, yd_future: f64) -> Result<f64> {
        check_dim("state", self.ca_r.len(), x.len())?;
        Ok((yd_future - self.ca_r.dot(&x.transpose())) / self.gain)
    }
}

pub fn exact_inverse_ss(
    sys: &LtiStateSpace,
    r: usize,
    x: &DVector<f64>,
    yd_future: f64,
) -> Result<f64> {
    StateSpaceInverse::new(sys, r)?.reference(x, yd_future)
}

fn check_windows(tf: &TransferFunctionModel, yd: usize, u: usize) -> Result<()> {
    let n = tf.order();
    check_dim("desired-output window", n + 1, yd)?;
    check_dim("reference history", n - tf.relative_degree(), u)
}

/// Weighted window sums shared by the plain and difference forms:
/// `(y_d(t+r) + sum alpha y_d - sum beta u) / beta_{n-r}`.
fn tf_combination(tf: &TransferFunctionModel, yd_window: &[f64], u_history: &[f64]) -> f64 {
    let n = tf.order();
    let alpha = tf.alpha();
    let beta = tf.beta();
    let m = beta.len() - 1;
    // yd_window[k] = y_d(t+r-k) pairs with alpha_{n-k}; k = 0 has weight 1
    let yd_part = yd_window[0]
        + (1..=n)
            .map(|k| alpha[n - k] * yd_window[k])
            .sum::<f64>();
    // u_history[j] = u(t-1-j) pairs with beta_{n-r-1-j}
    let u_part: f64 = u_history
        .iter()
        .enumerate()
        .map(|(j, u)| beta[m - 1 - j] * u)
        .sum();
    (yd_part - u_part) / tf.leading_beta()
}

/// Exact inverse from input/output windows.
///
/// `yd_window` holds `y_d(t+r), y_d(t+r-1), .., y_d(t-n+r)` and `u_history`
/// holds `u(t-1), .., u(t-n+r)`.
pub fn exact_inverse_tf(
    tf: &TransferFunctionModel,
    yd_window: &[f64],
    u_history: &[f64],
) -> Result<f64> {
    check_windows(tf, yd_window.len(), u_history.len())?;
    Ok(tf_combination(tf, yd_window, u_history))
}

/// Difference form of [`exact_inverse_tf`]. Windows are taken relative to
/// `y_d(t)`. Returns the translation-invariant part and the offset term
///
/// ```text
/// s = (1 - sum beta + sum alpha) y_d(t) / beta_{n-r}
/// ```
///
/// so that `du + s + y_d(t)` equals the undifferenced inverse.
pub fn exact_inverse_diff(
    tf: &TransferFunctionModel,
    dyd_window: &[f64],
    du_history: &[f64],
    yd_now: f64,
) -> Result<(f64, f64)> {
    check_windows(tf, dyd_window.len(), du_history.len())?;
    let du = tf_combination(tf, dyd_window, du_history);
    Ok((du, offset_term(tf, yd_now)))
}

/// `s(y_d(t))`; identically zero exactly when the DC gain is one.
pub fn offset_term(tf: &TransferFunctionModel, yd_now: f64) -> f64 {
    let sum_beta: f64 = tf.beta().iter().sum();
    let sum_alpha: f64 = tf.alpha().iter().sum();
    (1.0 - sum_beta + sum_alpha) * yd_now / tf.leading_beta()
}

/// Running transfer-function inverse with zero initial history.
#[derive(Debug, Clone)]
pub struct TfInverse {
    tf: TransferFunctionModel,
    u_history: VecDeque<f64>,
}

impl TfInverse {
    pub fn new(tf: TransferFunctionModel) -> Self {
        let len = tf.order() - tf.relative_degree();
        Self {
            tf,
            u_history: std::iter::repeat_n(0.0, len).collect(),
        }
    }

    pub fn model(&self) -> &TransferFunctionModel {
        &self.tf
    }

    /// Reference for step `t` given the full desired trajectory; samples
    /// before 0 read as zero and samples past the end hold the last value.
    pub fn next(&mut self, y_d: &Trajectory, t: usize) -> f64 {
        let n = self.tf.order() as isize;
        let r = self.tf.relative_degree() as isize;
        let t = t as isize;
        let window: Vec<f64> = (0..=n).map(|k| y_d.at_signed(t + r - k)).collect();
        let history: Vec<f64> = self.u_history.iter().copied().collect();
        let u = tf_combination(&self.tf, &window, &history);
        if !self.u_history.is_empty() {
            self.u_history.pop_back();
            self.u_history.push_front(u);
        }
        u
    }
}

/// `u = (y_d(t+r) - hhat(x)) / D(x)` for loops whose `r`-step output is
/// affine in the reference.
pub fn exact_inverse_affine_nonlinear<H, D>(
    hhat: H,
    input_sensitivity: D,
    x: &DVector<f64>,
    yd_future: f64,
) -> Result<f64>
where
    H: Fn(&DVector<f64>) -> f64,
    D: Fn(&DVector<f64>) -> f64,
{
    let d = input_sensitivity(x);
    if !(d.abs() >= 1e-12) {
        return Err(Error::RelativeDegreeLost(d));
    }
    Ok((yd_future - hhat(x)) / d)
}

/// `y(t+r) = hhat(x(t)) + D(x(t)) u(t)`.
pub trait AffineInverse {
    fn relative_degree(&self) -> usize;

    /// `hhat(x) = h(f^r(x))`
    fn free_response(&self, x: &DVector<f64>) -> f64;

    /// `D(x)`, the sensitivity of `y(t+r)` to `u(t)`.
    fn input_sensitivity(&self, x: &DVector<f64>) -> f64;

    fn reference(&self, x: &DVector<f64>, yd_future: f64) -> Result<f64> {
        exact_inverse_affine_nonlinear(
            |x| self.free_response(x),
            |x| self.input_sensitivity(x),
            x,
            yd_future,
        )
    }
}

impl AffineInverse for Pendulum {
    fn relative_degree(&self) -> usize {
        2
    }

    // theta(t+2) = theta + 2 dt w + dt^2 (acc_free(theta, w) + kp gamma u)
    fn free_response(&self, x: &DVector<f64>) -> f64 {
        let dt = self.params.dt;
        x[0] + 2.0 * dt * x[1] + dt * dt * self.free_acceleration(x[0], x[1])
    }

    fn input_sensitivity(&self, _x: &DVector<f64>) -> f64 {
        let p = &self.params;
        p.dt * p.dt * p.kp * p.reference_gain
    }
}

/// Inverse obtained by composing the step map numerically; exact whenever the
/// `r`-step output is affine in the reference.
#[derive(Debug, Clone)]
pub struct CompositionInverse<S> {
    sys: S,
    r: usize,
}

impl<S: ControlAffine> CompositionInverse<S> {
    pub fn new(sys: S, r: usize) -> Self {
        assert!(r >= 1, "relative degree must be at least 1");
        Self { sys, r }
    }

    fn output_after(&self, x: &DVector<f64>, u: f64) -> f64 {
        let mut z = self.sys.advance(x, u);
        for _ in 1..self.r {
            z = self.sys.drift(&z);
        }
        self.sys.output(&z)
    }
}

impl<S: ControlAffine> AffineInverse for CompositionInverse<S> {
    fn relative_degree(&self) -> usize {
        self.r
    }

    fn free_response(&self, x: &DVector<f64>) -> f64 {
        self.output_after(x, 0.0)
    }

    fn input_sensitivity(&self, x: &DVector<f64>) -> f64 {
        self.output_after(x, 1.0) - self.output_after(x, 0.0)
    }
}
