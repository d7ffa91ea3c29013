//! Minimal closed-loop knowledge needed before a learned inverse can work:
//! relative degree, DC gain, zero locations and step-tracking offset.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{
    linearize, simulate, ss_to_tf, ControlAffine, LtiStateSpace, RunLog, Trajectory,
    TransferFunctionModel,
};
use crate::poly;

/// Threshold for matrix-based relative degree detection.
pub const DEFAULT_MARKOV_TOL: f64 = 1e-9;

/// Step-response detection threshold relative to the step amplitude.
pub const DEFAULT_STEP_TOL_REL: f64 = 1e-6;

/// Zeros with modulus within this band around 1 are flagged as marginal.
pub const UNIT_CIRCLE_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysIdReport {
    pub relative_degree: usize,
    pub dc_gain: f64,
    pub zeros: Vec<ComplexValue>,
    pub minimum_phase: bool,
    pub step_steady_state_error: f64,
    /// Set when some zero sits within [`UNIT_CIRCLE_BAND`] of the unit circle.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub near_unit_circle: bool,
}

impl SysIdReport {
    /// Difference learning needs a unity DC gain; `tol` bounds `|K0 - 1|`.
    pub fn difference_learning_eligible(&self, tol: f64) -> bool {
        (self.dc_gain - 1.0).abs() <= tol
    }
}

/// Smallest `r` in `1..=n` with `|c A^{r-1} b| > tol`.
pub fn relative_degree_lti(sys: &LtiStateSpace, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let mut v = sys.b().clone();
    for r in 1..=sys.n() {
        if (sys.c() * &v)[0].abs() > tol {
            return Ok(r);
        }
        v = sys.a() * v;
    }
    Err(Error::RelativeDegreeUndefined)
}

/// Delay, in steps, between a unit step applied at step 0 and the first
/// output sample whose magnitude exceeds `tol`.
pub fn relative_degree_from_step(step_log: &RunLog, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    step_log
        .y
        .values
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, y)| y.abs() > tol)
        .map(|(r, _)| r)
        .ok_or(Error::NoResponse)
}

pub trait DcGain {
    /// Steady-state output per unit constant input, `G(1)`.
    fn dc_gain(&self) -> Result<f64>;
}

impl DcGain for TransferFunctionModel {
    fn dc_gain(&self) -> Result<f64> {
        let den = poly::eval(&self.denominator(), 1.0);
        if den.abs() <= 1e-12 {
            return Err(Error::DcGainUndefined);
        }
        Ok(poly::eval(self.numerator(), 1.0) / den)
    }
}

impl DcGain for LtiStateSpace {
    fn dc_gain(&self) -> Result<f64> {
        let n = self.n();
        let m: DMatrix<f64> = DMatrix::identity(n, n) - self.a();
        let lu = m.lu();
        if lu.determinant().abs() <= 1e-12 {
            return Err(Error::DcGainUndefined);
        }
        let v: DVector<f64> = lu.solve(self.b()).ok_or(Error::DcGainUndefined)?;
        Ok(self.c().dot(&v.transpose()))
    }
}

pub fn dc_gain<S: DcGain + ?Sized>(sys: &S) -> Result<f64> {
    sys.dc_gain()
}

/// Roots of the numerator polynomial.
pub fn zeros(tf: &TransferFunctionModel) -> Vec<Complex64> {
    poly::roots(tf.numerator())
}

/// `(minimum_phase, near_unit_circle)` for a zero set. Marginal zeros count
/// as non-minimum-phase.
pub fn phase_verdict(zeros: &[Complex64]) -> (bool, bool) {
    let near = zeros
        .iter()
        .any(|z| (z.norm() - 1.0).abs() <= UNIT_CIRCLE_BAND);
    let inside = zeros.iter().all(|z| z.norm() < 1.0);
    (inside && !near, near)
}

/// Mean `|y - A|` over the final `tail_fraction` of a step log, where `A` is
/// the final desired value.
pub fn step_steady_state_error(step_log: &RunLog, tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        return Err(Error::InvalidArgument(
            "tail fraction must lie in (0, 0.5]".into(),
        ));
    }
    let len = step_log.len();
    let window = (len as f64 * tail_fraction).floor() as usize;
    if window < 10 {
        let needed = (10.0 / tail_fraction).ceil() as usize;
        return Err(Error::LogTooShort { needed, found: len });
    }
    let amplitude = *step_log.y_d.values.last().unwrap();
    let tail = &step_log.y.values[len - window..];
    Ok(tail.iter().map(|y| (y - amplitude).abs()).sum::<f64>() / window as f64)
}

/// Unit step from rest.
pub fn step_response<S: ControlAffine + ?Sized>(
    sys: &S,
    period: f64,
    steps: usize,
) -> Result<RunLog> {
    let x0 = DVector::zeros(sys.state_dim());
    simulate(sys, &Trajectory::constant(period, steps, 1.0), &x0)
}

/// Full report for a known linear loop. The step offset is measured on a
/// simulated unit step of `steps` samples.
pub fn identify_lti(sys: &LtiStateSpace, period: f64, steps: usize) -> Result<SysIdReport> {
    let relative_degree = relative_degree_lti(sys, DEFAULT_MARKOV_TOL)?;
    let tf = ss_to_tf(sys)?;
    let zeros = zeros(&tf);
    let (minimum_phase, near_unit_circle) = phase_verdict(&zeros);
    let step = step_response(sys, period, steps)?;
    Ok(SysIdReport {
        relative_degree,
        dc_gain: sys.dc_gain()?,
        zeros: zeros.into_iter().map(Into::into).collect(),
        minimum_phase,
        step_steady_state_error: step_steady_state_error(&step, 0.25)?,
        near_unit_circle,
    })
}

/// Report for a loop known only through simulation. Relative degree and step
/// offset come from the recorded unit step; DC gain and zeros come from the
/// linearisation at rest.
pub fn identify_black_box<S: ControlAffine + ?Sized>(
    sys: &S,
    period: f64,
    steps: usize,
) -> Result<SysIdReport> {
    let step = step_response(sys, period, steps)?;
    let relative_degree = relative_degree_from_step(&step, DEFAULT_STEP_TOL_REL)?;
    let lin = linearize(sys, &DVector::zeros(sys.state_dim()), 0.0)?;
    let tf = ss_to_tf(&lin)?;
    let zeros = zeros(&tf);
    let (minimum_phase, near_unit_circle) = phase_verdict(&zeros);
    Ok(SysIdReport {
        relative_degree,
        dc_gain: tf.dc_gain()?,
        zeros: zeros.into_iter().map(Into::into).collect(),
        minimum_phase,
        step_steady_state_error: step_steady_state_error(&step, 0.25)?,
        near_unit_circle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{sim_stable, sim_unstable, tf_to_ss, Pendulum};
    use nalgebra::{dmatrix, dvector, RowDVector};

    #[test]
    fn relative_degree_of_shipped_systems() {
        assert_eq!(relative_degree_lti(&sim_stable(), 1e-9).unwrap(), 1);
        assert_eq!(relative_degree_lti(&sim_unstable(), 1e-9).unwrap(), 1);
    }

    #[test]
    fn relative_degree_two_from_padded_tf() {
        // (z - 0.2) / (z^3 - 0.8 z^2 + 0.15 z)
        let tf = TransferFunctionModel::new(vec![0.0, 0.15, -0.8], vec![-0.2, 1.0]).unwrap();
        let sys = tf_to_ss(&tf);
        assert_eq!(sys.markov(0), 0.0);
        assert!(sys.markov(1) != 0.0);
        assert_eq!(relative_degree_lti(&sys, 1e-9).unwrap(), 2);
    }

    #[test]
    fn zero_output_map_has_no_relative_degree() {
        let sys = LtiStateSpace::new(
            dmatrix![0.0, 1.0; -0.15, 0.8],
            dvector![0.0, 1.0],
            RowDVector::zeros(2),
        )
        .unwrap();
        assert!(matches!(
            relative_degree_lti(&sys, 1e-9),
            Err(Error::RelativeDegreeUndefined)
        ));
    }

    #[test]
    fn step_based_relative_degree() {
        let log = step_response(&sim_stable(), 1.0, 20).unwrap();
        assert_eq!(relative_degree_from_step(&log, 1e-6).unwrap(), 1);
        let log = step_response(&Pendulum::default(), 0.02, 20).unwrap();
        assert_eq!(log.y.values[1], 0.0);
        assert!(log.y.values[2] > 0.0);
        assert_eq!(relative_degree_from_step(&log, 1e-6).unwrap(), 2);
    }

    #[test]
    fn silent_log_reports_no_response() {
        let log = simulate(
            &sim_stable(),
            &Trajectory::constant(1.0, 20, 0.0),
            &dvector![0.0, 0.0],
        )
        .unwrap();
        assert!(matches!(
            relative_degree_from_step(&log, 1e-6),
            Err(Error::NoResponse)
        ));
    }

    #[test]
    fn dc_gains() {
        assert!((sim_stable().dc_gain().unwrap() - 16.0 / 7.0).abs() < 1e-12);
        assert!((sim_unstable().dc_gain().unwrap() + 18.0 / 7.0).abs() < 1e-10);
        let delay = TransferFunctionModel::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(delay.dc_gain().unwrap(), 1.0);
    }

    #[test]
    fn integrator_has_no_dc_gain() {
        let tf = TransferFunctionModel::new(vec![-1.0], vec![1.0]).unwrap();
        assert!(matches!(tf.dc_gain(), Err(Error::DcGainUndefined)));
        let sys = tf_to_ss(&tf);
        assert!(matches!(sys.dc_gain(), Err(Error::DcGainUndefined)));
    }

    #[test]
    fn zeros_of_shipped_systems() {
        let z = zeros(&ss_to_tf(&sim_stable()).unwrap());
        assert_eq!(z.len(), 1);
        assert!((z[0] - Complex64::new(0.2, 0.0)).norm() < 1e-12);
        assert!(phase_verdict(&z).0);

        let tf = ss_to_tf(&sim_unstable()).unwrap();
        let z = zeros(&tf);
        assert!((z[0] - Complex64::new(1.002, 0.0)).norm() < 1e-12);
        assert!(poly::eval_complex(tf.numerator(), z[0]).norm() < 1e-8);
        assert!(!phase_verdict(&z).0);
    }

    #[test]
    fn constant_numerator_has_no_zeros() {
        let tf = TransferFunctionModel::new(vec![0.15, -0.8], vec![2.0]).unwrap();
        assert!(zeros(&tf).is_empty());
        assert_eq!(phase_verdict(&[]), (true, false));
    }

    #[test]
    fn marginal_zero_is_flagged() {
        let z = [Complex64::new(1.0 - 1e-7, 0.0)];
        assert_eq!(phase_verdict(&z), (false, true));
    }

    #[test]
    fn step_offsets() {
        let log = step_response(&sim_stable(), 1.0, 200).unwrap();
        let e = step_steady_state_error(&log, 0.25).unwrap();
        assert!((e - 9.0 / 7.0).abs() < 1e-9);

        let delay = LtiStateSpace::from_slices(&[vec![0.0]], &[1.0], &[1.0]).unwrap();
        let log = step_response(&delay, 1.0, 200).unwrap();
        assert!(step_steady_state_error(&log, 0.25).unwrap() < 1e-6);

        let log = step_response(&Pendulum::scaled_gain(0.5), 0.02, 1500).unwrap();
        let e = step_steady_state_error(&log, 0.25).unwrap();
        assert!((e - 0.5).abs() < 1e-3, "{e}");
    }

    #[test]
    fn step_offset_needs_enough_samples() {
        let log = step_response(&sim_stable(), 1.0, 30).unwrap();
        assert!(matches!(
            step_steady_state_error(&log, 0.25),
            Err(Error::LogTooShort { .. })
        ));
        assert!(step_steady_state_error(&log, 0.7).is_err());
    }

    #[test]
    fn report_serialises_expected_fields() {
        let report = identify_lti(&sim_stable(), 1.0, 200).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "relative_degree",
            "dc_gain",
            "zeros",
            "minimum_phase",
            "step_steady_state_error",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["zeros"][0]["re"].as_f64().unwrap(), report.zeros[0].re);
        assert!(!report.difference_learning_eligible(1e-3));
    }

    #[test]
    fn black_box_pendulum() {
        let report = identify_black_box(&Pendulum::default(), 0.02, 1500).unwrap();
        assert_eq!(report.relative_degree, 2);
        assert!(report.zeros.is_empty());
        assert!(report.minimum_phase);
        assert!((report.dc_gain - 1.0).abs() < 1e-6);
        assert!(report.difference_learning_eligible(1e-3));
    }
}
