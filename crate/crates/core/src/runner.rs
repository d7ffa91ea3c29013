//! Closed-loop execution of baseline and enhanced systems, plus tracking
//! metrics.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::{DifferenceReference, FeatureSpec};
use crate::inverse::{exact_inverse_tf, StateSpaceInverse};
use crate::nnet::FnnModel;
use crate::plant::{run_closed_loop, simulate, ControlAffine, LtiStateSpace, RunLog, Trajectory, TransferFunctionModel};

/// Enhanced runs whose output magnitude exceeds this are reported as
/// diverged even if the simulator's hard limit was never reached.
pub const UNBOUNDED_OUTPUT: f64 = 1e3;

/// Anything that maps a feature row to a reference.
pub trait ReferenceModel {
    fn input_dim(&self) -> usize;
    fn predict(&self, features: &[f64]) -> Result<f64>;
}

impl ReferenceModel for FnnModel {
    fn input_dim(&self) -> usize {
        FnnModel::input_dim(self)
    }

    fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(self.forward(features)?[0])
    }
}

impl<M: ReferenceModel + ?Sized> ReferenceModel for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn predict(&self, features: &[f64]) -> Result<f64> {
        (**self).predict(features)
    }
}

/// Exact state-space inverse behind the state-space feature layout.
#[derive(Debug, Clone)]
pub struct StateSpaceOracle {
    inverse: StateSpaceInverse,
    n: usize,
}

impl StateSpaceOracle {
    pub fn new(sys: &LtiStateSpace, r: usize) -> Result<Self> {
        Ok(Self {
            inverse: StateSpaceInverse::new(sys, r)?,
            n: sys.n(),
        })
    }
}

impl ReferenceModel for StateSpaceOracle {
    fn input_dim(&self) -> usize {
        self.n + 1
    }

    fn predict(&self, f: &[f64]) -> Result<f64> {
        check_dim("oracle features", self.n + 1, f.len())?;
        self.inverse
            .reference(&DVector::from_column_slice(&f[..self.n]), f[self.n])
    }
}

/// Exact transfer-function inverse behind the transfer-function layout.
#[derive(Debug, Clone)]
pub struct TransferFunctionOracle {
    tf: TransferFunctionModel,
}

impl TransferFunctionOracle {
    pub fn new(tf: TransferFunctionModel) -> Self {
        Self { tf }
    }
}

impl ReferenceModel for TransferFunctionOracle {
    fn input_dim(&self) -> usize {
        2 * self.tf.order() - self.tf.relative_degree() + 1
    }

    fn predict(&self, f: &[f64]) -> Result<f64> {
        check_dim("oracle features", self.input_dim(), f.len())?;
        let split = self.tf.order() + 1;
        exact_inverse_tf(&self.tf, &f[..split], &f[split..])
    }
}

/// Baseline loop fed the desired trajectory directly.
pub fn run_baseline<S: ControlAffine + ?Sized>(
    sys: &S,
    y_d: &Trajectory,
    x0: &DVector<f64>,
) -> Result<RunLog> {
    simulate(sys, y_d, x0)
}

/// Enhanced run that keeps the log up to the first divergent step.
#[derive(Debug, Clone)]
pub struct EnhancedRun {
    pub log: RunLog,
    pub diverged_at: Option<usize>,
    /// Network inputs at every completed step.
    pub features: Vec<Vec<f64>>,
}

/// Pre-cascades `model` to the loop. The model sees the current state, the
/// desired trajectory with an `r`-step preview (holding the last sample past
/// the end, zero before the start) and the previously applied references.
pub fn run_enhanced_partial<S, M>(
    sys: &S,
    model: &M,
    spec: &FeatureSpec,
    y_d: &Trajectory,
    x0: &DVector<f64>,
) -> Result<EnhancedRun>
where
    S: ControlAffine + ?Sized,
    M: ReferenceModel + ?Sized,
{
    spec.validate()?;
    check_dim("model input", spec.input_dim(), model.input_dim())?;
    if y_d.is_empty() {
        return Err(Error::InvalidArgument("desired trajectory is empty".into()));
    }
    let mut history: VecDeque<f64> = VecDeque::from(vec![0.0; spec.n]);
    let mut features = Vec::with_capacity(y_d.len());
    let mut failure = None;
    let run = run_closed_loop(sys, x0, y_d, |t, x, y| {
        let t_signed = t as isize;
        let row = spec.raw_row(
            x.as_slice(),
            |k| y_d.at_signed(t_signed + k),
            |k| history[(-k - 1) as usize],
        );
        let mut row = match row {
            Ok(row) => row,
            Err(e) => {
                failure.get_or_insert(e);
                return f64::NAN;
            }
        };
        let reference = match spec.difference_reference {
            DifferenceReference::DesiredNow => y_d.values[t],
            DifferenceReference::ActualNow => y,
        };
        if spec.difference {
            spec.difference_row(&mut row, reference);
        }
        let u = match model.predict(&row) {
            Ok(v) if spec.difference => v + reference,
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                return f64::NAN;
            }
        };
        features.push(row);
        history.pop_back();
        history.push_front(u);
        u
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    features.truncate(run.log.len());
    Ok(EnhancedRun {
        log: run.log,
        diverged_at: run.diverged_at,
        features,
    })
}

/// As [`run_enhanced_partial`] but divergence is an error.
pub fn run_enhanced<S, M>(
    sys: &S,
    model: &M,
    spec: &FeatureSpec,
    y_d: &Trajectory,
    x0: &DVector<f64>,
) -> Result<RunLog>
where
    S: ControlAffine + ?Sized,
    M: ReferenceModel + ?Sized,
{
    let run = run_enhanced_partial(sys, model, spec, y_d, x0)?;
    match run.diverged_at {
        Some(step) => Err(Error::Diverged { step }),
        None => Ok(run.log),
    }
}

/// RMS of `y - y_d` over indices `>= skip`.
pub fn rms_error(y: &Trajectory, y_d: &Trajectory, skip: usize) -> Result<f64> {
    rms_of(&y.values, &y_d.values, skip)
}

fn rms_of(a: &[f64], b: &[f64], skip: usize) -> Result<f64> {
    check_dim("trajectory length", a.len(), b.len())?;
    if skip >= a.len() {
        return Err(Error::InvalidArgument(format!(
            "skip {skip} leaves nothing of a length-{} trajectory",
            a.len()
        )));
    }
    let sq: f64 = a[skip..].iter().zip(&b[skip..]).map(|(p, q)| (p - q).powi(2)).sum();
    Ok((sq / (a.len() - skip) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rms_baseline: f64,
    /// RMS over the steps completed before divergence, if any remain.
    pub rms_enhanced: Option<f64>,
    pub reduction_percent: Option<f64>,
    pub diverged: bool,
    pub diverged_at: Option<usize>,
    pub max_abs_y: f64,
    pub skip: usize,
    pub baseline_errors: Vec<f64>,
    pub enhanced_errors: Vec<f64>,
}

/// Runs baseline and enhanced loops on the same trajectory and compares them.
pub fn compare<S, M>(
    sys: &S,
    model: &M,
    spec: &FeatureSpec,
    y_d: &Trajectory,
    x0: &DVector<f64>,
    skip: usize,
) -> Result<(ExperimentReport, RunLog, EnhancedRun)>
where
    S: ControlAffine + ?Sized,
    M: ReferenceModel + ?Sized,
{
    let baseline = run_baseline(sys, y_d, x0)?;
    let enhanced = run_enhanced_partial(sys, model, spec, y_d, x0)?;
    let rms_baseline = rms_error(&baseline.y, y_d, skip)?;
    let done = enhanced.log.len();
    let rms_enhanced = if done > skip {
        Some(rms_of(&enhanced.log.y.values, &y_d.values[..done], skip)?)
    } else {
        None
    };
    let max_abs_y = enhanced
        .log
        .y
        .values
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let diverged = enhanced.diverged_at.is_some() || max_abs_y > UNBOUNDED_OUTPUT;
    let reduction_percent = match rms_enhanced {
        Some(e) if !diverged && rms_baseline > 0.0 => Some(100.0 * (1.0 - e / rms_baseline)),
        _ => None,
    };
    let errors = |log: &RunLog| -> Vec<f64> {
        log.y
            .values
            .iter()
            .zip(&y_d.values)
            .map(|(y, d)| y - d)
            .collect()
    };
    let report = ExperimentReport {
        rms_baseline,
        rms_enhanced,
        reduction_percent,
        diverged,
        diverged_at: enhanced.diverged_at,
        max_abs_y,
        skip,
        baseline_errors: errors(&baseline),
        enhanced_errors: errors(&enhanced.log),
    };
    Ok((report, baseline, enhanced))
}

/// First step at which `|y|` exceeds `limit`.
pub fn first_exceedance(y: &[f64], limit: f64) -> Option<usize> {
    y.iter().position(|v| !v.is_finite() || v.abs() > limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMode;
    use crate::plant::{sim_stable, ss_to_tf};
    use std::f64::consts::PI;

    fn test_trajectory(steps: usize) -> Trajectory {
        Trajectory::from_fn(1.0, steps, |t| {
            let t = t as f64;
            (2.0 * PI * t / 15.0).sin() + (2.0 * PI * t / 12.0).cos() - 1.0
        })
    }

    #[test]
    fn zero_reference_zero_output() {
        let log = run_baseline(&sim_stable(), &Trajectory::constant(1.0, 20, 0.0), &DVector::zeros(2)).unwrap();
        assert!(log.y.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn baseline_step_error() {
        let log = run_baseline(&sim_stable(), &Trajectory::constant(1.0, 200, 1.0), &DVector::zeros(2)).unwrap();
        let last = *log.y.values.last().unwrap();
        assert!((last - 1.0 - 9.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn baseline_does_not_track() {
        let y_d = test_trajectory(300);
        let log = run_baseline(&sim_stable(), &y_d, &DVector::zeros(2)).unwrap();
        assert!(rms_error(&log.y, &y_d, 2).unwrap() > 0.1);
    }

    #[test]
    fn state_space_oracle_tracks_exactly() {
        let sys = sim_stable();
        let oracle = StateSpaceOracle::new(&sys, 1).unwrap();
        let spec = FeatureSpec::new(FeatureMode::StateSpace, 1, 2).unwrap();
        let y_d = test_trajectory(300);
        let log = run_enhanced(&sys, &oracle, &spec, &y_d, &DVector::zeros(2)).unwrap();
        for t in 1..log.len() {
            assert!((log.y.values[t] - y_d.values[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn transfer_function_oracle_tracks_exactly() {
        let sys = sim_stable();
        let oracle = TransferFunctionOracle::new(ss_to_tf(&sys).unwrap());
        let spec = FeatureSpec::new(FeatureMode::TransferFunction, 1, 2).unwrap();
        let y_d = test_trajectory(300);
        let log = run_enhanced(&sys, &oracle, &spec, &y_d, &DVector::zeros(2)).unwrap();
        for t in 1..log.len() {
            assert!((log.y.values[t] - y_d.values[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn mismatched_model_rejected() {
        let sys = sim_stable();
        let oracle = StateSpaceOracle::new(&sys, 1).unwrap();
        let spec = FeatureSpec::new(FeatureMode::TransferFunction, 1, 2).unwrap();
        let err = run_enhanced(&sys, &oracle, &spec, &test_trajectory(10), &DVector::zeros(2));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn rms_contract() {
        let a = Trajectory::new(1.0, vec![1.0, 2.0, 3.0]);
        assert_eq!(rms_error(&a, &a, 0).unwrap(), 0.0);
        let b = a.shifted(0.5);
        assert!((rms_error(&b, &a, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(rms_error(&a, &Trajectory::new(1.0, vec![1.0]), 0).is_err());
        assert!(rms_error(&a, &a, 3).is_err());
    }

    #[test]
    fn oracle_comparison_report() {
        let sys = sim_stable();
        let oracle = StateSpaceOracle::new(&sys, 1).unwrap();
        let spec = FeatureSpec::new(FeatureMode::StateSpace, 1, 2).unwrap();
        let (report, _, _) =
            compare(&sys, &oracle, &spec, &test_trajectory(300), &DVector::zeros(2), 2).unwrap();
        assert!(!report.diverged);
        assert!(report.rms_enhanced.unwrap() < 1e-9);
        let expected = 100.0 * (1.0 - report.rms_enhanced.unwrap() / report.rms_baseline);
        assert_eq!(report.reduction_percent.unwrap(), expected);
        assert!(expected > 99.9);
        assert_eq!(first_exceedance(&[0.0, 2.0, 5e3], UNBOUNDED_OUTPUT), Some(2));
    }
}
