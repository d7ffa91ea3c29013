//! The experiment pipeline shared by every command: sinusoid family through
//! the baseline loop, training rows, network fit, and closed-loop evaluation.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tracker_core::features::{balanced_sample, build_dataset, sinusoid_family, FeatureSpec};
use tracker_core::nnet::{train, Dataset, FnnModel, TrainConfig, TrainOutcome};
use tracker_core::plant::{ControlAffine, RunLog, Trajectory};
use tracker_core::runner::{compare, run_baseline, EnhancedRun, ExperimentReport};
use tracker_core::sysid::step_steady_state_error;

use crate::config::ExperimentConfig;
use crate::systems::Plant;
use crate::CliError;

pub fn resolve_spec(cfg: &ExperimentConfig, plant: &Plant) -> Result<FeatureSpec, CliError> {
    let r = match cfg.features.relative_degree {
        Some(r) => r,
        None => plant.relative_degree()?,
    };
    let n = cfg.features.order.unwrap_or_else(|| plant.order());
    let mut spec = FeatureSpec::new(cfg.features.mode, r, n)
        .map_err(|e| CliError::Config(e.to_string()))?;
    spec.difference = cfg.features.difference;
    spec.difference_reference = cfg.features.difference_reference;
    Ok(spec)
}

/// Baseline runs of the whole sinusoid family, one dataset per trajectory.
pub fn source_datasets(
    cfg: &ExperimentConfig,
    plant: &Plant,
    spec: &FeatureSpec,
) -> Result<Vec<Dataset>, CliError> {
    let r = &cfg.recipe;
    let family = sinusoid_family(&r.amplitudes, &r.frequencies_hz, r.period, r.steps)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let x0 = DVector::zeros(plant.state_dim());
    family
        .par_iter()
        .map(|tr| {
            let log = run_baseline(plant, tr, &x0)?;
            Ok(build_dataset(&log, spec)?)
        })
        .collect()
}

pub fn training_set(
    cfg: &ExperimentConfig,
    plant: &Plant,
    spec: &FeatureSpec,
) -> Result<Dataset, CliError> {
    let sources = source_datasets(cfg, plant, spec)?;
    balanced_sample(&sources, cfg.recipe.per_source, cfg.seed)
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        rng_seed: cfg.seed,
        ..cfg.train.clone()
    }
}

pub fn fit(cfg: &ExperimentConfig, data: &Dataset) -> Result<TrainOutcome, CliError> {
    train(data, &train_config(cfg)).map_err(CliError::Training)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub baseline: f64,
    pub enhanced: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: ExperimentReport,
    pub y_d: Trajectory,
    pub baseline: RunLog,
    pub enhanced: EnhancedRun,
    /// Exact inverse-dynamics reference at every state the enhanced run
    /// visited.
    pub u_oracle: Vec<f64>,
    /// RMS of network reference minus oracle reference along the enhanced run.
    pub model_vs_oracle_rms: Option<f64>,
    pub steady_state: Option<SteadyState>,
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    plant: &Plant,
    spec: &FeatureSpec,
    model: &FnnModel,
) -> Result<Evaluation, CliError> {
    if model.input_dim() != spec.input_dim() {
        return Err(CliError::Config(format!(
            "model takes {} inputs but the feature spec produces {}",
            model.input_dim(),
            spec.input_dim()
        )));
    }
    let y_d = cfg.test.trajectory.build(cfg.recipe.period, cfg.test.steps);
    let skip = cfg.test.skip.unwrap_or(spec.n).min(y_d.len().saturating_sub(1));
    let x0 = DVector::zeros(plant.state_dim());
    let (report, baseline, enhanced) = compare(plant, model, spec, &y_d, &x0, skip)?;

    let oracle = plant.oracle(spec.r)?;
    let u_oracle = enhanced
        .log
        .x
        .iter()
        .enumerate()
        .map(|(t, x)| oracle.reference(x, y_d.at_or_last(t + spec.r)))
        .collect::<tracker_core::Result<Vec<f64>>>()?;
    let model_vs_oracle_rms = (!u_oracle.is_empty()).then(|| {
        let sq: f64 = enhanced
            .log
            .u
            .values
            .iter()
            .zip(&u_oracle)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        (sq / u_oracle.len() as f64).sqrt()
    });

    let steady_state = if cfg.test.trajectory.is_step() && enhanced.diverged_at.is_none() {
        Some(SteadyState {
            baseline: step_steady_state_error(&baseline, cfg.test.tail_fraction)?,
            enhanced: step_steady_state_error(&enhanced.log, cfg.test.tail_fraction)?,
        })
    } else {
        None
    };
    Ok(Evaluation {
        report,
        y_d,
        baseline,
        enhanced,
        u_oracle,
        model_vs_oracle_rms,
        steady_state,
    })
}

/// Training frequencies that alias at the recipe's sample period.
pub fn aliasing_notes(cfg: &ExperimentConfig) -> Vec<String> {
    let period = cfg.recipe.period;
    cfg.recipe
        .frequencies_hz
        .iter()
        .filter_map(|&f| {
            let cycles = f * period;
            if cycles > 0.0 && (cycles - cycles.round()).abs() < 1e-9 {
                Some(format!(
                    "{f} Hz at period {period} s completes a whole number of cycles per sample; \
                     its sinusoids sample to zero and contribute only constant-zero rows"
                ))
            } else if cycles >= 0.5 {
                Some(format!(
                    "{f} Hz is above the Nyquist rate for period {period} s and aliases to a lower frequency"
                ))
            } else {
                None
            }
        })
        .collect()
}
