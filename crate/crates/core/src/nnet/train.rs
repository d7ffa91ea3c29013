//! Supervised fitting of [`FnnModel`] on standardised targets.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Dataset, FnnModel, Standardizer, TargetScaling};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    LevenbergMarquardt,
    Momentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub trainer: Trainer,
    /// LM steps, or epochs for the momentum trainer.
    pub max_iterations: usize,
    /// Stop once the standardised training loss drops below this.
    pub loss_tolerance: f64,
    pub rng_seed: u64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_max: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Fraction of rows held out (after a seeded shuffle) to report a
    /// validation loss. Zero trains on everything.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![20, 20],
            activation: Activation::Tanh,
            trainer: Trainer::LevenbergMarquardt,
            max_iterations: 1000,
            loss_tolerance: 1e-10,
            rng_seed: 0,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            lambda_max: 1e12,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            holdout_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossTolerance,
    MaxIterations,
    /// LM damping exceeded its ceiling without finding a descent step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FnnModel,
    /// Standardised training loss, starting with the initial value; one entry
    /// per accepted LM step or per epoch.
    pub loss_history: Vec<f64>,
    pub holdout_loss: Option<f64>,
    pub stop: StopReason,
}

/// Standardised residuals and loss `(1/N) sum ||r||^2`.
fn scaled_residuals(model: &FnnModel, data: &Dataset) -> Result<(DVector<f64>, f64)> {
    let m = model.output_dim();
    let std = &model.target_norm.std;
    let r = model.residuals(data)?;
    let r = DVector::from_iterator(r.len(), r.iter().enumerate().map(|(i, v)| v / std[i % m]));
    let loss = r.norm_squared() / data.len() as f64;
    if loss.is_finite() {
        Ok((r, loss))
    } else {
        Err(Error::TrainingDiverged)
    }
}

fn scaled_jacobian(model: &FnnModel, data: &Dataset) -> Result<DMatrix<f64>> {
    let m = model.output_dim();
    let mut j = model.jacobian(data)?;
    for (i, mut row) in j.row_iter_mut().enumerate() {
        row /= model.target_norm.std[i % m];
    }
    Ok(j)
}

fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {fraction} outside [0, 1)"
        )));
    }
    let held = (data.len() as f64 * fraction).floor() as usize;
    if held == 0 {
        return Ok((data.clone(), None));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_401d));
    let (hold, keep) = idx.split_at(held);
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    let mut hold = hold.to_vec();
    hold.sort_unstable();
    Ok((data.select_rows(&keep), Some(data.select_rows(&hold))))
}

/// Fits a fresh network to `data`. The result depends only on the data and
/// the configuration, including `rng_seed`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let (fit, holdout) = split(data, cfg.holdout_fraction, cfg.rng_seed)?;
    let mut sizes = vec![data.input_dim()];
    sizes.extend(&cfg.hidden_layers);
    sizes.push(data.output_dim());
    let mut model = FnnModel::new(&sizes, cfg.activation, cfg.rng_seed)?;
    model.set_normalization(Standardizer::fit(&fit.inputs), TargetScaling::fit(&fit.targets))?;

    let (loss_history, stop) = match cfg.trainer {
        Trainer::LevenbergMarquardt => levenberg_marquardt(&mut model, &fit, cfg)?,
        Trainer::Momentum => momentum(&mut model, &fit, cfg)?,
    };
    let holdout_loss = match holdout {
        Some(h) => Some(scaled_residuals(&model, &h)?.1),
        None => None,
    };
    Ok(TrainOutcome {
        model,
        loss_history,
        holdout_loss,
        stop,
    })
}

fn levenberg_marquardt(
    model: &mut FnnModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, StopReason)> {
    let mut params = DVector::from_vec(model.params());
    let (mut r, mut loss) = scaled_residuals(model, data)?;
    let mut history = vec![loss];
    let mut lambda = cfg.lambda_init;

    for _ in 0..cfg.max_iterations {
        if loss < cfg.loss_tolerance {
            return Ok((history, StopReason::LossTolerance));
        }
        let j = scaled_jacobian(model, data)?;
        let jtj = j.tr_mul(&j);
        let g = j.tr_mul(&r);
        loop {
            if lambda > cfg.lambda_max {
                model.set_params(params.as_slice())?;
                return Ok((history, StopReason::Stalled));
            }
            let mut h = jtj.clone();
            for k in 0..h.nrows() {
                h[(k, k)] += lambda;
            }
            let Some(chol) = h.cholesky() else {
                lambda *= cfg.lambda_up;
                continue;
            };
            let step = -chol.solve(&g);
            let trial = &params + &step;
            if trial.iter().any(|v| !v.is_finite()) {
                lambda *= cfg.lambda_up;
                continue;
            }
            model.set_params(trial.as_slice())?;
            match scaled_residuals(model, data) {
                Ok((r_new, loss_new)) if loss_new < loss => {
                    params = trial;
                    r = r_new;
                    loss = loss_new;
                    history.push(loss);
                    lambda = (lambda * cfg.lambda_down).max(f64::MIN_POSITIVE);
                    break;
                }
                _ => lambda *= cfg.lambda_up,
            }
        }
    }
    model.set_params(params.as_slice())?;
    let stop = if loss < cfg.loss_tolerance {
        StopReason::LossTolerance
    } else {
        StopReason::MaxIterations
    };
    Ok((history, stop))
}

fn momentum(
    model: &mut FnnModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, StopReason)> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(1));
    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut history = vec![scaled_residuals(model, data)?.1];
    let std = model.target_norm.std.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..cfg.max_iterations {
        if *history.last().unwrap() < cfg.loss_tolerance {
            return Ok((history, StopReason::LossTolerance));
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut sub = data.select_rows(batch);
            // gradient of the standardised loss equals the raw gradient of
            // targets and outputs both divided by the target scale
            for (k, s) in std.iter().enumerate() {
                sub.targets.column_mut(k).scale_mut(1.0 / s);
            }
            let grad = standardized_gradient(model, &sub, &std)?;
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
            model.set_params(&params)?;
        }
        history.push(scaled_residuals(model, data)?.1);
    }
    let stop = if *history.last().unwrap() < cfg.loss_tolerance {
        StopReason::LossTolerance
    } else {
        StopReason::MaxIterations
    };
    Ok((history, stop))
}

/// Gradient of the standardised loss on a batch whose targets have already
/// been divided by `std`.
fn standardized_gradient(model: &FnnModel, batch: &Dataset, std: &[f64]) -> Result<Vec<f64>> {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; model.param_count()];
    for i in 0..batch.len() {
        let trace = model.trace(&batch.input_row(i));
        let out = model.denormalize(trace.outputs.last().unwrap());
        let seed = DVector::from_iterator(
            out.len(),
            out.iter()
                .enumerate()
                .map(|(k, o)| 2.0 * (o / std[k] - batch.targets[(i, k)]) / (n * std[k])),
        );
        model.backprop(&trace, &seed, &mut grad);
    }
    if grad.iter().all(|g| g.is_finite()) {
        Ok(grad)
    } else {
        Err(Error::TrainingDiverged)
    }
}
