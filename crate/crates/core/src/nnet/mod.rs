//! Fully connected feedforward networks with exact reverse-mode derivatives.
//!
//! Parameters are flattened layer by layer, each layer contributing its weight
//! matrix in row-major order followed by its bias vector. Inputs and targets
//! are z-scored with statistics fixed at training time; those statistics are
//! part of the model and are not trainable.

mod train;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use train::{train, StopReason, TrainConfig, TrainOutcome, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    /// Derivative expressed through the activation output `h`.
    fn derivative(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// `out x in`
    weights: DMatrix<f64>,
    bias: DVector<f64>,
    activation: Activation,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Training rows. Row `i` of `inputs` maps to row `i` of `targets`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        check_dim("target rows", inputs.nrows(), targets.nrows())?;
        check_dim("feature names", inputs.ncols(), feature_names.len())?;
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self {
            inputs,
            targets,
            feature_names,
        })
    }

    /// Single-target dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64], feature_names: Vec<String>) -> Result<Self> {
        let d = feature_names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                what: "dataset row",
                expected: d,
                found: bad.len(),
            });
        }
        let inputs = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let targets = DMatrix::from_column_slice(targets.len(), 1, targets);
        Self::new(inputs, targets, feature_names)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn input_row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(rows),
            targets: self.targets.select_rows(rows),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Row-wise concatenation; all parts must share the feature layout.
    pub fn concat(parts: &[Dataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no datasets to concatenate".into()))?;
        let total: usize = parts.iter().map(Dataset::len).sum();
        let d = first.input_dim();
        let m = first.output_dim();
        let mut inputs = DMatrix::zeros(total, d);
        let mut targets = DMatrix::zeros(total, m);
        let mut offset = 0;
        for part in parts {
            if part.feature_names != first.feature_names || part.output_dim() != m {
                return Err(Error::InvalidArgument("datasets have different layouts".into()));
            }
            inputs.rows_mut(offset, part.len()).copy_from(&part.inputs);
            targets.rows_mut(offset, part.len()).copy_from(&part.targets);
            offset += part.len();
        }
        Self::new(inputs, targets, first.feature_names.clone())
    }

    /// CSV with the feature names as header and the target as final column
    /// `target_u`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = self.feature_names.clone();
        if self.output_dim() == 1 {
            header.push("target_u".into());
        } else {
            header.extend((0..self.output_dim()).map(|k| format!("target_u{k}")));
        }
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .inputs
                .row(i)
                .iter()
                .chain(self.targets.row(i).iter())
                .map(|&v| crate::plant::fmt_full(v))
                .collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-feature affine normalisation `z = (v - mean) * scale`.
///
/// Features that are constant over the training set get `scale = 0` and are
/// therefore ignored by the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    fn column_stats(data: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = data.nrows() as f64;
        data.column_iter()
            .map(|col| {
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            })
            .unzip()
    }

    pub fn fit(data: &DMatrix<f64>) -> Self {
        let (mean, std) = Self::column_stats(data);
        let scale = std
            .iter()
            .zip(&mean)
            .map(|(&s, &m)| if s > 1e-12 * m.abs().max(1.0) { 1.0 / s } else { 0.0 })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, v: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            v.iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(x, (m, s))| (x - m) * s),
        )
    }
}

/// Output de-normalisation `v = z * std + mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TargetScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(data: &DMatrix<f64>) -> Self {
        let (mean, std) = Standardizer::column_stats(data);
        let std = std
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| if s > 1e-12 * m.abs().max(1.0) { s } else { 1.0 })
            .collect();
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    layers: Vec<Layer>,
    input_norm: Standardizer,
    target_norm: TargetScaling,
}

/// Cached per-layer outputs of one forward pass, `outputs[0]` being the
/// normalised input.
struct Trace {
    outputs: Vec<DVector<f64>>,
}

impl FnnModel {
    /// Network with Glorot-uniform weights, zero biases, `hidden` activations
    /// on every hidden layer and a linear output layer.
    pub fn new(layer_sizes: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "need at least input and output sizes, all positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = layer_sizes.len() - 2;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-limit..=limit)),
                    bias: DVector::zeros(fan_out),
                    activation: if l == last { Activation::Linear } else { hidden },
                }
            })
            .collect();
        Ok(Self {
            layers,
            input_norm: Standardizer::identity(layer_sizes[0]),
            target_norm: TargetScaling::identity(*layer_sizes.last().unwrap()),
        })
    }

    /// Builds a model from explicit layers, `(weights, bias, activation)`.
    pub fn from_layers(layers: Vec<(DMatrix<f64>, DVector<f64>, Activation)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim("layer input", pair[0].0.nrows(), pair[1].0.ncols())?;
        }
        for (w, b, _) in &layers {
            check_dim("bias", w.nrows(), b.len())?;
        }
        if layers.last().unwrap().2 != Activation::Linear {
            return Err(Error::InvalidModel("output layer must be linear".into()));
        }
        let input_dim = layers[0].0.ncols();
        let output_dim = layers.last().unwrap().0.nrows();
        Ok(Self {
            layers: layers
                .into_iter()
                .map(|(weights, bias, activation)| Layer {
                    weights,
                    bias,
                    activation,
                })
                .collect(),
            input_norm: Standardizer::identity(input_dim),
            target_norm: TargetScaling::identity(output_dim),
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].weights.ncols())
            .chain(self.layers.iter().map(|l| l.weights.nrows()))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn input_normalization(&self) -> &Standardizer {
        &self.input_norm
    }

    pub fn target_scaling(&self) -> &TargetScaling {
        &self.target_norm
    }

    pub fn set_normalization(&mut self, input: Standardizer, target: TargetScaling) -> Result<()> {
        check_dim("input normalisation", self.input_dim(), input.mean.len())?;
        check_dim("input normalisation", self.input_dim(), input.scale.len())?;
        check_dim("target scaling", self.output_dim(), target.mean.len())?;
        check_dim("target scaling", self.output_dim(), target.std.len())?;
        self.input_norm = input;
        self.target_norm = target;
        Ok(())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for i in 0..layer.weights.nrows() {
                p.extend(layer.weights.row(i).iter());
            }
            p.extend(layer.bias.iter());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.param_count(), p.len())?;
        let mut k = 0;
        for layer in &mut self.layers {
            let (rows, cols) = layer.weights.shape();
            for i in 0..rows {
                for j in 0..cols {
                    layer.weights[(i, j)] = p[k];
                    k += 1;
                }
            }
            for i in 0..rows {
                layer.bias[i] = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(self.input_norm.apply(input));
        for layer in &self.layers {
            let mut a = &layer.weights * outputs.last().unwrap() + &layer.bias;
            a.apply(|v| *v = layer.activation.apply(*v));
            outputs.push(a);
        }
        Trace { outputs }
    }

    fn denormalize(&self, z: &DVector<f64>) -> Vec<f64> {
        z.iter()
            .zip(self.target_norm.mean.iter().zip(&self.target_norm.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), input.len())?;
        Ok(self.denormalize(self.trace(input).outputs.last().unwrap()))
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        check_dim("dataset inputs", self.input_dim(), data.input_dim())?;
        check_dim("dataset targets", self.output_dim(), data.output_dim())
    }

    /// Back-propagates `seed` (gradient w.r.t. the raw output) through a
    /// cached trace and adds `d(seed . output)/d(params)` into `grad`.
    fn backprop(&self, trace: &Trace, seed: &DVector<f64>, grad: &mut [f64]) {
        // dL/d(normalised output)
        let mut delta = DVector::from_iterator(
            seed.len(),
            seed.iter().zip(&self.target_norm.std).map(|(g, s)| g * s),
        );
        let mut offset = self.param_count();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace.outputs[l + 1];
            for (d, h) in delta.iter_mut().zip(out.iter()) {
                *d *= layer.activation.derivative(*h);
            }
            let input = &trace.outputs[l];
            let (rows, cols) = layer.weights.shape();
            offset -= layer.param_count();
            for i in 0..rows {
                let di = delta[i];
                if di != 0.0 {
                    let row = &mut grad[offset + i * cols..offset + (i + 1) * cols];
                    for (g, x) in row.iter_mut().zip(input.iter()) {
                        *g += di * x;
                    }
                }
                grad[offset + rows * cols + i] += di;
            }
            if l > 0 {
                delta = layer.weights.tr_mul(&delta);
            }
        }
    }

    /// Raw residuals `forward(x_i) - t_i`, sample-major.
    pub fn residuals(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_dataset(data)?;
        let m = self.output_dim();
        let mut r = Vec::with_capacity(data.len() * m);
        for i in 0..data.len() {
            let out = self.forward(&data.input_row(i))?;
            r.extend(out.iter().enumerate().map(|(k, o)| o - data.targets[(i, k)]));
        }
        Ok(r)
    }

    /// `(1/N) sum_i ||forward(x_i) - t_i||^2`.
    pub fn mse(&self, data: &Dataset) -> Result<f64> {
        let r = self.residuals(data)?;
        Ok(r.iter().map(|v| v * v).sum::<f64>() / data.len() as f64)
    }

    /// Exact gradient of [`FnnModel::mse`] with respect to the flattened
    /// parameters.
    pub fn gradient(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_dataset(data)?;
        let n = data.len() as f64;
        let mut grad = vec![0.0; self.param_count()];
        for i in 0..data.len() {
            let trace = self.trace(&data.input_row(i));
            let out = self.denormalize(trace.outputs.last().unwrap());
            let seed = DVector::from_iterator(
                out.len(),
                out.iter()
                    .enumerate()
                    .map(|(k, o)| 2.0 * (o - data.targets[(i, k)]) / n),
            );
            self.backprop(&trace, &seed, &mut grad);
        }
        Ok(grad)
    }

    /// Residual Jacobian: row `i * m + k` is the derivative of output `k` on
    /// sample `i` with respect to the flattened parameters. Rows are
    /// independent, so they are filled in parallel without affecting values.
    pub fn jacobian(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        self.check_dataset(data)?;
        let m = self.output_dim();
        let p = self.param_count();
        let mut rows = vec![0.0; data.len() * m * p];
        rows.par_chunks_mut(m * p)
            .enumerate()
            .for_each(|(i, block)| {
                let trace = self.trace(&data.input_row(i));
                for k in 0..m {
                    let mut seed = DVector::zeros(m);
                    seed[k] = 1.0;
                    self.backprop(&trace, &seed, &mut block[k * p..(k + 1) * p]);
                }
            });
        Ok(DMatrix::from_row_slice(data.len() * m, p, &rows))
    }

    /// Upper bound on the input-to-output Lipschitz constant (Euclidean
    /// norms): product of layer spectral norms times normalisation gains.
    pub fn lipschitz_bound(&self) -> f64 {
        let in_gain = self.input_norm.scale.iter().fold(0.0_f64, |a, s| a.max(s.abs()));
        let out_gain = self.target_norm.std.iter().fold(0.0_f64, |a, s| a.max(s.abs()));
        let weights: f64 = self
            .layers
            .iter()
            .map(|l| l.weights.clone().svd(false, false).singular_values.max())
            .product();
        in_gain * weights * out_gain
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(text)?.try_into()
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    target_mean: Vec<f64>,
    target_std: Vec<f64>,
    /// `weights[l][i][j]` connects input `j` to unit `i` of layer `l`.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

impl From<&FnnModel> for ModelFile {
    fn from(m: &FnnModel) -> Self {
        Self {
            layer_sizes: m.layer_sizes(),
            activations: m.activations(),
            input_mean: m.input_norm.mean.clone(),
            input_scale: m.input_norm.scale.clone(),
            target_mean: m.target_norm.mean.clone(),
            target_std: m.target_norm.std.clone(),
            weights: m
                .layers
                .iter()
                .map(|l| {
                    l.weights
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect()
                })
                .collect(),
            biases: m.layers.iter().map(|l| l.bias.iter().copied().collect()).collect(),
        }
    }
}

impl TryFrom<ModelFile> for FnnModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        check_dim("activations", f.layer_sizes.len().saturating_sub(1), f.activations.len())?;
        check_dim("weight layers", f.activations.len(), f.weights.len())?;
        check_dim("bias layers", f.activations.len(), f.biases.len())?;
        let mut layers = Vec::with_capacity(f.weights.len());
        for (l, ((w, b), act)) in f.weights.iter().zip(&f.biases).zip(&f.activations).enumerate() {
            let (rows, cols) = (f.layer_sizes[l + 1], f.layer_sizes[l]);
            check_dim("weight rows", rows, w.len())?;
            if let Some(bad) = w.iter().find(|r| r.len() != cols) {
                return Err(Error::Dimension {
                    what: "weight columns",
                    expected: cols,
                    found: bad.len(),
                });
            }
            layers.push((
                DMatrix::from_fn(rows, cols, |i, j| w[i][j]),
                DVector::from_column_slice(b),
                *act,
            ));
        }
        let mut model = FnnModel::from_layers(layers)?;
        model.set_normalization(
            Standardizer {
                mean: f.input_mean,
                scale: f.input_scale,
            },
            TargetScaling {
                mean: f.target_mean,
                std: f.target_std,
            },
        )?;
        Ok(model)
    }
}
