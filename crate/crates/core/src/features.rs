//! Training-row construction for inverse-dynamics networks.
//!
//! Two input layouts are supported. The state-space layout feeds the current
//! state and the output `r` steps ahead. The transfer-function layout feeds an
//! output window `y(t+r) .. y(t-n+r)` together with the input history
//! `u(t-1) .. u(t-n+r)`. In both cases the target is `u(t)`.
//!
//! During training the achieved output stands in for the desired one, since
//! the recorded run is an exact input/output pairing of the plant.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nnet::Dataset;
use crate::plant::{RunLog, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    StateSpace,
    TransferFunction,
}

/// Subtraction point for difference features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceReference {
    DesiredNow,
    ActualNow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
    /// Relative degree.
    pub r: usize,
    /// Plant order (state dimension in state-space mode).
    pub n: usize,
    pub difference: bool,
    pub difference_reference: DifferenceReference,
}

impl FeatureSpec {
    pub fn new(mode: FeatureMode, r: usize, n: usize) -> Result<Self> {
        let spec = Self {
            mode,
            r,
            n,
            difference: false,
            difference_reference: DifferenceReference::ActualNow,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_difference(mut self, reference: DifferenceReference) -> Self {
        self.difference = true;
        self.difference_reference = reference;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.r == 0 || self.r > self.n {
            return Err(Error::InvalidArgument(format!(
                "feature spec needs 1 <= r <= n, got r={} n={}",
                self.r, self.n
            )));
        }
        Ok(())
    }

    /// `n+1` or `2n-r+1`.
    pub fn input_dim(&self) -> usize {
        match self.mode {
            FeatureMode::StateSpace => self.n + 1,
            FeatureMode::TransferFunction => 2 * self.n - self.r + 1,
        }
    }

    /// Number of past inputs in the transfer-function layout.
    fn u_history(&self) -> usize {
        match self.mode {
            FeatureMode::StateSpace => 0,
            FeatureMode::TransferFunction => self.n - self.r,
        }
    }

    /// Earliest time index with a complete window.
    fn first_row(&self) -> usize {
        match self.mode {
            FeatureMode::StateSpace => 0,
            FeatureMode::TransferFunction => self.n - self.r,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let prefix = if self.difference { "d_" } else { "" };
        let offset = |k: isize| match k {
            0 => "t".to_string(),
            k if k > 0 => format!("t+{k}"),
            k => format!("t{k}"),
        };
        let r = self.r as isize;
        match self.mode {
            FeatureMode::StateSpace => (0..self.n)
                .map(|i| format!("{prefix}x{i}"))
                .chain(std::iter::once(format!("{prefix}y_{}", offset(r))))
                .collect(),
            FeatureMode::TransferFunction => (0..=self.n as isize)
                .map(|k| format!("{prefix}y_{}", offset(r - k)))
                .chain((1..=self.u_history() as isize).map(|k| format!("{prefix}u_{}", offset(-k))))
                .collect(),
        }
    }

    /// Undifferenced feature row at time `t`.
    ///
    /// `output(k)` returns the output (achieved or desired) at signed time
    /// `t + k`; `input(k)` the applied input at `t + k` for `k < 0`.
    pub fn raw_row(
        &self,
        state: &[f64],
        output: impl Fn(isize) -> f64,
        input: impl Fn(isize) -> f64,
    ) -> Result<Vec<f64>> {
        let r = self.r as isize;
        match self.mode {
            FeatureMode::StateSpace => {
                check_dim("state", self.n, state.len())?;
                let mut row = state.to_vec();
                row.push(output(r));
                Ok(row)
            }
            FeatureMode::TransferFunction => Ok((0..=self.n as isize)
                .map(|k| output(r - k))
                .chain((1..=self.u_history() as isize).map(|k| input(-k)))
                .collect()),
        }
    }

    /// Subtracts `reference` from every position-like feature in place.
    ///
    /// In state-space mode only the first state component is differenced;
    /// the remaining components are rate-like and vanish at rest.
    pub fn difference_row(&self, row: &mut [f64], reference: f64) {
        match self.mode {
            FeatureMode::StateSpace => {
                row[0] -= reference;
                row[self.n] -= reference;
            }
            FeatureMode::TransferFunction => row.iter_mut().for_each(|v| *v -= reference),
        }
    }
}

/// Builds one training row per time index that has a full window.
pub fn build_dataset(log: &RunLog, spec: &FeatureSpec) -> Result<Dataset> {
    spec.validate()?;
    let needed = spec.n + spec.r + 1;
    if log.len() < needed {
        return Err(Error::LogTooShort {
            needed,
            found: log.len(),
        });
    }
    if spec.mode == FeatureMode::StateSpace {
        check_dim("log state", spec.n, log.state_dim())?;
    }
    let last = log.len() - spec.r;
    let y = &log.y.values;
    let u = &log.u.values;
    let mut rows = Vec::with_capacity(last - spec.first_row());
    let mut targets = Vec::with_capacity(rows.capacity());
    for t in spec.first_row()..last {
        let at = |k: isize| (t as isize + k) as usize;
        let mut row = spec.raw_row(
            log.x.get(t).map_or(&[][..], |x| x.as_slice()),
            |k| y[at(k)],
            |k| u[at(k)],
        )?;
        let mut target = u[t];
        if spec.difference {
            // in training the achieved output plays both reference roles
            spec.difference_row(&mut row, y[t]);
            target -= y[t];
        }
        rows.push(row);
        targets.push(target);
    }
    Dataset::from_rows(&rows, &targets, spec.feature_names())
}

/// Difference transform of already-built undifferenced rows; `references`
/// holds the subtraction point for each row.
pub fn apply_difference(data: &Dataset, references: &[f64], spec: &FeatureSpec) -> Result<Dataset> {
    check_dim("references", data.len(), references.len())?;
    check_dim("feature width", spec.input_dim(), data.input_dim())?;
    let mut inputs = data.inputs.clone();
    let mut targets = data.targets.clone();
    let mut names = data.feature_names.clone();
    let mut spec = *spec;
    spec.difference = true;
    for (i, &reference) in references.iter().enumerate() {
        let mut row: Vec<f64> = inputs.row(i).iter().copied().collect();
        spec.difference_row(&mut row, reference);
        inputs.row_mut(i).copy_from_slice(&row);
        targets.row_mut(i).add_scalar_mut(-reference);
    }
    if !names.iter().all(|n| n.starts_with("d_")) {
        names = spec.feature_names();
    }
    Dataset::new(inputs, targets, names)
}

/// `a * sin(2 pi f T t)` for every amplitude/frequency pair, amplitude-major.
pub fn sinusoid_family(
    amplitudes: &[f64],
    frequencies_hz: &[f64],
    period: f64,
    steps: usize,
) -> Result<Vec<Trajectory>> {
    if amplitudes.is_empty() || frequencies_hz.is_empty() {
        return Err(Error::InvalidArgument("empty amplitude or frequency set".into()));
    }
    Ok(amplitudes
        .iter()
        .flat_map(|&a| {
            frequencies_hz.iter().map(move |&f| {
                Trajectory::from_fn(period, steps, |t| a * (2.0 * PI * f * period * t as f64).sin())
            })
        })
        .collect())
}

/// Draws `per_source` rows uniformly without replacement from every source.
pub fn balanced_sample(datasets: &[Dataset], per_source: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(datasets.len());
    for (index, source) in datasets.iter().enumerate() {
        if source.len() < per_source {
            return Err(Error::SourceTooSmall {
                index,
                needed: per_source,
                found: source.len(),
            });
        }
        let rows = sample(&mut rng, source.len(), per_source).into_vec();
        picked.push(source.select_rows(&rows));
    }
    if picked.is_empty() {
        return Err(Error::InvalidArgument("no datasets to sample".into()));
    }
    Dataset::concat(&picked)
}

/// Inputs as row vectors, mostly for tests and reporting.
pub fn rows_of(data: &Dataset) -> Vec<Vec<f64>> {
    (0..data.len()).map(|i| data.input_row(i)).collect()
}
