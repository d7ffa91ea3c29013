//! Command implementations. Each writes its artifacts under an output
//! directory and returns the report it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use tracker_core::features::{build_dataset, FeatureMode, FeatureSpec};
use tracker_core::nnet::{FnnModel, StopReason};
use tracker_core::plant::{ControlAffine, Trajectory};
use tracker_core::runner::{run_baseline, ExperimentReport};
use tracker_core::sysid::SysIdReport;

use crate::config::ExperimentConfig;
use crate::pipeline::{self, Evaluation, SteadyState};
use crate::systems::SystemKind;
use crate::CliError;

/// Tolerance on `|K0 - 1|` for the difference-learning verdict.
pub const UNITY_GAIN_TOL: f64 = 1e-6;

fn prepare(dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub sampling: u64,
    pub initialization: u64,
}

impl Seeds {
    fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            sampling: cfg.seed,
            initialization: pipeline::train_config(cfg).rng_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifyReport {
    pub system: SystemKind,
    pub identification: SysIdReport,
    pub difference_learning_eligible: bool,
    pub warnings: Vec<String>,
}

fn warnings_for(id: &SysIdReport) -> Vec<String> {
    let mut w = Vec::new();
    if !id.minimum_phase {
        w.push(
            "unstable zero dynamics: the exact inverse is unstable and a pre-cascaded \
             reference generator is not expected to be effective"
                .to_string(),
        );
    }
    if id.near_unit_circle {
        w.push("a zero lies on the unit circle within tolerance".to_string());
    }
    if !id.difference_learning_eligible(UNITY_GAIN_TOL) {
        w.push(format!(
            "DC gain {:.6} is not one: difference-mode training cannot remove the steady-state offset",
            id.dc_gain
        ));
    }
    w
}

pub fn identify(cfg: &ExperimentConfig, out: &Path) -> Result<IdentifyReport, CliError> {
    let dir = prepare(out)?;
    let plant = cfg.plant()?;
    let identification = plant.identify(cfg.recipe.period, cfg.recipe.steps)?;
    let report = IdentifyReport {
        system: cfg.system,
        difference_learning_eligible: identification.difference_learning_eligible(UNITY_GAIN_TOL),
        warnings: warnings_for(&identification),
        identification,
    };
    write_json(&dir.join("identify.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub spec: FeatureSpec,
    pub feature_names: Vec<String>,
    pub rows: usize,
    pub parameters: usize,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub holdout_loss: Option<f64>,
    pub stop: StopReason,
    pub elapsed_seconds: f64,
    pub notes: Vec<String>,
}

/// Builds the training set, fits the network and writes `dataset.csv`,
/// `model.json`, `loss_history.csv` and `train_report.json`. The dataset is
/// written before fitting so it survives a training failure.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<(TrainReport, FnnModel), CliError> {
    let dir = prepare(out)?;
    let plant = cfg.plant()?;
    let spec = pipeline::resolve_spec(cfg, &plant)?;
    let data = pipeline::training_set(cfg, &plant, &spec)?;
    data.write_csv(fs::File::create(dir.join("dataset.csv"))?)?;

    let started = Instant::now();
    let outcome = pipeline::fit(cfg, &data)?;
    let elapsed_seconds = started.elapsed().as_secs_f64();

    outcome.model.save(fs::File::create(dir.join("model.json"))?)?;
    let mut history = String::from("iteration,loss\n");
    for (i, loss) in outcome.loss_history.iter().enumerate() {
        writeln!(history, "{i},{loss:e}").unwrap();
    }
    fs::write(dir.join("loss_history.csv"), history)?;

    let report = TrainReport {
        config: cfg.clone(),
        seeds: Seeds::of(cfg),
        spec,
        feature_names: data.feature_names.clone(),
        rows: data.len(),
        parameters: outcome.model.param_count(),
        iterations: outcome.loss_history.len() - 1,
        initial_loss: outcome.loss_history[0],
        final_loss: *outcome.loss_history.last().unwrap(),
        holdout_loss: outcome.holdout_loss,
        stop: outcome.stop,
        elapsed_seconds,
        notes: pipeline::aliasing_notes(cfg),
    };
    write_json(&dir.join("train_report.json"), &report)?;
    Ok((report, outcome.model))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub spec: FeatureSpec,
    pub experiment: ExperimentReport,
    pub model_vs_oracle_rms: Option<f64>,
    pub steady_state_error: Option<SteadyState>,
    pub warnings: Vec<String>,
}

/// Runs baseline and enhanced loops on the test trajectory and writes
/// `report.json`, `trace.csv` and `plot.gp`. Divergence is reported in the
/// report, not as an error.
pub fn evaluate_model(
    cfg: &ExperimentConfig,
    model: &FnnModel,
    out: &Path,
) -> Result<(EvaluateReport, Evaluation), CliError> {
    let dir = prepare(out)?;
    let plant = cfg.plant()?;
    let spec = pipeline::resolve_spec(cfg, &plant)?;
    let eval = pipeline::evaluate(cfg, &plant, &spec, model)?;
    let identification = plant.identify(cfg.recipe.period, cfg.recipe.steps)?;
    let report = EvaluateReport {
        config: cfg.clone(),
        seeds: Seeds::of(cfg),
        spec,
        experiment: eval.report.clone(),
        model_vs_oracle_rms: eval.model_vs_oracle_rms,
        steady_state_error: eval.steady_state,
        warnings: warnings_for(&identification),
    };
    write_json(&dir.join("report.json"), &report)?;
    fs::write(dir.join("trace.csv"), trace_csv(&eval))?;
    fs::write(dir.join("plot.gp"), PLOT_SCRIPT)?;
    Ok((report, eval))
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    model_path: &Path,
    out: &Path,
) -> Result<EvaluateReport, CliError> {
    let file = fs::File::open(model_path).map_err(|e| {
        CliError::Config(format!("cannot open model {}: {e}", model_path.display()))
    })?;
    let model = FnnModel::load(file).map_err(|e| CliError::Config(format!("bad model file: {e}")))?;
    Ok(evaluate_model(cfg, &model, out)?.0)
}

fn trace_csv(eval: &Evaluation) -> String {
    let mut s = String::from("t,y_d,u_dnn,u_oracle,y_baseline,y_enhanced\n");
    let cell = |v: Option<&f64>| v.map_or(String::new(), |v| v.to_string());
    for t in 0..eval.y_d.len() {
        writeln!(
            s,
            "{t},{},{},{},{},{}",
            eval.y_d.values[t],
            cell(eval.enhanced.log.u.values.get(t)),
            cell(eval.u_oracle.get(t)),
            cell(eval.baseline.y.values.get(t)),
            cell(eval.enhanced.log.y.values.get(t)),
        )
        .unwrap();
    }
    s
}

const PLOT_SCRIPT: &str = "\
set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 900,700
set output 'trace.png'
set multiplot layout 2,1
set title 'outputs'
plot 'trace.csv' using 1:2 with lines, '' using 1:5 with lines, '' using 1:6 with lines
set title 'references'
plot 'trace.csv' using 1:3 with lines, '' using 1:4 with lines dashtype 2
unset multiplot
";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRun {
    pub train: TrainReport,
    pub evaluation: EvaluateReport,
}

/// Train then evaluate one configuration into `out`.
pub fn train_and_evaluate(cfg: &ExperimentConfig, out: &Path) -> Result<StudyRun, CliError> {
    let (train, model) = train(cfg, out)?;
    let (evaluation, _) = evaluate_model(cfg, &model, out)?;
    Ok(StudyRun { train, evaluation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Study {
    Sim,
    DiffLearning,
    FeatureDim,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSummary {
    pub stable: StudyRun,
    pub unstable: StudyRun,
}

pub fn reproduce_sim(seed: u64, out: &Path) -> Result<SimSummary, CliError> {
    let run = |kind: SystemKind| {
        let mut cfg = ExperimentConfig::defaults_for(kind);
        cfg.seed = seed;
        train_and_evaluate(&cfg, &out.join(kind.name()))
    };
    let summary = SimSummary {
        stable: run(SystemKind::SimStable)?,
        unstable: run(SystemKind::SimUnstable)?,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffLearningSummary {
    pub unity_gain: StudyRun,
    pub scaled_gain: StudyRun,
    pub unity_offset: f64,
    pub scaled_offset: f64,
}

pub fn reproduce_diff_learning(seed: u64, out: &Path) -> Result<DiffLearningSummary, CliError> {
    let run = |kind: SystemKind| {
        let mut cfg = ExperimentConfig::difference_study(kind);
        cfg.seed = seed;
        train_and_evaluate(&cfg, &out.join(kind.name()))
    };
    let unity_gain = run(SystemKind::Pendulum)?;
    let scaled_gain = run(SystemKind::PendulumScaledGain)?;
    let offset = |r: &StudyRun| {
        r.evaluation
            .steady_state_error
            .map_or(f64::INFINITY, |s| s.enhanced)
    };
    let summary = DiffLearningSummary {
        unity_offset: offset(&unity_gain),
        scaled_offset: offset(&scaled_gain),
        unity_gain,
        scaled_gain,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWidths {
    pub system: SystemKind,
    pub n: usize,
    pub r: usize,
    pub state_space_width: usize,
    pub transfer_function_width: usize,
    /// Widths of datasets actually built from a baseline run.
    pub built_state_space: usize,
    pub built_transfer_function: usize,
}

pub fn reproduce_feature_dim(out: &Path) -> Result<Vec<FeatureWidths>, CliError> {
    prepare(out)?;
    let mut rows = Vec::new();
    for kind in SystemKind::SHIPPED {
        let cfg = ExperimentConfig::defaults_for(kind);
        let plant = cfg.plant()?;
        let r = plant.relative_degree()?;
        let n = plant.order();
        let ss = FeatureSpec::new(FeatureMode::StateSpace, r, n)?;
        let tf = FeatureSpec::new(FeatureMode::TransferFunction, r, n)?;
        let probe = Trajectory::from_fn(cfg.recipe.period, 50, |t| (0.2 * t as f64).sin());
        let log = run_baseline(&plant, &probe, &nalgebra::DVector::zeros(plant.state_dim()))?;
        rows.push(FeatureWidths {
            system: kind,
            n,
            r,
            state_space_width: ss.input_dim(),
            transfer_function_width: tf.input_dim(),
            built_state_space: build_dataset(&log, &ss)?.input_dim(),
            built_transfer_function: build_dataset(&log, &tf)?.input_dim(),
        });
    }
    write_json(&out.join("summary.json"), &rows)?;
    Ok(rows)
}
