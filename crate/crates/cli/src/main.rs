use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tracker_cli::commands::{self, Study};
use tracker_cli::config::ExperimentConfig;
use tracker_cli::systems::SystemKind;
use tracker_cli::CliError;

#[derive(Parser)]
#[command(name = "tracker", version, about = "Learned inverse-dynamics reference generation for tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration; unspecified keys use the system defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for row sampling and network initialisation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Plant to use, overriding the configuration file.
    #[arg(long, global = true)]
    system: Option<SystemKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Relative degree, DC gain, zeros and verdicts for the configured plant.
    Identify,
    /// Generate the training family, build rows and fit a network.
    Train,
    /// Compare baseline and enhanced tracking on the test trajectory.
    Evaluate {
        /// Model file; defaults to `<out>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run a canned study.
    Reproduce {
        #[arg(value_enum)]
        study: Study,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("TRACKER_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| CliError::Config(format!("TRACKER_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let load = || ExperimentConfig::load(cli.config.as_deref(), cli.system, cli.seed);
    match cli.command {
        Command::Identify => {
            let report = commands::identify(&load()?, &cli.out)?;
            let id = &report.identification;
            println!("system            {}", report.system.name());
            println!("relative degree   {}", id.relative_degree);
            println!("DC gain           {:.6}", id.dc_gain);
            println!("minimum phase     {}", id.minimum_phase);
            println!("step ss error     {:.6}", id.step_steady_state_error);
            println!("difference-ready  {}", report.difference_learning_eligible);
            for w in &report.warnings {
                println!("warning: {w}");
            }
        }
        Command::Train => {
            let (report, _) = commands::train(&load()?, &cli.out)?;
            println!(
                "{} rows, {} parameters, {} iterations, loss {:.3e} -> {:.3e} ({:?}, {:.1} s)",
                report.rows,
                report.parameters,
                report.iterations,
                report.initial_loss,
                report.final_loss,
                report.stop,
                report.elapsed_seconds
            );
            for note in &report.notes {
                println!("note: {note}");
            }
        }
        Command::Evaluate { model } => {
            let model = model.unwrap_or_else(|| cli.out.join("model.json"));
            let report = commands::evaluate(&load()?, &model, &cli.out)?;
            print_evaluation(&report);
        }
        Command::Reproduce { study } => {
            let seed = cli.seed.unwrap_or(0);
            match study {
                Study::Sim => {
                    let s = commands::reproduce_sim(seed, &cli.out.join("sim"))?;
                    println!("[sim_stable]");
                    print_evaluation(&s.stable.evaluation);
                    println!("[sim_unstable]");
                    print_evaluation(&s.unstable.evaluation);
                    for note in &s.stable.train.notes {
                        println!("note: {note}");
                    }
                }
                Study::DiffLearning => {
                    let s = commands::reproduce_diff_learning(seed, &cli.out.join("diff_learning"))?;
                    println!("unity-gain steady-state offset   {:.4}", s.unity_offset);
                    println!("scaled-gain steady-state offset  {:.4}", s.scaled_offset);
                }
                Study::FeatureDim => {
                    let rows = commands::reproduce_feature_dim(&cli.out.join("feature_dim"))?;
                    println!("{:<22} {:>2} {:>2} {:>12} {:>18}", "system", "n", "r", "state-space", "transfer-function");
                    for r in rows {
                        println!(
                            "{:<22} {:>2} {:>2} {:>12} {:>18}",
                            r.system.name(),
                            r.n,
                            r.r,
                            r.state_space_width,
                            r.transfer_function_width
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

fn print_evaluation(report: &commands::EvaluateReport) {
    let e = &report.experiment;
    println!("baseline RMS      {:.6e}", e.rms_baseline);
    match e.rms_enhanced {
        Some(v) => println!("enhanced RMS      {v:.6e}"),
        None => println!("enhanced RMS      n/a"),
    }
    if let Some(p) = e.reduction_percent {
        println!("reduction         {p:.2} %");
    }
    println!("diverged          {}", e.diverged);
    if let Some(v) = report.model_vs_oracle_rms {
        println!("net vs oracle u   {v:.6e}");
    }
    if let Some(s) = report.steady_state_error {
        println!("step offset       baseline {:.4}, enhanced {:.4}", s.baseline, s.enhanced);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
