//! Command-line driver: `switchctl solve` runs one homotopy experiment and
//! writes its result files; `switchctl sweep` tabulates a parameter sweep.
//! Exit codes: 0 success, 1 configuration error, 2 solver or I/O failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use switchctl::config::{parse_config, ConfigOverrides, RunConfig};
use switchctl::runner::{run_experiment, run_table_sweep, SweepParam};

#[derive(Parser)]
#[command(name = "switchctl", version, about = "Switching-control solver for the 2D heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file (key = value lines, [homotopy]/[solver] sections)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of control components
    #[arg(long = "N")]
    n: Option<usize>,
    /// Control cost / switching weight α
    #[arg(long)]
    alpha: Option<f64>,
    /// Time horizon T
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Number of time intervals
    #[arg(long)]
    time_intervals: Option<usize>,
    /// Target mesh edge length
    #[arg(long)]
    mesh_edge: Option<f64>,
    /// First homotopy value of γ
    #[arg(long)]
    gamma_start: Option<f64>,
    /// Smallest allowed γ
    #[arg(long)]
    gamma_min: Option<f64>,
    /// Output directory
    #[arg(long = "out")]
    output_dir: Option<PathBuf>,
    /// Also write controls.svg
    #[arg(long = "svg")]
    emit_svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write controls.csv / summary.json
    Solve(CommonOpts),
    /// Solve a list of parameter values and write a table
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Parameter to sweep: alpha or gamma
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated list of values, e.g. 1e-1,1e-2,1e-3
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn resolve(common: &CommonOpts) -> Result<RunConfig, switchctl::config::ConfigError> {
    let overrides = ConfigOverrides {
        n_controls: common.n,
        alpha: common.alpha,
        horizon: common.horizon,
        time_intervals: common.time_intervals,
        mesh_edge: common.mesh_edge,
        gamma_start: common.gamma_start,
        gamma_min: common.gamma_min,
        reduction_factor: None,
        output_dir: common.output_dir.clone(),
        emit_svg: if common.emit_svg { Some(true) } else { None },
    };
    parse_config(common.config.as_deref(), &overrides)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    match cli.command {
        Command::Solve(common) => {
            let config = match resolve(&common) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(1);
                }
            };
            match run_experiment(&config) {
                Ok(artifacts) => {
                    let d = &artifacts.report.diagnostics;
                    println!(
                        "gamma_last = {:.1e}, tau = {:?}, switch points = {}, objective = {:.6e}",
                        artifacts.report.last_gamma, d.tau_counts, d.switch_points,
                        artifacts.objective
                    );
                    println!("wrote {}", artifacts.controls_csv.display());
                    println!("wrote {}", artifacts.summary_json.display());
                    if let Some(svg) = &artifacts.controls_svg {
                        println!("wrote {}", svg.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("solver error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Sweep { common, param, values } => {
            let config = match resolve(&common) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(1);
                }
            };
            match run_table_sweep(&config, param, &values) {
                Ok((path, rows)) => {
                    for row in &rows {
                        println!(
                            "value {:.3e}: tau1={} tau2={} tau3={} gamma_last={:.1e} ssn={} converged={}",
                            row.value, row.tau1, row.tau2, row.tau3, row.gamma_last, row.ssn,
                            row.converged
                        );
                    }
                    println!("wrote {}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("solver error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
