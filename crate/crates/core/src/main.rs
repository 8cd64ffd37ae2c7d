use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pikrvi::agents::bound_params;
use pikrvi::harness::checks::{run_checks, CheckOutcome};
use pikrvi::harness::{coverage_trial, emit_plot_data, read_traces, run_experiment, write_trace, ExperimentConfig};
use pikrvi::theory::{cover_growth_bound, info_gain_bound, regret_bound, solve_beta};
use pikrvi::Error;

#[derive(Parser)]
#[command(version, about = "Partitioned kernel ridge value iteration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured agents and write regret traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run this seed only.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding `experiment.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification suite.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print analytic bounds for t up to `t-max`.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t_max: usize,
    },
    /// Estimate the empirical confidence coverage.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 500)]
        trials: usize,
    },
    /// Turn a directory of traces into plot-ready CSVs.
    PlotData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        burn_in: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e @ (Error::Config { .. } | Error::Parse(_))) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> pikrvi::Result<ExitCode> {
    match command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let traces = run_experiment(&cfg)?;
            for tr in &traces {
                let path = write_trace(tr, &cfg.output_dir)?;
                println!(
                    "{:<8} seed {:<4} final regret {:>12.4}  -> {}",
                    tr.agent,
                    tr.seed,
                    tr.final_regret(),
                    path.display()
                );
            }
            emit_plot_data(&traces, &cfg.output_dir, cfg.burn_in)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let outcomes = run_checks(&cfg.checks);
            let mut failed = false;
            for CheckOutcome { name, passed, detail, seconds } in &outcomes {
                failed |= !passed;
                println!(
                    "{} {name}: {detail} ({seconds:.1} s)",
                    if *passed { "PASS" } else { "FAIL" }
                );
            }
            Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Bounds { config, t_max } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            if t_max == 0 {
                return Err(Error::config("t-max", "must be >= 1"));
            }
            let spec = cfg.kernel_spec()?;
            let base = bound_params(&cfg.agent, &spec, cfg.env.horizon, t_max)?;
            println!(
                "{:>10} {:>14} {:>14} {:>14} {:>14}",
                "t", "info_gain", "beta", "regret", "cover_growth"
            );
            let mut ts: Vec<usize> = std::iter::successors(Some(1usize), |t| t.checked_mul(10))
                .take_while(|&t| t < t_max)
                .flat_map(|t| [t, 2 * t, 5 * t])
                .filter(|&t| t < t_max)
                .collect();
            ts.push(t_max);
            for t in ts {
                let params = pikrvi::theory::BoundParams {
                    episodes: t,
                    ..base.clone()
                };
                let beta = match solve_beta(&params, t, t, 1.0) {
                    Ok(b) => format!("{b:>14.6e}"),
                    Err(_) => format!("{:>14}", "diverges"),
                };
                println!(
                    "{t:>10} {:>14.6e} {beta} {:>14.6e} {:>14.6e}",
                    info_gain_bound(&params, t)?,
                    regret_bound(&params).value,
                    cover_growth_bound(&params, t)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Coverage { config, trials } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let report = coverage_trial(&cfg, trials)?;
            println!(
                "coverage {:.4} ({} of {} trials, beta = {:.6e})",
                report.rate(),
                report.covered,
                report.trials,
                report.beta
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::PlotData { input, out, burn_in } => {
            let traces = read_traces(&input)?;
            emit_plot_data(&traces, &out, burn_in)?;
            println!("{} traces -> {}", traces.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
