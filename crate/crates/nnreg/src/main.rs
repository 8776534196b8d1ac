use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nnreg::commands::{cmd_compare, cmd_rates, cmd_solve, cmd_synth, RunOptions};
use nnreg::config::ExperimentConfig;
use nnreg::error::{CliError, Result};
use nnreg::formats::{aligned_table, fmt_f64};

#[derive(Parser)]
#[command(name = "nnreg", version, about = "Non-negative iterative regularization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML, or JSON including solve reports)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs` in the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed; overrides the config
    #[arg(long)]
    seed: Option<u64>,
    /// Write per-iteration residual/error traces
    #[arg(long)]
    traces: bool,
    /// Worker threads for independent runs
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    parallel: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize operators, data and phantom into <out>/bundle
    Synth(Common),
    /// Run every configured solver on a bundle
    Solve {
        #[command(flatten)]
        common: Common,
        /// Bundle directory written by `synth`; synthesized in memory if omitted
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Compare solvers across noise pairs
    Compare(Common),
    /// Run convergence-rate studies
    Rates(Common),
}

fn options(c: &Common) -> RunOptions {
    RunOptions {
        out: c.out.clone(),
        seed: c.seed,
        traces: c.traces,
        parallel: c.parallel as usize,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let cfg = ExperimentConfig::from_path(&c.config)?;
            let (dir, b) = cmd_synth(&cfg, &options(&c))?;
            println!(
                "bundle written to {} (h = {}, delta = {})",
                dir.display(),
                fmt_f64(b.meta.h),
                fmt_f64(b.meta.delta)
            );
        }
        Command::Solve { common, bundle } => {
            let cfg = ExperimentConfig::from_path(&common.config)?;
            if let Some(b) = &bundle {
                if !b.exists() {
                    return Err(CliError::config(format!("bundle {} does not exist", b.display())));
                }
            }
            let runs = cmd_solve(&cfg, bundle.as_deref(), &options(&common))?;
            let rows: Vec<Vec<String>> = runs
                .iter()
                .map(|r| {
                    vec![
                        r.report.label.clone(),
                        r.report.k_star.to_string(),
                        r.report.stop_reason.clone(),
                        r.report.l2err.map(|v| format!("{v:.4e}")).unwrap_or_default(),
                        format!("{:.3}", r.report.wall_time),
                    ]
                })
                .collect();
            print!("{}", aligned_table(&["label", "k_star", "stop_reason", "l2err", "wall_time"], &rows));
        }
        Command::Compare(c) => {
            let cfg = ExperimentConfig::from_path(&c.config)?;
            let opts = options(&c);
            cmd_compare(&cfg, &opts)?;
            let text = std::fs::read_to_string(opts.out_dir(&cfg).join("compare.txt")).unwrap_or_default();
            print!("{text}");
        }
        Command::Rates(c) => {
            let cfg = ExperimentConfig::from_path(&c.config)?;
            let results = cmd_rates(&cfg, &options(&c))?;
            let rows: Vec<Vec<String>> = results
                .iter()
                .map(|r| {
                    vec![
                        format!("{:?}", r.family).to_lowercase(),
                        format!("{}", r.parameter),
                        format!("{:.4}", r.study.slope),
                        r.study.predicted.map(|p| format!("{p:.4}")).unwrap_or_default(),
                    ]
                })
                .collect();
            print!("{}", aligned_table(&["family", "parameter", "slope", "predicted"], &rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
