use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use kfim_cli::config::ExperimentConfig;
use kfim_cli::plot::{emit_plot_data, Selection, PLOT_KINDS};
use kfim_cli::run::{run_experiment, workers_from_env};
use kfim_cli::summary::{summarize, Dataset, Summary};

#[derive(Parser)]
#[command(name = "kfim", version, about = "Kicked Ising chain eigenstate and dynamics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Pool CSV outputs (files or run directories) into one summary.
    Aggregate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Summary JSON path; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        bins: usize,
    },
    /// Emit a plot-ready CSV table from a summary.
    PlotData {
        summary: PathBuf,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PLOT_KINDS))]
        kind: String,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        l: Option<usize>,
        /// Output path; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let workers = workers_from_env()?;
            let (_, manifest) = run_experiment(&cfg, workers)?;
            log::info!(
                "wrote {} in {:.1}s ({} failed realizations)",
                cfg.output.display(),
                manifest.wall_clock_seconds,
                manifest.failed
            );
            if manifest.failed > 0 {
                eprintln!("warning: {} realizations failed; see manifest.json", manifest.failed);
            }
            Ok(())
        }
        Command::Aggregate { inputs, output, bins } => {
            anyhow::ensure!(bins > 0, "--bins must be positive");
            let data = Dataset::load(&inputs)?;
            let summary = summarize(&data, bins)?;
            let mut text = serde_json::to_string_pretty(&summary)?;
            text.push('\n');
            emit(&text, output.as_ref())
        }
        Command::PlotData { summary, kind, model, l, output } => {
            let text = std::fs::read_to_string(&summary).with_context(|| format!("reading {}", summary.display()))?;
            let s: Summary = serde_json::from_str(&text).with_context(|| format!("parsing {}", summary.display()))?;
            let table = emit_plot_data(&s, &kind, &Selection { model, l })?;
            emit(&table, output.as_ref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
