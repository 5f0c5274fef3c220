use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gridstorm::experiments::{run_experiment, ExperimentConfig, SweepParam};

#[derive(Parser)]
#[command(name = "gridstorm", version, about = "Price-modification attacks on grids with microgrids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment sweeps and write CSV, charts and the attack trace.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Main grid: embedded fixture name or case file path.
    #[arg(long)]
    case: Option<String>,
    /// Host bus of an attached microgrid (repeatable).
    #[arg(long = "attach")]
    attach: Vec<u32>,
    #[arg(long)]
    capacity_reduction: Option<f64>,
    #[arg(long)]
    resource: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["capacity", "resource", "mgload"])]
    sweep: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = &args.case {
        cfg.main_case = c.clone();
    }
    if !args.attach.is_empty() {
        cfg.attachments = args.attach.clone();
    }
    if let Some(v) = args.capacity_reduction {
        cfg.capacity_reduction = v;
    }
    if let Some(v) = args.resource {
        cfg.resource_fraction = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(s) = &args.sweep {
        if cfg.sweep.as_deref() != Some(s) {
            cfg.sweep_values = None;
        }
        s.parse::<SweepParam>()?;
        cfg.sweep = Some(s.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = config(&args)?;
            let start = Instant::now();
            let files =
                run_experiment(&cfg, &args.out).with_context(|| format!("experiment into {}", args.out.display()))?;
            for p in files.sweeps.iter().chain(&files.summaries).chain(&files.charts) {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", files.critical_nodes.display());
            println!("wrote {}", files.trace.display());
            println!("done in {:.2}s", start.elapsed().as_secs_f64());
        }
    }
    Ok(())
}
