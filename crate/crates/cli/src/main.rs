use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use gainsched_cli::{parse_config, run_scenario, ExperimentConfig, Scenario};

#[derive(Parser)]
#[command(name = "gainsched", version, about = "Gain-based scheduling of SGD updates: experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Communication rate vs cost of the threshold rule over a lambda sweep.
    Tradeoff(RunArgs),
    /// One-step greedy scheduling with exact vs estimated gains.
    BiasHist(RunArgs),
    /// Greedy gain scheduling vs gradient-norm scheduling.
    Compare(RunArgs),
    /// Monte Carlo check of the convergence envelope and communication budget.
    Bounds(RunArgs),
    /// Monte Carlo of an arbitrary configured policy.
    Simulate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; scenario defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: config `output_dir`, else `out/<scenario>`].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(scenario: Scenario, args: RunArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => parse_config(path, Some(scenario), args.seed)?,
        None => match args.seed {
            Some(seed) => ExperimentConfig::default_for(scenario, seed)?,
            None => anyhow::bail!("master_seed: missing; pass --seed or a --config that sets it"),
        },
    };
    let out = args
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(scenario.as_str()));
    let report = run_scenario(&config, &out)?;
    print!("{}", report.summary());
    println!("results written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, args) = match cli.command {
        Command::Tradeoff(a) => (Scenario::Tradeoff, a),
        Command::BiasHist(a) => (Scenario::BiasHist, a),
        Command::Compare(a) => (Scenario::Compare, a),
        Command::Bounds(a) => (Scenario::Bounds, a),
        Command::Simulate(a) => (Scenario::Simulate, a),
    };
    match execute(scenario, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
