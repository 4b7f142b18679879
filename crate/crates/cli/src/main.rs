use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fedsaddle::algorithms::{AlgorithmKind, InitialPoint, SyncSchedule};
use fedsaddle::harness::{run_experiment, verify, ExperimentConfig, ExperimentReport};
use fedsaddle::testbed::{generate_instance, DEFAULT_CLIENTS, DEFAULT_DIM, DEFAULT_LAMBDA};

#[derive(Parser)]
#[command(name = "fedsaddle", version, about = "Federated saddle-point optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run algorithms on instances at fixed heterogeneity levels.
    Run(RunArgs),
    /// Sweep a range of heterogeneity levels over a stepsize grid.
    Sweep(SweepArgs),
    /// Run a verification suite and print one line per check.
    Verify {
        /// oracles, identities, convergence or all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Generate a testbed instance and write it as TOML.
    GenInstance(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Algorithm to run (repeatable); defaults to all five.
    #[arg(long = "algorithm", value_name = "NAME")]
    algorithms: Vec<AlgorithmKind>,
    /// Heterogeneity level (repeatable).
    #[arg(long = "s", value_name = "S")]
    s: Vec<f64>,
    /// Synchronization probability per iteration.
    #[arg(long, conflicts_with = "tau")]
    p: Option<f64>,
    /// Local steps between synchronizations.
    #[arg(long)]
    tau: Option<usize>,
    /// Communication-round budget per run.
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    gamma_l: Option<f64>,
    #[arg(long)]
    gamma_g: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicates per cell.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Initial value of every coordinate.
    #[arg(long)]
    init: Option<f64>,
    /// Gradient-query noise level.
    #[arg(long)]
    sigma: Option<f64>,
    /// Use constant stepsizes for FedAvg-S instead of the decaying schedule.
    #[arg(long)]
    fedavg_constant: bool,
    /// Record every n-th iteration.
    #[arg(long)]
    thin: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    s_min: Option<f64>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    s_step: Option<f64>,
    /// Comma-separated base stepsizes, divided by max(s, 1).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    d: usize,
    #[arg(long, default_value_t = DEFAULT_CLIENTS)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Destination file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn base_config(args: &RunArgs) -> Result<ExperimentConfig> {
    match &args.config {
        Some(path) => {
            ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply(args: &RunArgs, config: &mut ExperimentConfig) {
    if !args.algorithms.is_empty() {
        config.algorithms = args.algorithms.clone();
    }
    if !args.s.is_empty() {
        config.s_values = args.s.clone();
    }
    if let Some(p) = args.p {
        config.sync = SyncSchedule::Probabilistic { p };
    }
    if let Some(tau) = args.tau {
        config.sync = SyncSchedule::Deterministic { tau };
    }
    if let Some(rounds) = args.rounds {
        config.budget = rounds;
    }
    if args.gamma_l.is_some() {
        config.gamma_l = args.gamma_l;
    }
    if args.gamma_g.is_some() {
        config.gamma_g = args.gamma_g;
    }
    if let Some(theta) = args.theta {
        config.theta = theta;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(seeds) = args.seeds {
        config.seeds = seeds;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(init) = args.init {
        config.init = InitialPoint::Constant(init);
    }
    if let Some(sigma) = args.sigma {
        config.sigma = sigma;
    }
    if args.fedavg_constant {
        config.fedavg_decay = false;
    }
    if args.thin.is_some() {
        config.thin = args.thin;
    }
}

fn s_range(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) {
        bail!("need s-step > 0 and s-max >= s-min, got {min}..{max} step {step}");
    }
    let count = ((max - min) / step + 1e-9).floor() as u64;
    Ok((0..=count).map(|i| min + i as f64 * step).collect())
}

fn report(config: &ExperimentConfig, report: &ExperimentReport) {
    println!("algorithm,s,best_gamma,best_mean_final_dist_sq");
    for row in &report.summary {
        println!("{},{},{},{:e}", row.algorithm, row.s, row.best_gamma, row.best_mean_final_dist_sq);
    }
    eprintln!(
        "{} runs written to {}",
        report.results.len(),
        config.out.display()
    );
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = base_config(&args)?;
    if args.config.is_none() {
        config.s_values = vec![0.0];
    }
    apply(&args, &mut config);
    config.validate()?;
    let out = run_experiment(&config)?;
    report(&config, &out);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut config = base_config(&args.run)?;
    apply(&args.run, &mut config);
    if args.s_min.is_some() || args.s_max.is_some() || args.s_step.is_some() {
        config.s_values = s_range(
            args.s_min.unwrap_or(0.0),
            args.s_max.unwrap_or(15.0),
            args.s_step.unwrap_or(1.0),
        )?;
    }
    if let Some(grid) = args.grid {
        config.grid = grid;
    }
    config.validate()?;
    let out = run_experiment(&config)?;
    report(&config, &out);
    Ok(())
}

fn gen_instance(args: GenArgs) -> Result<()> {
    let inst = generate_instance(args.s, args.d, args.n, args.lambda, args.seed)?;
    match args.out {
        Some(path) => inst.save(&path)?,
        None => print!("{}", inst.to_toml()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args).map(|()| true),
        Command::Sweep(args) => sweep(args).map(|()| true),
        Command::Verify { suite } => verify(&suite).map_err(Into::into),
        Command::GenInstance(args) => gen_instance(args).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_range_is_inclusive() {
        assert_eq!(s_range(0.0, 15.0, 1.0).unwrap().len(), 16);
        assert_eq!(s_range(0.0, 1.0, 0.5).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(s_range(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::try_parse_from(["fedsaddle", "run", "--tau", "5", "--rounds", "7", "--algorithm", "fedavg-s"]).unwrap();
        let Command::Run(args) = cli.command else { panic!() };
        let mut config = ExperimentConfig {
            budget: 100,
            ..ExperimentConfig::default()
        };
        apply(&args, &mut config);
        assert_eq!(config.budget, 7);
        assert_eq!(config.sync, SyncSchedule::Deterministic { tau: 5 });
        assert_eq!(config.algorithms, vec![AlgorithmKind::FedavgS]);
    }

    #[test]
    fn unknown_algorithm_rejected_by_parser() {
        assert!(Cli::try_parse_from(["fedsaddle", "run", "--algorithm", "fedprox"]).is_err());
    }
}
