use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mckean_cli::{run, CliError, Experiment, ExperimentConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "mckean", version, about = "Particle simulations of McKean-Vlasov SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strong convergence of a full-interaction scheme against a fine reference
    Converge(RunArgs),
    /// Strong error of the random batch scheme for several batch-size rules
    RbmSweep(RunArgs),
    /// Wall time of full and batch schemes as N grows
    Timing(RunArgs),
    /// Exhaustive checks of the batch-deviation identities
    Validate(RunArgs),
    /// Distance between terminal laws at consecutive particle counts
    Chaos(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML config; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for path-level parallelism
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(experiment: Experiment, args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path, experiment)?,
        None => ExperimentConfig::defaults(experiment)?,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    Ok(config)
}

fn execute(experiment: Experiment, args: &RunArgs) -> Result<i32, CliError> {
    let config = load(experiment, args)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    let outcome = pool.install(|| run(&config))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for c in &outcome.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if outcome.divergence_failed {
        println!(
            "FAIL divergence: {:.4} of paths diverged (limit {})",
            outcome.divergence_rate, config.criteria.max_divergence_rate
        );
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Converge(a) => (Experiment::Converge, a),
        Command::RbmSweep(a) => (Experiment::RbmSweep, a),
        Command::Timing(a) => (Experiment::Timing, a),
        Command::Validate(a) => (Experiment::Validate, a),
        Command::Chaos(a) => (Experiment::Chaos, a),
    };
    let code = match execute(experiment, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(EXIT_CONFIG as u8))
}
