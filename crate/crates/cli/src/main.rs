use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mfrisk::experiments::{load_config, run_experiment, ExperimentKind};
use mfrisk::{Error, Result};

#[derive(Parser)]
#[command(name = "mfrisk", version, about = "Convex risk functionals of McKean-Vlasov diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-moment value, dual lower bound and backward regression for the quadratic penalty.
    Gibbs(Args),
    /// Small-noise sweep against the zero-noise action maximum.
    Fw(Args),
    /// Dual values along a vanishing-noise ladder.
    Vanish(Args),
    /// Particle-count sweep of W2 distances.
    Chaos(Args),
    /// Prekopa-Leindler inequality on random bump triples.
    Pl(Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn run(kind: ExperimentKind, args: &Args) -> Result<bool> {
    let mut cfg = load_config(&args.config)?;
    if let Some(k) = cfg.run.experiment {
        if k != kind {
            return Err(Error::InvalidArgument(format!("config declares experiment `{k}`, not `{kind}`")));
        }
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    let outcome = run_experiment(kind, &cfg)?;
    fs::create_dir_all(&args.out)?;
    let report = &outcome.report;
    match args.format {
        Format::Json => fs::write(args.out.join(format!("{kind}.json")), report.to_json()?)?,
        Format::Csv => report.write_csv(fs::File::create(args.out.join(format!("{kind}.csv")))?)?,
    }
    for (name, text) in &outcome.artifacts {
        fs::write(args.out.join(name), text)?;
    }
    for c in &report.checks {
        println!(
            "{:<4} {}: observed {:.6e}, threshold {:.6e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.observed,
            c.threshold
        );
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Gibbs(a) => (ExperimentKind::Gibbs, a),
        Command::Fw(a) => (ExperimentKind::Fw, a),
        Command::Vanish(a) => (ExperimentKind::Vanish, a),
        Command::Chaos(a) => (ExperimentKind::Chaos, a),
        Command::Pl(a) => (ExperimentKind::Pl, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
