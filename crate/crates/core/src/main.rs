use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ouneumann::config::{parse_dims, Command, ExperimentConfig, Format, Overrides};
use ouneumann::run::{run, Outcome, Status};

/// Gaussian Neumann problems on convex domains: solve, verify, sweep dimensions,
/// compare cylinders and estimate by Feynman-Kac.
#[derive(Parser, Debug)]
#[command(name = "ouneumann", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,

    /// Grid cells per unit length (spacing 1/n).
    #[arg(long, global = true)]
    resolution: Option<u32>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Sweep dimensions as `a..b`, inclusive.
    #[arg(long, global = true)]
    dims: Option<String>,

    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Solve one problem and report norms and a-priori ratios.
    Solve,
    /// Run the verification battery.
    Verify,
    /// Sweep a one-dimensional problem over cylinders of increasing dimension.
    Sweep,
    /// Compare a base solve, lifted, with a direct solve on the cylinder.
    Equivalence,
    /// Monte-Carlo estimate of the solution at one point.
    Oracle,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum OutFormat {
    Csv,
    Json,
}

fn report(outcome: &Outcome) {
    if outcome.status != Status::Success {
        eprintln!("{}", serde_json::to_string(outcome).expect("outcome serializes"));
    }
    for path in &outcome.artifacts {
        println!("{}", path.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dims = match cli.dims.as_deref().map(parse_dims).transpose() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Status::ConfigError.code() as u8);
        }
    };
    let overrides = Overrides {
        command: Some(match cli.command {
            Cmd::Solve => Command::Solve,
            Cmd::Verify => Command::Verify,
            Cmd::Sweep => Command::Sweep,
            Cmd::Equivalence => Command::Equivalence,
            Cmd::Oracle => Command::Oracle,
        }),
        output_dir: cli.out,
        lambda: cli.lambda,
        resolution: cli.resolution,
        seed: cli.seed,
        dims,
        format: cli.format.map(|f| match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }),
    };
    let outcome = match ExperimentConfig::resolve(cli.config.as_deref(), &overrides) {
        Ok(cfg) => run(&cfg),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Status::ConfigError.code() as u8);
        }
    };
    report(&outcome);
    ExitCode::from(outcome.status.code() as u8)
}
