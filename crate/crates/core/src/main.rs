use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use tiltpath::config::ExperimentConfig;
use tiltpath::experiment::{run_command, Command};
use tiltpath::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Reference,
    Learn,
    Mccann,
    All,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Reference => Command::Reference,
            Cmd::Learn => Command::Learn,
            Cmd::Mccann => Command::Mccann,
            Cmd::All => Command::All,
        }
    }
}

/// Learn tilted paths of measures and compare transports.
#[derive(Debug, Parser)]
#[command(name = "tiltpath", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `outputs` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed (overrides `transport.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidMixture(_) | Error::InvalidArgument(_) => 2,
        Error::Io { .. } => 4,
        _ => 3,
    }
}

fn run(args: Args) -> Result<(), Error> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.transport.seed = seed;
    }
    let dir = args.out.unwrap_or_else(|| config.outputs.clone());
    let files = run_command(args.command.into(), config, &dir)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
