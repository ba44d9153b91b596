use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use tidalflow_cli::{run, Command, PipelineConfig};

#[derive(Parser)]
#[command(name = "tidalflow", version, about = "Station-to-user analysis of farecard trips")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a trip CSV into flow matrices and a summary
    Ingest(Common),
    /// Generate a synthetic trip corpus with planted archetypes
    Synth(Common),
    /// Fit the tidal-regularized factorization of OD flows
    Train(Common),
    /// Project users onto the learned signatures and score stations
    Project(Common),
    /// Cluster users by their projected weights
    Cluster(Common),
    /// Run the clustering stability benchmark
    Benchmark(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides `output.dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed, overrides `seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` settings applied after the file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Positional `key=value` settings, same as --set
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(args: &Common) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::from_file(&args.config)?;
    for pair in args.set.iter().chain(&args.overrides) {
        config.apply_override(pair)?;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Ingest(a) => (Command::Ingest, a),
        Cmd::Synth(a) => (Command::Synth, a),
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Project(a) => (Command::Project, a),
        Cmd::Cluster(a) => (Command::Cluster, a),
        Cmd::Benchmark(a) => (Command::Benchmark, a),
    };
    match load(args).and_then(|config| run(command, &config)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
