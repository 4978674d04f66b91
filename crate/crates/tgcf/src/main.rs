use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tgcf::config::{ExperimentConfig, CONFIG_HELP};
use tgcf::runner;

/// Temporal graph collaborative filtering experiments.
#[derive(Parser)]
#[command(name = "tgcf", version, about)]
struct Cli {
    /// Print the configuration file reference and exit.
    #[arg(long)]
    help_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Parser)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; run artifacts go into a timestamped subdirectory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and evaluate it over the test range.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a saved checkpoint over the test range.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the configured grid and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate the configured synthetic dataset as events.csv / items.csv.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn setup(common: &CommonArgs) -> tgcf::Result<(ExperimentConfig, String, u64)> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| tgcf::TgcfError::Config(format!("--threads: {e}")))?;
    }
    let (cfg, raw) = ExperimentConfig::from_path(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok((cfg, raw, seed))
}

fn run(cli: Cli) -> tgcf::Result<()> {
    let Some(command) = cli.command else {
        return Err(tgcf::TgcfError::Config(
            "missing subcommand; try --help or --help-config".into(),
        ));
    };
    match command {
        Command::Train { common } => {
            let (cfg, raw, seed) = setup(&common)?;
            let dir = runner::cmd_train(&cfg, &raw, seed, &common.out)?;
            println!("artifacts in {}", dir.display());
        }
        Command::Evaluate { common, checkpoint } => {
            let (cfg, raw, seed) = setup(&common)?;
            let dir = runner::cmd_evaluate(&cfg, &raw, &checkpoint, seed, &common.out)?;
            println!("artifacts in {}", dir.display());
        }
        Command::Sweep { common } => {
            let (cfg, raw, seed) = setup(&common)?;
            runner::cmd_sweep(&cfg, &raw, seed, &common.out)?;
        }
        Command::Synth { common } => {
            let (cfg, _, seed) = setup(&common)?;
            runner::cmd_synth(&cfg, seed, &common.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.help_config {
        print!("{CONFIG_HELP}");
        return ExitCode::SUCCESS;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
