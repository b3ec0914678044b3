mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patchnet_core::data::DatasetKind;
use patchnet_core::{Error, Result};

use crate::commands::TrainArgs;
use crate::config::RunConfig;

/// Patch-based CNN toolkit: synthetic datasets, training, evaluation,
/// segmentation, keypoint prediction and kernel benchmarks.
#[derive(Debug, Parser)]
#[command(name = "patchnet", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Forbid nondeterministic kernels during training.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Size of the worker thread pool.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Kind {
    Burn,
    Keypoint,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Gen {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        #[arg(long)]
        count: Option<usize>,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train the configured model on a manifest's train split.
    Train {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Weight file to write.
        #[arg(long, value_name = "PATH")]
        weights: PathBuf,
        /// Training log CSV; defaults to `<weights stem>.log.csv`.
        #[arg(long, value_name = "PATH")]
        log: Option<PathBuf>,
        /// Use the modified keypoint architecture.
        #[arg(long)]
        modified: bool,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Report accuracy or keypoint hit rate on a manifest split.
    Eval {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        weights: PathBuf,
        #[arg(long)]
        modified: bool,
        /// Also write the metrics JSON here.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Segment a colour (+ temperature) image into skin and burn regions.
    Segment {
        #[arg(long, value_name = "PATH")]
        weights: PathBuf,
        /// Colour PPM; outputs go next to it.
        #[arg(long, value_name = "PATH")]
        image: PathBuf,
        /// Temperature map; defaults to the image path with an `.irf` extension.
        #[arg(long, value_name = "PATH")]
        temperature: Option<PathBuf>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Predict facial keypoints for 96×96 gray images.
    Predict {
        #[arg(long, value_name = "PATH")]
        weights: PathBuf,
        #[arg(long, value_name = "PATH", num_args = 1.., required = true)]
        image: Vec<PathBuf>,
        #[arg(long)]
        modified: bool,
        /// Keypoint CSV to write.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Time the convolution kernels and print relative speedups.
    Bench {
        /// Comma-separated kernel variants; all registered ones by default.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        /// Comma-separated thread counts for the multithreaded kernel.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
        /// Also write the CSV report here.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Correctness(_) => 4,
        e if e.is_config() => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.apply_seed(s);
    }
    if cli.deterministic {
        cfg.train.get_or_insert_with(Default::default).deterministic = true;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen { kind, count, out } => {
            let kind = kind.map(|k| match k {
                Kind::Burn => DatasetKind::Burn,
                Kind::Keypoint => DatasetKind::Keypoint,
            });
            commands::gen(&cfg, kind, count, out)
        }
        Command::Train {
            manifest,
            weights,
            log,
            modified,
            epochs,
        } => commands::train(
            &cfg,
            TrainArgs {
                manifest,
                weights,
                log,
                modified,
                epochs,
            },
        ),
        Command::Eval {
            manifest,
            weights,
            modified,
            out,
        } => commands::eval(&cfg, manifest, &weights, modified, out),
        Command::Segment {
            weights,
            image,
            temperature,
            stride,
        } => commands::segment(&cfg, &weights, &image, temperature, stride),
        Command::Predict {
            weights,
            image,
            modified,
            out,
        } => commands::predict(&cfg, &weights, &image, modified, &out),
        Command::Bench { variants, sweep, csv } => commands::bench(&cfg, variants, sweep, csv),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Geometry("x".into())), 2);
        assert_eq!(exit_code(&Error::Data("x".into())), 3);
        assert_eq!(exit_code(&Error::Correctness("x".into())), 4);
    }

    #[test]
    fn unknown_flags_fail() {
        assert!(Cli::try_parse_from(["patchnet", "gen", "--colour", "red"]).is_err());
        assert!(Cli::try_parse_from(["patchnet", "bench", "--sweep", "1,2", "--seed", "3"]).is_ok());
    }
}
