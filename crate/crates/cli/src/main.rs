//! `bimf` command-line driver.

mod commands;
mod config;
mod data_io;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use bimf::data::RatingScale;
use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "bimf", version, about = "Matrix factorization with image-derived priors on users and items")]
struct Cli {
    /// Override the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a ratings CSV against an image directory and pack it.
    Ingest {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_ratings: usize,
        #[arg(long)]
        out: PathBuf,
        /// Side length images are resized to.
        #[arg(long, default_value_t = 60)]
        image_size: usize,
        #[arg(long, default_value_t = 1.0)]
        scale_min: f64,
        #[arg(long, default_value_t = 5.0)]
        scale_max: f64,
    },
    /// Generate a synthetic dataset with item images and ground truth.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured model and score it on the test split.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on a ratings file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Item images, used for items unseen in training.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-search lambda_u and lambda_v on the validation split.
    Grid {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare model kinds across training fractions.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Test RMSE against the number of images per user.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Predict one rating.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// User id, or index when no id matches.
        #[arg(long)]
        user: String,
        /// Item id, or index when no id matches.
        #[arg(long)]
        item: String,
        #[arg(long)]
        images: Option<PathBuf>,
        /// Clamp to the rating scale.
        #[arg(long)]
        clamp: bool,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::input("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(e.to_string()))?;
    }
    match cli.command {
        Command::Ingest { ratings, images, min_ratings, out, image_size, scale_min, scale_max } => {
            let scale = RatingScale::new(scale_min, scale_max)?;
            commands::ingest(&commands::IngestArgs { ratings, images, min_ratings, out, image_size, scale })
        }
        Command::Synth { config, out } => commands::synth(config.as_deref(), cli.seed, &out),
        Command::Train { config } => commands::train_cmd(&RunConfig::load(&config, cli.seed)?),
        Command::Eval { checkpoint, data, images, out } => {
            commands::eval_cmd(&checkpoint, &data, images.as_deref(), out.as_deref())
        }
        Command::Grid { config } => commands::grid_cmd(&RunConfig::load(&config, cli.seed)?),
        Command::Compare { config } => commands::compare_cmd(&RunConfig::load(&config, cli.seed)?),
        Command::Sweep { config } => commands::sweep_cmd(&RunConfig::load(&config, cli.seed)?),
        Command::Predict { checkpoint, user, item, images, clamp } => {
            commands::predict_cmd(&checkpoint, &user, &item, images.as_deref(), clamp)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
