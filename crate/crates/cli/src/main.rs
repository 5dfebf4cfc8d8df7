//! `ffn`: generate synthetic data, train, segment, evaluate and list seeds.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_dims, Overrides, RunConfig};
use error::CliError;
use ffn_core::Dims;

#[derive(Parser, Debug)]
#[command(name = "ffn", version, about = "Flood-filling network segmentation")]
struct Cli {
    /// TOML run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Field of view, e.g. `17,17,9`.
    #[arg(long, global = true, value_parser = parse_dims)]
    fov: Option<Dims>,
    /// FoV step, e.g. `4,4,2`.
    #[arg(long, global = true, value_parser = parse_dims)]
    delta: Option<Dims>,
    #[arg(long = "t-move", global = true)]
    t_move: Option<f32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic worlds to `<out>/train/world_NNN` and `<out>/eval/world_NNN`.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on `<data>/train`, scoring checkpoints on `<data>/eval`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment an image with a trained model or the ground-truth oracle.
    Infer(InferArgs),
    /// Score a segmentation against skeletons.
    Eval {
        #[arg(long)]
        segmentation: PathBuf,
        #[arg(long)]
        skeletons: PathBuf,
        /// Also write the report as `key=value` lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the seed points generated for an image.
    Seeds {
        #[arg(long)]
        image: PathBuf,
    },
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
    checkpoint: Option<PathBuf>,
    /// Ground-truth label volume answering as a perfect predictor.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Directory for `segmentation.raw` and `run.log`.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        fov: cli.fov,
        delta: cli.delta,
        t_move: cli.t_move,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    eprintln!("# resolved config\n{}", cfg.to_toml());
    match cli.command {
        Command::Synth { out } => commands::synth(&cfg, &out),
        Command::Train { data, out } => commands::train(&cfg, &data, &out),
        Command::Infer(a) => {
            let predictor = match (a.checkpoint, a.oracle) {
                (Some(c), _) => commands::Predictor::Checkpoint(c),
                (None, Some(o)) => commands::Predictor::Oracle(o),
                (None, None) => unreachable!("clap enforces one predictor"),
            };
            commands::infer(&cfg, &predictor, &a.image, &a.out)
        }
        Command::Eval {
            segmentation,
            skeletons,
            out,
        } => commands::eval(&segmentation, &skeletons, out.as_deref()),
        Command::Seeds { image } => commands::seeds(&cfg, &image),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
