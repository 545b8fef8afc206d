//! `dfe`: train the patch autoencoder, match and track features, and score
//! tracks against ground truth.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfe_core::autoencoder::LossConfig;
use dfe_core::eval::ReferenceMode;
use dfe_core::synth::VideoConfig;

use commands::GradcheckOptions;
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dfe", version, about = "Deep feature encoding tracker")]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (overrides the config key and DFE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the autoencoder on crops sampled from an image directory.
    Train(TrainArgs),
    /// Track a feature through a numbered frame directory.
    Track(TrackArgs),
    /// Locate a feature of one image in another.
    Match(MatchArgs),
    /// Score an existing track CSV against ground truth.
    Eval(EvalArgs),
    /// Export the SSR landscape of one frame.
    Landscape(LandscapeArgs),
    /// Compare backprop against finite differences on a reduced model.
    Gradcheck(GradcheckArgs),
    /// Generate synthetic training textures or a tracking video.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossKind {
    Plain,
    Weighted,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Fixed,
    Updating,
}

fn parse_pair(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected X,Y")?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok([p(a)?, p(b)?])
}

#[derive(Debug, Default, Args)]
struct LossArgs {
    /// Reconstruction loss.
    #[arg(long, value_enum)]
    loss: Option<LossKind>,
    /// Gaussian mask σ for the weighted loss.
    #[arg(long, default_value_t = 5.0)]
    loss_sigma: f64,
}

impl LossArgs {
    fn config(&self) -> Option<LossConfig> {
        self.loss.map(|k| match k {
            LossKind::Plain => LossConfig::Plain,
            LossKind::Weighted => LossConfig::Weighted { sigma: self.loss_sigma },
        })
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    images: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Loss history CSV (default: next to the checkpoint).
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    crops_per_image: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    loss: LossArgs,
}

#[derive(Debug, Args)]
struct FrameArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Frame number defining the feature.
    #[arg(long)]
    reference_frame: Option<u64>,
    /// Feature pixel in the reference frame.
    #[arg(long, value_parser = parse_pair, value_name = "X,Y")]
    point: Option<[usize; 2]>,
    /// Keep every N-th frame.
    #[arg(long)]
    keep_every: Option<usize>,
}

#[derive(Debug, Args)]
struct SigmaArgs {
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[command(flatten)]
    frames: FrameArgs,
    #[command(flatten)]
    sigma: SigmaArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output track CSV.
    #[arg(long)]
    out: PathBuf,
    /// Report directory when ground truth is given (default: `report` next
    /// to the track).
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Image containing the feature.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, value_parser = parse_pair, value_name = "X,Y")]
    point: Option<[usize; 2]>,
    /// Image to search.
    #[arg(long)]
    target: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Track CSV produced by `dfe track`.
    #[arg(long)]
    track: PathBuf,
    #[command(flatten)]
    sigma: SigmaArgs,
    #[arg(long)]
    report_dir: PathBuf,
}

#[derive(Debug, Args)]
struct LandscapeArgs {
    #[command(flatten)]
    frames: FrameArgs,
    /// Frame number whose landscape is exported.
    #[arg(long)]
    frame: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Divide every layer width of the default model by this.
    #[arg(long, default_value_t = 4)]
    width_divisor: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    loss: LossArgs,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Seeded color textures for training.
    Textures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Moving textured patch with ground truth.
    Video {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

impl FrameArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            checkpoint: self.checkpoint.clone(),
            frames: self.frames.clone(),
            reference_frame: self.reference_frame,
            reference_point: self.point,
            keep_every: self.keep_every,
            ..RunConfig::default()
        }
    }
}

impl SigmaArgs {
    fn apply(&self, cfg: RunConfig) -> RunConfig {
        cfg.overlay(&RunConfig {
            ground_truth: self.ground_truth.clone(),
            sigma_x: self.sigma_x,
            sigma_y: self.sigma_y,
            ..RunConfig::default()
        })
    }
}

fn flags(command: &Command) -> RunConfig {
    match command {
        Command::Train(a) => RunConfig {
            images: a.images.clone(),
            checkpoint: a.checkpoint.clone(),
            epochs: a.epochs,
            batch_size: a.batch_size,
            crops_per_image: a.crops_per_image,
            learning_rate: a.learning_rate,
            seed: a.seed,
            loss: a.loss.config(),
            ..RunConfig::default()
        },
        Command::Track(a) => {
            let mut cfg = a.sigma.apply(a.frames.config());
            cfg.mode = a.mode.map(|m| match m {
                ModeArg::Fixed => ReferenceMode::Fixed,
                ModeArg::Updating => ReferenceMode::Updating,
            });
            cfg
        }
        Command::Match(a) => RunConfig {
            checkpoint: a.checkpoint.clone(),
            reference_point: a.point,
            ..RunConfig::default()
        },
        Command::Eval(a) => a.sigma.apply(RunConfig::default()),
        Command::Landscape(a) => a.frames.config(),
        Command::Gradcheck(a) => RunConfig {
            seed: a.seed,
            loss: a.loss.config(),
            ..RunConfig::default()
        },
        Command::Synth(_) => RunConfig::default(),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = file.overlay(&flags(&cli.command));
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(n) = cfg.thread_count()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Train(a) => commands::train(&cfg, a.history.as_deref()),
        Command::Track(a) => commands::track(&cfg, &a.out, a.report_dir.as_deref()),
        Command::Match(a) => commands::match_pair(&cfg, &a.reference, &a.target),
        Command::Eval(a) => commands::eval(&cfg, &a.track, &a.report_dir),
        Command::Landscape(a) => commands::landscape(&cfg, a.frame, &a.out),
        Command::Gradcheck(a) => commands::run_gradcheck(
            &cfg,
            &GradcheckOptions {
                width_divisor: a.width_divisor,
                batch: a.batch,
                step: a.step,
                tolerance: a.tolerance,
            },
        ),
        Command::Synth(SynthCommand::Textures { out, count, size, seed }) => {
            commands::synth_textures(out, *count, *size, *seed)
        }
        Command::Synth(SynthCommand::Video { out, frames, seed }) => commands::synth_video(
            out,
            &VideoConfig {
                frames: *frames,
                seed: *seed,
                ..VideoConfig::default()
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
