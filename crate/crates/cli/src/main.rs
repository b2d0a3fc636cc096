//! Command-line driver wiring the codec, feature, training, and
//! localization crates together. All randomness flows from --seed; a
//! manifest.json lands in every artifact directory.

mod commands;
mod dataset;
mod manifest;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "requant", version, about = "JPEG compression-history analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, inspect, or split quantization-matrix pools.
    Qpool {
        #[command(subcommand)]
        action: QpoolAction,
    },
    /// Generate labeled patches or forged test images.
    Synthesize(SynthesizeArgs),
    /// Dump classifier input tensors for patches.
    ExtractFeatures(ExtractArgs),
    /// Train the classifier on a synthesized dataset.
    Train(TrainArgs),
    /// Score a trained model against a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Classify one JPEG patch as single or double compressed.
    Classify(ClassifyArgs),
    /// Slide the classifier over an image and emit a tamper map.
    Localize(LocalizeArgs),
}

#[derive(Subcommand)]
enum QpoolAction {
    /// Write a pool of standard plus perturbed matrices.
    Make {
        #[arg(long)]
        out: PathBuf,
        /// Total number of matrices (at least the 50 standard tables).
        #[arg(long, default_value_t = 100)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Partition a pool into disjoint train/test pools.
    Split {
        #[arg(long)]
        qpool: PathBuf,
        /// Deterministic split as <seed>:<trainCount>.
        #[arg(long)]
        qpool_split: String,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
    },
    /// Print pool entries.
    Show {
        #[arg(long)]
        qpool: PathBuf,
    },
}

#[derive(Args)]
struct SynthesizeArgs {
    /// What to synthesize: patches, copymove, or blur.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Source images to generate (patches get a single+double pair each).
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Patch side in pixels for --kind patches (presets: 64, 128, 256).
    #[arg(long, default_value_t = 256)]
    patch_size: usize,
    /// Image side in pixels for forgery kinds.
    #[arg(long, default_value_t = 1024)]
    image_size: usize,
    /// Manipulated-region side in pixels for forgery kinds.
    #[arg(long, default_value_t = 544)]
    region_size: usize,
    /// Place manipulated regions off the 8x8 grid.
    #[arg(long)]
    unaligned: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pool for all compressions (defaults to standard + perturbed).
    #[arg(long)]
    qpool: Option<PathBuf>,
    /// Pool for first compressions only.
    #[arg(long)]
    qpool_first: Option<PathBuf>,
    /// Pool for final compressions only.
    #[arg(long)]
    qpool_final: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Dataset directory (index.json) or a single .jpg file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram bin half-range.
    #[arg(long, default_value_t = 100)]
    b: usize,
    /// Drop the q-factor channel (ablation input).
    #[arg(long)]
    without_qfactors: bool,
    /// Use only the top-left square of this many pixels.
    #[arg(long)]
    patch_size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory from `synthesize --kind patches`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram bin half-range.
    #[arg(long, default_value_t = 100)]
    b: usize,
    /// Crop each patch to this size (presets: 64, 128, 256).
    #[arg(long)]
    patch_size: Option<usize>,
    /// Keep the q-factor channel (default).
    #[arg(long, overrides_with = "without_qfactors")]
    with_qfactors: bool,
    /// Drop the q-factor channel (ablation).
    #[arg(long)]
    without_qfactors: bool,
    /// Scale histogram counts by 1/blockCount.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Epoch (0-indexed) at which the learning rate halves.
    #[arg(long, default_value_t = 30)]
    lr_drop_epoch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the small desk-scale architecture instead of the full one.
    #[arg(long)]
    toy: bool,
    /// Source-level split percentages: train[/val]/test.
    #[arg(long, default_value = "30/10/10")]
    split: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use only the top-left square of this many pixels.
    #[arg(long)]
    patch_size: Option<usize>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// JPEG patch to classify.
    patch: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct LocalizeArgs {
    /// JPEG image to scan.
    image: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    window: usize,
    #[arg(long, default_value_t = 32)]
    stride: usize,
    /// Ground-truth block mask (PGM) to score against.
    #[arg(long)]
    mask: Option<PathBuf>,
}

/// Resolves an output directory, falling back to $REQUANT_OUT/<name>.
fn resolve_out(out: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match out {
        Some(p) => Ok(p),
        None => {
            let root = std::env::var_os("REQUANT_OUT")
                .context("no --out given and REQUANT_OUT is not set")?;
            Ok(PathBuf::from(root).join(name))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Qpool { action } => match action {
            QpoolAction::Make { out, size, seed } => commands::qpool_make(&out, size, seed),
            QpoolAction::Split { qpool, qpool_split, out_train, out_test } => {
                commands::qpool_split(&qpool, &qpool_split, &out_train, &out_test)
            }
            QpoolAction::Show { qpool } => commands::qpool_show(&qpool),
        },
        Command::Synthesize(args) => {
            let out = resolve_out(args.out, "synthesize")?;
            commands::synthesize(commands::SynthesizeParams {
                kind: args.kind,
                out,
                count: args.count,
                patch_size: args.patch_size,
                image_size: args.image_size,
                region_size: args.region_size,
                unaligned: args.unaligned,
                seed: args.seed,
                qpool: args.qpool,
                qpool_first: args.qpool_first,
                qpool_final: args.qpool_final,
            })
        }
        Command::ExtractFeatures(args) => {
            let out = resolve_out(args.out, "features")?;
            let spec = requant_forensics::FeatureSpec {
                bin_half_range: args.b,
                with_qfactors: !args.without_qfactors,
                normalize: false,
            };
            commands::extract_features(&args.data, &out, spec, args.patch_size)
        }
        Command::Train(args) => {
            let out = resolve_out(args.out, "train")?;
            commands::train(commands::TrainParams {
                data: args.data,
                out,
                bin_half_range: args.b,
                with_qfactors: !args.without_qfactors,
                normalize: args.normalize,
                patch_size: args.patch_size,
                epochs: args.epochs,
                batch_size: args.batch_size,
                lr: args.lr,
                lr_drop_epoch: args.lr_drop_epoch,
                seed: args.seed,
                toy: args.toy,
                split: args.split,
            })
        }
        Command::Evaluate(args) => {
            commands::evaluate(&args.data, &args.model, args.out.as_deref(), args.patch_size)
        }
        Command::Classify(args) => commands::classify(&args.patch, &args.model),
        Command::Localize(args) => {
            let out = resolve_out(args.out, "localize")?;
            commands::localize_image(commands::LocalizeParams {
                image: args.image,
                model: args.model,
                out,
                window: args.window,
                stride: args.stride,
                mask: args.mask,
            })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
