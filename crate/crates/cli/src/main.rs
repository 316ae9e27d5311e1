//! Command-line front end: synthesize data, train, sample, extract features,
//! classify, sweep fusion depth and run the verification suite.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marta::autodiff::Fault;
use marta::data::Family;
use marta::train::LossMode;
use marta::verify::VerifyOptions;

use config::{resolve_output, RunConfig};
use error::CliError;

/// Relative output directories are placed under this directory when set.
pub const OUTPUT_ROOT_ENV: &str = "MARTA_OUTPUT_ROOT";
/// Set to `conv2d` to corrupt the conv2d backward rule during `verify`.
pub const FAULT_ENV: &str = "MARTA_INJECT_FAULT";

#[derive(Parser)]
#[command(name = "marta", version, about = "Multi-feature GAN representation learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic texture dataset as PNGs plus a manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Train generator and discriminator.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        arch: ArchArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Continue from the checkpoint in the output directory, if present.
        #[arg(long)]
        resume: bool,
    },
    /// Write a grid of generator samples.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract multi-feature vectors (or raw pixels) to a feature file.
    Features {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Fusion depth k.
        #[arg(long)]
        k: Option<usize>,
        /// Use raw pixels instead of discriminator features.
        #[arg(long)]
        raw: bool,
    },
    /// Cross-validate a linear L2-SVM on a feature file.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        svm: SvmArgs,
    },
    /// Cross-validate features of every fusion depth up to --max-k.
    SweepK {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        max_k: Option<usize>,
        #[command(flatten)]
        svm: SvmArgs,
    },
    /// Run gradient, oracle, loss, optimizer and SVM checks.
    Verify {
        /// Corrupt a backward rule to prove the suite notices (`conv2d`).
        #[arg(long)]
        inject_fault: Option<String>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run config used as the base for all flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    /// Comma-separated texture families cycled over classes.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset manifest; the configured synthetic spec is used when absent.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Disable augmentation of GAN training images.
    #[arg(long)]
    no_augment: bool,
    /// Add the 180 and 270 degree rotations.
    #[arg(long)]
    all_rotations: bool,
    /// Use all eight dihedral symmetries.
    #[arg(long)]
    dihedral: bool,
}

#[derive(Args)]
struct ArchArgs {
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    z_dim: Option<usize>,
    #[arg(long)]
    base_width: Option<usize>,
    #[arg(long)]
    max_width: Option<usize>,
    #[arg(long)]
    fusion_depth: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_iterations: Option<u64>,
    #[arg(long)]
    d_steps: Option<usize>,
    /// `final` or `perceptual_only`.
    #[arg(long)]
    loss_mode: Option<String>,
    /// Use the non-saturating generator loss.
    #[arg(long)]
    non_saturating: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    save_interval: Option<u64>,
}

#[derive(Args)]
struct SvmArgs {
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SynthArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<(), CliError> {
        let s = &mut cfg.synth;
        set(&mut s.n_classes, self.classes);
        set(&mut s.per_class, self.per_class);
        set(&mut s.size, self.size);
        set(&mut s.channels, self.channels);
        set(&mut s.seed, self.seed);
        if let Some(names) = self.families {
            s.families = names
                .iter()
                .map(|n| n.parse::<Family>())
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if self.manifest.is_some() {
            cfg.data.manifest = self.manifest;
        }
        if self.no_augment {
            cfg.data.augment_gan = false;
        }
        cfg.data.augment.all_rotations |= self.all_rotations;
        cfg.data.augment.dihedral |= self.dihedral;
    }
}

impl ArchArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let a = &mut cfg.arch;
        set(&mut a.image_size, self.image_size);
        set(&mut a.image_channels, self.channels);
        set(&mut a.z_dim, self.z_dim);
        set(&mut a.base_width, self.base_width);
        set(&mut a.max_width, self.max_width);
        set(&mut a.fusion_depth, self.fusion_depth);
    }
}

impl TrainArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<(), CliError> {
        let t = &mut cfg.train;
        set(&mut t.learning_rate, self.lr);
        set(&mut t.beta1, self.beta1);
        set(&mut t.beta2, self.beta2);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.epochs, self.epochs);
        if self.max_iterations.is_some() {
            t.max_iterations = self.max_iterations;
        }
        set(&mut t.d_steps_per_g_step, self.d_steps);
        if let Some(mode) = self.loss_mode {
            t.loss_mode = mode.parse::<LossMode>()?;
        }
        t.non_saturating |= self.non_saturating;
        set(&mut t.seed, self.seed);
        set(&mut cfg.save_interval, self.save_interval);
        Ok(())
    }
}

impl SvmArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let c = &mut cfg.classify;
        set(&mut c.c, self.c);
        set(&mut c.folds, self.folds);
        c.standardize |= self.standardize;
        set(&mut c.seed, self.seed);
    }
}

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    set(&mut cfg.output_dir, common.out.clone());
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.arch.validate()?;
    cfg.train.validate()?;
    cfg.synth.validate()?;
    cfg.svm().validate()?;
    if cfg.grid == 0 {
        return Err(CliError::Config("grid must be at least 1".into()));
    }
    Ok(())
}

fn fault_from(name: Option<String>) -> Result<Option<Fault>, CliError> {
    let name = name.or_else(|| std::env::var(FAULT_ENV).ok().filter(|v| !v.is_empty()));
    match name.as_deref() {
        None => Ok(None),
        Some("conv2d") => Ok(Some(Fault::Conv2dBackward)),
        Some(other) => Err(CliError::Config(format!("unknown fault '{other}' (supported: conv2d)"))),
    }
}

/// Validate the resolved config and locate its output directory.
fn prepare(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    validate(cfg)?;
    Ok(resolve_output(&cfg.output_dir))
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Verify { inject_fault, seeds } => {
            let options = VerifyOptions {
                seeds,
                fault: fault_from(inject_fault)?,
                ..VerifyOptions::default()
            };
            commands::verify(&options)
        }
        Command::Synth { common, synth } => {
            let mut cfg = base_config(&common)?;
            synth.apply(&mut cfg)?;
            commands::synth(&cfg, prepare(&cfg)?)
        }
        Command::Train {
            common,
            data,
            arch,
            train,
            resume,
        } => {
            let mut cfg = base_config(&common)?;
            data.apply(&mut cfg);
            arch.apply(&mut cfg);
            train.apply(&mut cfg)?;
            commands::train(&cfg, prepare(&cfg)?, resume)
        }
        Command::Generate {
            common,
            checkpoint,
            grid,
            seed,
        } => {
            let mut cfg = base_config(&common)?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            set(&mut cfg.grid, grid);
            set(&mut cfg.generate_seed, seed);
            commands::generate(&cfg, prepare(&cfg)?)
        }
        Command::Features {
            common,
            data,
            checkpoint,
            k,
            raw,
        } => {
            let mut cfg = base_config(&common)?;
            data.apply(&mut cfg);
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            if k.is_some() {
                cfg.classify.fusion_depth = k;
            }
            commands::features(&cfg, prepare(&cfg)?, raw)
        }
        Command::Classify { common, features, svm } => {
            let mut cfg = base_config(&common)?;
            if features.is_some() {
                cfg.features = features;
            }
            svm.apply(&mut cfg);
            commands::classify(&cfg, prepare(&cfg)?)
        }
        Command::SweepK {
            common,
            data,
            checkpoint,
            max_k,
            svm,
        } => {
            let mut cfg = base_config(&common)?;
            data.apply(&mut cfg);
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            if max_k.is_some() {
                cfg.classify.max_k = max_k;
            }
            svm.apply(&mut cfg);
            commands::sweep_k(&cfg, prepare(&cfg)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
