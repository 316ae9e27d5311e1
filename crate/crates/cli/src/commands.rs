use std::path::{Path, PathBuf};

use marta::autodiff::Tensor;
use marta::classify::{
    cross_validate, extract_features, pixel_features, read_features, write_features, FeatureVector,
};
use marta::data::{
    augment_all, encode_png, load_images, sample_grid, stack_records, synth_class_names, synth_dataset,
    write_png_dataset, ImageRecord, Manifest,
};
use marta::model::{sample_z, Generator};
use marta::rng::seeded;
use marta::train::{load_checkpoint, loss_csv, parse_loss_csv, LossRecord, Trainer};
use marta::verify::{report_table, run_verification, VerifyOptions};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Outputs;

pub const CHECKPOINT_FILE: &str = "checkpoint.mrta";
pub const LOSS_FILE: &str = "losses.csv";
pub const SAMPLES_FILE: &str = "samples.png";
pub const FEATURES_FILE: &str = "features.feat";
pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "k,feature_dim,mean,std";

/// Records and class names from the manifest, or the synthetic spec.
fn dataset(config: &RunConfig) -> Result<(Vec<ImageRecord>, Vec<String>), CliError> {
    match &config.data.manifest {
        Some(path) => {
            let manifest = Manifest::read(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let names = manifest.classes.iter().map(|c| c.name.clone()).collect();
            Ok((load_images(&manifest, base)?, names))
        }
        None => {
            let (records, _) = synth_dataset(&config.synth)?;
            Ok((records, synth_class_names(&config.synth)))
        }
    }
}

fn checkpoint_path(config: &RunConfig) -> Result<&Path, CliError> {
    config
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Config("no checkpoint given (--checkpoint)".into()))
}

fn load_trainer(path: &Path) -> Result<Trainer, CliError> {
    if !path.exists() {
        return Err(CliError::Config(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(load_checkpoint(path)?)
}

pub fn synth(config: &RunConfig, out: PathBuf) -> Result<String, CliError> {
    let (records, _) = synth_dataset(&config.synth)?;
    let mut outputs = Outputs::create(out, config)?;
    let written = write_png_dataset(&outputs.dir, &records, &synth_class_names(&config.synth))?;
    for path in &written {
        outputs.adopt(path)?;
    }
    let dir = outputs.dir.display().to_string();
    outputs.finish()?;
    Ok(format!("wrote {} images and a manifest to {dir}", records.len()))
}

/// `grid × grid` samples from a fixed latent draw, in inference mode.
fn grid_png(generator: &mut Generator, grid: usize, seed: u64) -> Result<Vec<u8>, CliError> {
    let n = grid * grid;
    let z = sample_z(n, generator.config.z_dim, &mut seeded(seed, 5 << 40));
    let images = generator.generate(&z, false)?;
    Ok(encode_png(&sample_grid(&images, grid)?)?)
}

fn check_dataset_shape(config: &RunConfig, records: &[ImageRecord]) -> Result<(), CliError> {
    let shape = records[0].pixels.shape();
    let a = &config.arch;
    if shape != [a.image_channels, a.image_size, a.image_size] {
        return Err(CliError::Config(format!(
            "dataset images are {shape:?} but the architecture expects [{}, {}, {}]; set --image-size / --channels",
            a.image_channels, a.image_size, a.image_size
        )));
    }
    Ok(())
}

pub fn train(config: &RunConfig, out: PathBuf, resume: bool) -> Result<String, CliError> {
    let (records, _) = dataset(config)?;
    if records.is_empty() {
        return Err(CliError::Config("empty dataset".into()));
    }
    check_dataset_shape(config, &records)?;
    let gan_records = if config.data.augment_gan {
        augment_all(&records, &config.data.augment)
    } else {
        records
    };
    let (images, _) = stack_records(&gan_records)?;
    let mut outputs = Outputs::create(out, config)?;
    let ck_path = outputs.path(CHECKPOINT_FILE);

    let (mut trainer, mut records) = if resume && ck_path.exists() {
        let trainer = load_checkpoint(&ck_path)?;
        let mut expected = config.train.clone();
        expected.epochs = trainer.config.epochs;
        expected.max_iterations = trainer.config.max_iterations;
        if trainer.arch() != &config.arch || trainer.config != expected {
            return Err(CliError::Config(
                "checkpoint was written with a different architecture or training config".into(),
            ));
        }
        let mut trainer = trainer;
        trainer.config = config.train.clone();
        let previous = match std::fs::read_to_string(outputs.path(LOSS_FILE)) {
            Ok(text) => parse_loss_csv(&text)?,
            Err(_) => Vec::new(),
        };
        let kept: Vec<LossRecord> = previous
            .into_iter()
            .filter(|r| r.iteration < trainer.iteration)
            .collect();
        if kept.len() as u64 != trainer.iteration {
            return Err(CliError::Config(format!(
                "{} holds {} rows but the checkpoint is at iteration {}",
                LOSS_FILE,
                kept.len(),
                trainer.iteration
            )));
        }
        (trainer, kept)
    } else {
        (Trainer::new(&config.arch, config.train.clone())?, Vec::new())
    };

    let total = config.train.total_iterations(images.shape()[0]);
    while trainer.iteration < total {
        let record = trainer.step(&images).map_err(|e| match e {
            marta::Error::NonFinite(msg) => CliError::Validation(format!("training diverged: {msg}")),
            other => other.into(),
        })?;
        records.push(record);
        let done = trainer.iteration;
        if config.save_interval > 0 && done % config.save_interval == 0 && done < total {
            save_progress(&mut outputs, &trainer, &records)?;
            let grid = grid_png(&mut trainer.generator, config.grid, config.generate_seed)?;
            outputs.write(&format!("samples_{done:06}.png"), &grid)?;
        }
    }
    save_progress(&mut outputs, &trainer, &records)?;
    let grid = grid_png(&mut trainer.generator, config.grid, config.generate_seed)?;
    outputs.write(SAMPLES_FILE, &grid)?;
    let summary = match records.last() {
        Some(r) => format!(
            "trained {} iterations; final d_loss {:.4}, g_final {:.4}",
            trainer.iteration, r.d_loss, r.g_final
        ),
        None => format!("nothing to do: checkpoint already at iteration {}", trainer.iteration),
    };
    outputs.finish()?;
    Ok(summary)
}

fn save_progress(outputs: &mut Outputs, trainer: &Trainer, records: &[LossRecord]) -> Result<(), CliError> {
    let ck = trainer.to_checkpoint()?.encode()?;
    outputs.write(CHECKPOINT_FILE, &ck)?;
    outputs.write(LOSS_FILE, loss_csv(records).as_bytes())?;
    Ok(())
}

pub fn generate(config: &RunConfig, out: PathBuf) -> Result<String, CliError> {
    let mut trainer = load_trainer(checkpoint_path(config)?)?;
    let mut outputs = Outputs::create(out, config)?;
    let grid = grid_png(&mut trainer.generator, config.grid, config.generate_seed)?;
    let path = outputs.write(SAMPLES_FILE, &grid)?;
    outputs.finish()?;
    Ok(format!("wrote {}", path.display()))
}

fn model_features(
    trainer: &mut Trainer,
    images: &Tensor,
    labels: &[usize],
    k: usize,
) -> Result<Vec<FeatureVector>, CliError> {
    Ok(extract_features(&mut trainer.discriminator, images, labels, k, 32)?)
}

pub fn features(config: &RunConfig, out: PathBuf, raw: bool) -> Result<String, CliError> {
    let (records, _) = dataset(config)?;
    let (images, labels) = stack_records(&records)?;
    let feats = if raw {
        pixel_features(&images, &labels)?
    } else {
        let mut trainer = load_trainer(checkpoint_path(config)?)?;
        let k = config.classify.fusion_depth.unwrap_or(trainer.arch().fusion_depth);
        model_features(&mut trainer, &images, &labels, k)?
    };
    let mut outputs = Outputs::create(out, config)?;
    let path = outputs.path(FEATURES_FILE);
    write_features(&path, &feats)?;
    outputs.adopt(&path)?;
    outputs.finish()?;
    Ok(format!(
        "wrote {} feature vectors of dimension {} to {}",
        feats.len(),
        feats.first().map_or(0, |f| f.values.len()),
        path.display()
    ))
}

pub fn classify(config: &RunConfig, out: PathBuf) -> Result<String, CliError> {
    let path = config
        .features
        .as_deref()
        .ok_or_else(|| CliError::Config("no feature file given (--features)".into()))?;
    let feats = read_features(path)?;
    let report = cross_validate(&feats, &config.cv())?;
    let mut outputs = Outputs::create(out, config)?;
    outputs.write(REPORT_FILE, report.to_json().as_bytes())?;
    outputs.finish()?;
    let mut summary = format!("accuracy {:.2} ± {:.2} %", report.overall_mean, report.overall_std);
    for c in &report.per_class {
        summary.push_str(&format!("\n  class {:>3}: {:6.2} ± {:.2}", c.class, c.mean, c.std));
    }
    Ok(summary)
}

pub fn sweep_k(config: &RunConfig, out: PathBuf) -> Result<String, CliError> {
    let mut trainer = load_trainer(checkpoint_path(config)?)?;
    let (records, _) = dataset(config)?;
    let (images, labels) = stack_records(&records)?;
    let stages = trainer.arch().n_stages();
    let max_k = config.classify.max_k.unwrap_or(stages);
    if max_k == 0 || max_k > stages {
        return Err(CliError::Config(format!("max k {max_k} outside 1..={stages}")));
    }
    let mut csv = format!("{SWEEP_HEADER}\n");
    for k in 1..=max_k {
        let feats = model_features(&mut trainer, &images, &labels, k)?;
        let report = cross_validate(&feats, &config.cv())?;
        csv.push_str(&format!(
            "{k},{},{},{}\n",
            feats[0].values.len(),
            report.overall_mean,
            report.overall_std
        ));
    }
    let mut outputs = Outputs::create(out, config)?;
    outputs.write(SWEEP_FILE, csv.as_bytes())?;
    outputs.finish()?;
    Ok(csv.trim_end().to_string())
}

pub fn verify(options: &VerifyOptions) -> Result<String, CliError> {
    let checks = run_verification(options)?;
    let table = report_table(&checks);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(format!("{table}all {} checks passed", checks.len()))
    } else {
        Err(CliError::Validation(format!("{table}failed: {}", failed.join(", "))))
    }
}
