use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::{LossMode, TrainConfig};
use super::loss::{d_loss, g_feature_match_loss, g_final_loss, g_perceptual_loss};
use super::record::LossRecord;
use crate::autodiff::{Graph, NormMode, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{sample_z, ArchConfig, Discriminator, Generator, Module};
use crate::rng::seeded;

/// Latent draws of iteration `i` come from stream `Z_STREAM + i`.
const Z_STREAM: u64 = 1 << 40;
/// Batch order of epoch `e` comes from stream `EPOCH_STREAM + e`.
const EPOCH_STREAM: u64 = 2 << 40;

/// Hook invoked after every completed iteration.
pub trait TrainObserver {
    fn on_iteration(&mut self, trainer: &Trainer, record: &LossRecord) -> Result<()>;
}

impl TrainObserver for () {
    fn on_iteration(&mut self, _: &Trainer, _: &LossRecord) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&Trainer, &LossRecord) -> Result<()>> TrainObserver for F {
    fn on_iteration(&mut self, trainer: &Trainer, record: &LossRecord) -> Result<()> {
        self(trainer, record)
    }
}

/// Both networks, their optimizer states and the iteration counter: every
/// piece of state needed to resume training exactly.
///
/// All randomness during training is derived from `(config.seed, iteration)`,
/// so a trainer restored at iteration `i` continues the same trace.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    pub config: TrainConfig,
    pub iteration: u64,
    epoch_order: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    /// Fresh networks initialized from `config.seed`.
    pub fn new(arch: &ArchConfig, config: TrainConfig) -> Result<Self> {
        let generator = Generator::new(arch, config.seed)?;
        let discriminator = Discriminator::new(arch, config.seed)?;
        Self::with_models(generator, discriminator, config)
    }

    pub fn with_models(generator: Generator, discriminator: Discriminator, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if generator.config != discriminator.config {
            return Err(Error::Config(
                "generator and discriminator built from different architectures".into(),
            ));
        }
        let gen_opt = AdamState::new(generator.parameters().into_iter().map(|(_, t)| t));
        let disc_opt = AdamState::new(discriminator.parameters().into_iter().map(|(_, t)| t));
        Ok(Self {
            generator,
            discriminator,
            gen_opt,
            disc_opt,
            config,
            iteration: 0,
            epoch_order: None,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.generator.config
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.config.learning_rate,
            beta1: self.config.beta1,
            beta2: self.config.beta2,
            eps: self.config.adam_eps,
        }
    }

    fn check_dataset(&self, images: &Tensor) -> Result<usize> {
        let a = self.arch();
        let s = images.shape();
        if s.len() != 4 || s[1] != a.image_channels || s[2] != a.image_size || s[3] != a.image_size {
            return Err(Error::shape(
                "train",
                format!(
                    "dataset {s:?}, expected [N, {}, {}, {}]",
                    a.image_channels, a.image_size, a.image_size
                ),
            ));
        }
        if s[0] < self.config.batch_size {
            return Err(Error::Data(format!(
                "dataset of {} images is smaller than batch size {}",
                s[0], self.config.batch_size
            )));
        }
        Ok(s[0])
    }

    /// Indices of the `index`-th real batch drawn since training started.
    fn real_batch(&mut self, n: usize, index: u64) -> Vec<usize> {
        let b = self.config.batch_size;
        let per_epoch = (n / b) as u64;
        let epoch = index / per_epoch;
        let pos = (index % per_epoch) as usize;
        if self.epoch_order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seeded(self.config.seed, EPOCH_STREAM + epoch));
            self.epoch_order = Some((epoch, order));
        }
        let order = &self.epoch_order.as_ref().unwrap().1;
        order[pos * b..(pos + 1) * b].to_vec()
    }

    /// One iteration: `d_steps_per_g_step` discriminator updates with the
    /// generator fixed, then one generator update with the discriminator fixed.
    pub fn step(&mut self, images: &Tensor) -> Result<LossRecord> {
        let n = self.check_dataset(images)?;
        let it = self.iteration;
        let b = self.config.batch_size;
        let z_dim = self.arch().z_dim;
        let mut zrng = seeded(self.config.seed, Z_STREAM + it);
        let steps = self.config.d_steps_per_g_step as u64;

        let mut d_value = 0.0;
        let mut real = None;
        for j in 0..steps {
            let idx = self.real_batch(n, it * steps + j);
            let batch = gather(images, &idx);
            let z = sample_z(b, z_dim, &mut zrng);
            d_value = self.discriminator_step(&batch, &z)?;
            real = Some(batch);
        }
        let real = real.expect("at least one discriminator step");
        let z = sample_z(b, z_dim, &mut zrng);
        let (perceptual, feature_match) = self.generator_step(&real, &z)?;

        let record = LossRecord {
            iteration: it,
            d_loss: d_value,
            g_perceptual: perceptual,
            g_feature_match: feature_match,
            g_final: perceptual + feature_match,
        };
        if !record.is_finite() {
            return Err(Error::NonFinite(format!(
                "iteration {it}: d_loss {} g_perceptual {} g_feature_match {}",
                record.d_loss, record.g_perceptual, record.g_feature_match
            )));
        }
        self.iteration += 1;
        Ok(record)
    }

    pub(crate) fn discriminator_step(&mut self, real: &Tensor, z: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let gen_vars = self.generator.bind(&mut g, false);
        let fake = self.generator.forward(&mut g, &gen_vars, zv, NormMode::Frozen)?.images;
        // Cut the fake batch loose from the generator's part of the tape.
        let fake = g.constant(g.value(fake).clone());
        let real = g.constant(real.clone());
        let vars = self.discriminator.bind(&mut g, true);
        let real_pass = self.discriminator.forward(&mut g, &vars, real, NormMode::Train)?;
        let fake_pass = self.discriminator.forward(&mut g, &vars, fake, NormMode::Train)?;
        let loss = d_loss(&mut g, real_pass.logit, fake_pass.logit)?;
        let value = g.value(loss).item();
        g.backward(loss)?;
        let grads = collect_grads(&g, &vars.all);
        let cfg = self.adam();
        adam_step(&mut self.discriminator.parameters_mut(), &grads, &mut self.disc_opt, &cfg);
        Ok(value)
    }

    pub(crate) fn generator_step(&mut self, real: &Tensor, z: &Tensor) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let gen_vars = self.generator.bind(&mut g, true);
        let fake = self.generator.forward(&mut g, &gen_vars, zv, NormMode::Train)?.images;
        let disc_vars = self.discriminator.bind(&mut g, false);
        let fake_pass = self.discriminator.forward(&mut g, &disc_vars, fake, NormMode::Frozen)?;
        let real = g.constant(real.clone());
        let real_pass = self.discriminator.forward(&mut g, &disc_vars, real, NormMode::Frozen)?;
        let perceptual = g_perceptual_loss(&mut g, fake_pass.logit, self.config.non_saturating)?;
        let feature_match = g_feature_match_loss(&mut g, real_pass.features.flat, fake_pass.features.flat)?;
        let values = (g.value(perceptual).item(), g.value(feature_match).item());
        let objective = match self.config.loss_mode {
            LossMode::PerceptualOnly => perceptual,
            LossMode::Final => g_final_loss(&mut g, perceptual, feature_match)?,
        };
        g.backward(objective)?;
        let grads = collect_grads(&g, &gen_vars.all);
        let cfg = self.adam();
        adam_step(&mut self.generator.parameters_mut(), &grads, &mut self.gen_opt, &cfg);
        Ok(values)
    }

    /// Iterate until the configured iteration budget is exhausted.
    pub fn run(&mut self, images: &Tensor, observer: &mut dyn TrainObserver) -> Result<Vec<LossRecord>> {
        let n = self.check_dataset(images)?;
        let total = self.config.total_iterations(n);
        let mut records = Vec::with_capacity(total.saturating_sub(self.iteration) as usize);
        while self.iteration < total {
            let record = self.step(images)?;
            observer.on_iteration(self, &record)?;
            records.push(record);
        }
        Ok(records)
    }
}

/// Train freshly built or pre-trained networks on `images` (`[N, C, H, W]`
/// scaled to `[-1, 1]`).
pub fn train(
    generator: Generator,
    discriminator: Discriminator,
    images: &Tensor,
    config: TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(Generator, Discriminator, Vec<LossRecord>)> {
    let mut trainer = Trainer::with_models(generator, discriminator, config)?;
    let records = trainer.run(images, observer)?;
    Ok((trainer.generator, trainer.discriminator, records))
}

fn collect_grads(g: &Graph, vars: &[Var]) -> Vec<Tensor> {
    vars.iter()
        .map(|&v| g.grad(v).expect("trainable leaf after backward"))
        .collect()
}

/// Stack the listed samples of a batch-major tensor.
pub fn gather(images: &Tensor, indices: &[usize]) -> Tensor {
    let per = images.len() / images.shape()[0];
    let mut data = Vec::with_capacity(per * indices.len());
    for &i in indices {
        data.extend_from_slice(&images.data()[i * per..(i + 1) * per]);
    }
    let mut shape = images.shape().to_vec();
    shape[0] = indices.len();
    Tensor::new(&shape, data).expect("gathered batch shape")
}
