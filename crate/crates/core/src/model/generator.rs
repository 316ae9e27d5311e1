use super::config::{ArchConfig, INIT_STD, KERNEL, PAD, STRIDE, FUSED_SIZE};
use super::stage::{ConvStage, StageVars};
use super::Module;
use crate::autodiff::{BatchNormState, Graph, NormMode, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, seeded};

/// Random stream reserved for generator initialization.
const INIT_STREAM: u64 = 1;

/// Maps a latent vector to an image: dense projection to a 4×4 seed map,
/// then `n_stages` transposed convolutions that each double the spatial size.
/// Hidden layers are batch-normalized and ReLU-activated; the last stage has
/// a bias and a tanh output.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub config: ArchConfig,
    /// `[z_dim, 16·seed_width]`
    pub projection: Tensor,
    pub projection_norm: BatchNormState,
    pub stages: Vec<ConvStage>,
}

/// Generator parameters bound as graph leaves.
#[derive(Clone, Debug)]
pub struct GeneratorVars {
    /// Every leaf, in [`Module::parameters`] order.
    pub all: Vec<Var>,
    projection: Var,
    norm: (Var, Var),
    stages: Vec<StageVars>,
}

/// Result of one recorded generator pass.
#[derive(Clone, Debug)]
pub struct GeneratorPass {
    pub images: Var,
    /// Output of every stage, in stage order.
    pub stage_outputs: Vec<Var>,
}

impl Generator {
    pub fn new(config: &ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed, INIT_STREAM);
        let seed_width = config.gen_seed_width();
        let projection = normal_tensor(&mut rng, &[config.z_dim, FUSED_SIZE * FUSED_SIZE * seed_width], INIT_STD);
        let n = config.n_stages();
        let mut stages = Vec::with_capacity(n);
        let mut in_ch = seed_width;
        for i in 0..n {
            let out_ch = config.gen_width(i);
            let last = i + 1 == n;
            stages.push(ConvStage {
                weight: normal_tensor(&mut rng, &[in_ch, out_ch, KERNEL, KERNEL], INIT_STD),
                bias: last.then(|| Tensor::zeros(&[out_ch])),
                norm: (!last).then(|| BatchNormState::new(out_ch)),
            });
            in_ch = out_ch;
        }
        Ok(Self {
            config: config.clone(),
            projection,
            projection_norm: BatchNormState::new(seed_width),
            stages,
        })
    }

    /// Bind every parameter as a leaf; `trainable` decides whether the
    /// leaves receive gradients.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> GeneratorVars {
        let mut all = Vec::new();
        let projection = g.leaf(self.projection.clone(), trainable);
        let gamma = g.leaf(self.projection_norm.gamma.clone(), trainable);
        let beta = g.leaf(self.projection_norm.beta.clone(), trainable);
        all.extend([projection, gamma, beta]);
        let stages = self
            .stages
            .iter()
            .map(|s| s.bind(g, trainable, &mut all))
            .collect();
        GeneratorVars {
            all,
            projection,
            norm: (gamma, beta),
            stages,
        }
    }

    /// Record a forward pass of `z [N, z_dim]`.
    pub fn forward(&mut self, g: &mut Graph, vars: &GeneratorVars, z: Var, mode: NormMode) -> Result<GeneratorPass> {
        let zs = g.shape(z);
        if zs.len() != 2 || zs[1] != self.config.z_dim {
            return Err(Error::shape(
                "generate",
                format!("latent batch {zs:?}, expected [N, {}]", self.config.z_dim),
            ));
        }
        let n = zs[0];
        let h = g.dense(z, vars.projection, None)?;
        let h = g.reshape(h, &[n, self.config.gen_seed_width(), FUSED_SIZE, FUSED_SIZE])?;
        let h = g.batch_norm2d(h, vars.norm.0, vars.norm.1, &mut self.projection_norm, mode)?;
        let mut h = g.relu(h);
        let mut stage_outputs = Vec::with_capacity(self.stages.len());
        let last = self.stages.len() - 1;
        for (i, (stage, sv)) in self.stages.iter_mut().zip(&vars.stages).enumerate() {
            let y = g.conv_transpose2d(h, sv.weight, sv.bias, STRIDE, PAD)?;
            let y = stage.normalize(g, sv, y, mode)?;
            h = if i == last { g.tanh(y) } else { g.relu(y) };
            stage_outputs.push(h);
        }
        Ok(GeneratorPass {
            images: h,
            stage_outputs,
        })
    }

    /// Generate images from `z` without recording gradients.
    pub fn generate(&mut self, z: &Tensor, training: bool) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let mode = if training { NormMode::Train } else { NormMode::Inference };
        let vars = self.bind(&mut g, false);
        let pass = self.forward(&mut g, &vars, zv, mode)?;
        Ok(g.value(pass.images).clone())
    }
}

impl Module for Generator {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("g.proj.weight".to_string(), &self.projection),
            ("g.proj.bn.gamma".to_string(), &self.projection_norm.gamma),
            ("g.proj.bn.beta".to_string(), &self.projection_norm.beta),
        ];
        for (i, s) in self.stages.iter().enumerate() {
            s.collect_params(&format!("g.stage{i}"), &mut out);
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.projection,
            &mut self.projection_norm.gamma,
            &mut self.projection_norm.beta,
        ];
        for s in &mut self.stages {
            s.collect_params_mut(&mut out);
        }
        out
    }

    fn norms(&self) -> Vec<(String, &BatchNormState)> {
        let mut out = vec![("g.proj.bn".to_string(), &self.projection_norm)];
        for (i, s) in self.stages.iter().enumerate() {
            if let Some(n) = &s.norm {
                out.push((format!("g.stage{i}.bn"), n));
            }
        }
        out
    }

    fn norms_mut(&mut self) -> Vec<&mut BatchNormState> {
        let mut out = vec![&mut self.projection_norm];
        out.extend(self.stages.iter_mut().filter_map(|s| s.norm.as_mut()));
        out
    }
}
