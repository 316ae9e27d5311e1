use super::config::{ArchConfig, INIT_STD, KERNEL, LEAK, PAD, STRIDE};
use super::fusion::{fuse_features, FusedVars, MultiFeatureActivation};
use super::stage::{ConvStage, StageVars};
use super::Module;
use crate::autodiff::{BatchNormState, Graph, NormMode, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, seeded};

const INIT_STREAM: u64 = 2;

/// Strided-convolution classifier whose last `fusion_depth` stages feed the
/// multi-feature layer; the flattened layer is mapped to one logit.
///
/// Stage 0 carries a bias and no batch norm; later stages are batch-normalized.
/// Every stage is followed by LeakyReLU(0.2).
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub config: ArchConfig,
    pub stages: Vec<ConvStage>,
    /// `[feature_dim, 1]`
    pub head_weight: Tensor,
    /// `[1]`
    pub head_bias: Tensor,
}

/// Discriminator parameters bound as graph leaves.
#[derive(Clone, Debug)]
pub struct DiscriminatorVars {
    /// Every leaf, in [`Module::parameters`] order.
    pub all: Vec<Var>,
    stages: Vec<StageVars>,
    head: (Var, Var),
}

/// Result of one recorded discriminator pass.
#[derive(Clone, Debug)]
pub struct DiscriminatorPass {
    pub logit: Var,
    pub prob: Var,
    /// Post-activation output of every stage.
    pub stage_maps: Vec<Var>,
    pub features: FusedVars,
}

/// Materialized discriminator output.
#[derive(Clone, Debug)]
pub struct Discrimination {
    pub prob: Tensor,
    pub logit: Tensor,
    pub features: MultiFeatureActivation,
}

impl Discriminator {
    pub fn new(config: &ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed, INIT_STREAM);
        let mut stages = Vec::with_capacity(config.n_stages());
        let mut in_ch = config.image_channels;
        for j in 0..config.n_stages() {
            let out_ch = config.disc_width(j);
            stages.push(ConvStage {
                weight: normal_tensor(&mut rng, &[out_ch, in_ch, KERNEL, KERNEL], INIT_STD),
                bias: (j == 0).then(|| Tensor::zeros(&[out_ch])),
                norm: (j > 0).then(|| BatchNormState::new(out_ch)),
            });
            in_ch = out_ch;
        }
        let dim = config.feature_dim(config.fusion_depth);
        Ok(Self {
            config: config.clone(),
            stages,
            head_weight: normal_tensor(&mut rng, &[dim, 1], INIT_STD),
            head_bias: Tensor::zeros(&[1]),
        })
    }

    fn check_images(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        if shape.len() != 4 || shape[1] != c.image_channels || shape[2] != c.image_size || shape[3] != c.image_size {
            return Err(Error::shape(
                "discriminate",
                format!(
                    "images {shape:?}, expected [N, {}, {}, {}]",
                    c.image_channels, c.image_size, c.image_size
                ),
            ));
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> DiscriminatorVars {
        let mut all = Vec::new();
        let stages = self
            .stages
            .iter()
            .map(|s| s.bind(g, trainable, &mut all))
            .collect();
        let head_w = g.leaf(self.head_weight.clone(), trainable);
        let head_b = g.leaf(self.head_bias.clone(), trainable);
        all.extend([head_w, head_b]);
        DiscriminatorVars {
            all,
            stages,
            head: (head_w, head_b),
        }
    }

    /// Stage activations only, without the head. Used for feature extraction
    /// at arbitrary fusion depth.
    pub fn stage_maps(&mut self, g: &mut Graph, vars: &DiscriminatorVars, images: Var, mode: NormMode) -> Result<Vec<Var>> {
        self.check_images(g.shape(images))?;
        let mut h = images;
        let mut maps = Vec::with_capacity(self.stages.len());
        for (stage, sv) in self.stages.iter_mut().zip(&vars.stages) {
            let y = g.conv2d(h, sv.weight, sv.bias, STRIDE, PAD)?;
            let y = stage.normalize(g, sv, y, mode)?;
            h = g.leaky_relu(y, LEAK);
            maps.push(h);
        }
        Ok(maps)
    }

    /// Record a full pass: stages, multi-feature layer, logit and probability.
    pub fn forward(&mut self, g: &mut Graph, vars: &DiscriminatorVars, images: Var, mode: NormMode) -> Result<DiscriminatorPass> {
        let stage_maps = self.stage_maps(g, vars, images, mode)?;
        let features = fuse_features(g, &stage_maps, self.config.fusion_depth)?;
        let logit = g.dense(features.flat, vars.head.0, Some(vars.head.1))?;
        let prob = g.sigmoid(logit);
        Ok(DiscriminatorPass {
            logit,
            prob,
            stage_maps,
            features,
        })
    }

    /// Evaluate without recording gradients.
    pub fn discriminate(&mut self, images: &Tensor, training: bool) -> Result<Discrimination> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let mode = if training { NormMode::Train } else { NormMode::Inference };
        let vars = self.bind(&mut g, false);
        let pass = self.forward(&mut g, &vars, x, mode)?;
        Ok(Discrimination {
            prob: g.value(pass.prob).clone(),
            logit: g.value(pass.logit).clone(),
            features: pass.features.materialize(&g),
        })
    }

    /// Flattened multi-feature vectors `[N, feature_dim(k)]` in inference mode.
    pub fn features(&mut self, images: &Tensor, k: usize) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let vars = self.bind(&mut g, false);
        let maps = self.stage_maps(&mut g, &vars, x, NormMode::Inference)?;
        let fused = fuse_features(&mut g, &maps, k)?;
        Ok(g.value(fused.flat).clone())
    }
}

impl Module for Discriminator {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (j, s) in self.stages.iter().enumerate() {
            s.collect_params(&format!("d.stage{j}"), &mut out);
        }
        out.push(("d.head.weight".to_string(), &self.head_weight));
        out.push(("d.head.bias".to_string(), &self.head_bias));
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            s.collect_params_mut(&mut out);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    fn norms(&self) -> Vec<(String, &BatchNormState)> {
        self.stages
            .iter()
            .enumerate()
            .filter_map(|(j, s)| s.norm.as_ref().map(|n| (format!("d.stage{j}.bn"), n)))
            .collect()
    }

    fn norms_mut(&mut self) -> Vec<&mut BatchNormState> {
        self.stages.iter_mut().filter_map(|s| s.norm.as_mut()).collect()
    }
}
