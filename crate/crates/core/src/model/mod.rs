//! Generator and discriminator networks with the multi-feature fusion layer.

mod config;
mod discriminator;
mod fusion;
mod generator;
mod stage;

use std::collections::HashMap;

use rand::Rng;
use sha2::{Digest, Sha256};

pub use config::{ArchConfig, FUSED_SIZE, INIT_STD, KERNEL, LEAK, PAD, STRIDE};
pub use discriminator::{Discrimination, Discriminator, DiscriminatorPass, DiscriminatorVars};
pub use fusion::{fuse_features, FusedVars, MultiFeatureActivation};
pub use generator::{Generator, GeneratorPass, GeneratorVars};
pub use stage::ConvStage;

use crate::autodiff::{BatchNormState, Tensor};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Uniform latent batch on `[-1, 1]`.
pub fn sample_z(n: usize, z_dim: usize, rng: &mut SeededRng) -> Tensor {
    Tensor::from_fn(&[n, z_dim], |_| rng.random_range(-1.0..=1.0))
}

/// A network with named learnable tensors and batch-norm running statistics.
///
/// `parameters` and `parameters_mut` list the same tensors in the same order,
/// which is also the order forward passes bind them into a graph.
pub trait Module {
    fn parameters(&self) -> Vec<(String, &Tensor)>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;
    fn norms(&self) -> Vec<(String, &BatchNormState)>;
    fn norms_mut(&mut self) -> Vec<&mut BatchNormState>;

    /// Scalar learnable parameters: weights, biases, gammas and betas.
    fn param_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// Parameters followed by running statistics, all as named tensors.
    fn state_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .parameters()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        for (name, norm) in self.norms() {
            let c = norm.channels();
            out.push((
                format!("{name}.running_mean"),
                Tensor::new(&[c], norm.running_mean.clone()).expect("channel vector"),
            ));
            out.push((
                format!("{name}.running_var"),
                Tensor::new(&[c], norm.running_var.clone()).expect("channel vector"),
            ));
        }
        out
    }

    /// Overwrite parameters and running statistics from named tensors.
    fn load_state(&mut self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .parameters()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let lookup = |name: &str, shape: &[usize]| -> Result<Tensor> {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::Data(format!("missing tensor '{name}'")))?;
            if t.shape() != shape {
                return Err(Error::Data(format!(
                    "tensor '{name}' has shape {:?}, model expects {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        let values = names
            .iter()
            .map(|(n, s)| lookup(n, s))
            .collect::<Result<Vec<_>>>()?;
        let norm_names: Vec<(String, usize)> = self
            .norms()
            .into_iter()
            .map(|(n, s)| (n, s.channels()))
            .collect();
        let stats = norm_names
            .iter()
            .map(|(n, c)| {
                Ok((
                    lookup(&format!("{n}.running_mean"), &[*c])?,
                    lookup(&format!("{n}.running_var"), &[*c])?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        for (dst, src) in self.parameters_mut().into_iter().zip(values) {
            *dst = src;
        }
        for (norm, (mean, var)) in self.norms_mut().into_iter().zip(stats) {
            norm.running_mean = mean.into_vec();
            norm.running_var = var.into_vec();
        }
        Ok(())
    }

    /// SHA-256 over every parameter and running statistic, bit for bit.
    fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, t) in self.state_tensors() {
            h.update(name.as_bytes());
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }
}
