use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every (transposed) convolution uses a 4×4 kernel.
pub const KERNEL: usize = 4;
/// Every (transposed) convolution uses stride 2.
pub const STRIDE: usize = 2;
/// Padding that makes each stage exactly halve or double the spatial size.
pub const PAD: usize = 1;
/// Negative slope of the discriminator's LeakyReLU.
pub const LEAK: f64 = 0.2;
/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;
/// Spatial size of every map in the multi-feature layer.
pub const FUSED_SIZE: usize = 4;

/// Shape hyperparameters shared by the generator and discriminator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub image_size: usize,
    pub image_channels: usize,
    pub z_dim: usize,
    /// Channels of the first discriminator stage.
    pub base_width: usize,
    /// Channel cap for deeper stages.
    pub max_width: usize,
    /// Number of trailing discriminator stages fused into the feature layer.
    pub fusion_depth: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            image_channels: 3,
            z_dim: 100,
            base_width: 16,
            max_width: 512,
            fusion_depth: 3,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 || !self.image_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "image size {} must be a power of two >= 16",
                self.image_size
            )));
        }
        if self.image_channels == 0 || self.z_dim == 0 || self.base_width == 0 {
            return Err(Error::Config(
                "image channels, z_dim and base width must be positive".into(),
            ));
        }
        if self.max_width < self.base_width {
            return Err(Error::Config(format!(
                "max width {} below base width {}",
                self.max_width, self.base_width
            )));
        }
        if self.fusion_depth == 0 || self.fusion_depth > self.n_stages() {
            return Err(Error::Config(format!(
                "fusion depth {} outside 1..={}",
                self.fusion_depth,
                self.n_stages()
            )));
        }
        Ok(())
    }

    /// `log2(image_size) - 2`: the number of 2× stages between 4×4 and the image.
    pub fn n_stages(&self) -> usize {
        self.image_size.trailing_zeros() as usize - 2
    }

    /// Output channels of discriminator stage `j`.
    pub fn disc_width(&self, j: usize) -> usize {
        (self.base_width << j.min(30)).min(self.max_width)
    }

    /// Output spatial size of discriminator stage `j`.
    pub fn disc_size(&self, j: usize) -> usize {
        self.image_size >> (j + 1)
    }

    /// Channels of the projected 4×4 seed map fed to the first generator stage.
    pub fn gen_seed_width(&self) -> usize {
        self.disc_width(self.n_stages() - 1)
    }

    /// Output channels of generator stage `i`.
    pub fn gen_width(&self, i: usize) -> usize {
        let n = self.n_stages();
        if i + 1 == n {
            self.image_channels
        } else {
            self.disc_width(n - 2 - i)
        }
    }

    /// Output spatial size of generator stage `i`.
    pub fn gen_size(&self, i: usize) -> usize {
        FUSED_SIZE << (i + 1)
    }

    /// Channels of the fused layer when the last `k` stages are fused.
    pub fn fused_channels(&self, k: usize) -> usize {
        let n = self.n_stages();
        (n - k.min(n)..n).map(|j| self.disc_width(j)).sum()
    }

    /// Length of the flattened multi-feature vector for fusion depth `k`.
    pub fn feature_dim(&self, k: usize) -> usize {
        self.fused_channels(k) * FUSED_SIZE * FUSED_SIZE
    }
}
