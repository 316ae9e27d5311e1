//! Procedural texture classes for desk-scale experiments.
//!
//! Each class pairs a texture family with a colour tint. Every sample draws
//! its own orientation, phase, scale and pixel noise from a stream derived
//! from `(seed, class, index)`, so any single image can be regenerated from
//! its recipe.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::{AugTag, ImageRecord};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Weight of the class tint in every pixel.
const TINT: f64 = 0.5;
/// Weight of the texture pattern.
const TEXTURE: f64 = 0.4;
/// Standard deviation of per-pixel noise.
const NOISE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Stripes,
    Checkerboard,
    Radial,
    Blobs,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Stripes, Family::Checkerboard, Family::Radial, Family::Blobs];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Stripes => "stripes",
            Family::Checkerboard => "checkerboard",
            Family::Radial => "radial",
            Family::Blobs => "blobs",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown texture family '{s}' (stripes, checkerboard, radial, blobs)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub size: usize,
    pub channels: usize,
    /// Family of class `c` is `families[c % len]`.
    pub families: Vec<Family>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 4,
            per_class: 50,
            size: 32,
            channels: 3,
            families: Family::ALL.to_vec(),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 16 || !self.size.is_power_of_two() {
            return Err(Error::Config(format!("image size {} must be a power of two ≥ 16", self.size)));
        }
        if self.n_classes < 1 || self.per_class < 1 {
            return Err(Error::Config("need at least one class and one sample per class".into()));
        }
        if !(self.channels == 1 || self.channels == 3) {
            return Err(Error::Config(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.families.is_empty() {
            return Err(Error::Config("no texture families given".into()));
        }
        Ok(())
    }

    pub fn recipe(&self, class: usize, index: usize) -> Recipe {
        Recipe {
            family: self.families[class % self.families.len()],
            class,
            index,
            size: self.size,
            channels: self.channels,
            seed: self.seed,
        }
    }
}

/// Everything needed to regenerate one synthetic image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub family: Family,
    pub class: usize,
    pub index: usize,
    pub size: usize,
    pub channels: usize,
    pub seed: u64,
}

impl Recipe {
    pub fn id(&self) -> String {
        format!("synth:{}:{}:{}:{}", self.family, self.class, self.index, self.seed)
    }

    /// Render as `[channels, size, size]` in `[-1, 1]`.
    pub fn render(&self) -> Tensor {
        let n = self.size;
        let mut rng = seeded(self.seed, ((self.class as u64) << 32) | self.index as u64);
        let pattern = texture(self.family, n, &mut rng);
        let tint = class_tint(self.class, self.channels);
        let noise = Normal::new(0.0, NOISE).expect("valid std");
        let mut data = Vec::with_capacity(self.channels * n * n);
        for &t in &tint {
            for &p in &pattern {
                let v = TINT * t + TEXTURE * p + noise.sample(&mut rng);
                data.push(v.clamp(-1.0, 1.0));
            }
        }
        Tensor::new(&[self.channels, n, n], data).expect("render shape")
    }
}

/// Per-class colour in `[-1, 1]^channels`, spread around the hue circle.
/// Single-channel images get evenly spaced grey levels instead.
fn class_tint(class: usize, channels: usize) -> Vec<f64> {
    if channels == 1 {
        let levels = [-0.8, 0.8, -0.27, 0.27];
        return vec![levels[class % 4] * (1.0 - 0.1 * (class / 4) as f64)];
    }
    let hue = class as f64 * 2.0 * PI * 0.381_966;
    (0..channels)
        .map(|c| (hue + c as f64 * 2.0 * PI / 3.0).cos())
        .collect()
}

/// Zero-centred pattern in `[-1, 1]`, row-major `n × n`.
fn texture(family: Family, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let nf = n as f64;
    let coords = (0..n * n).map(move |k| ((k / n) as f64, (k % n) as f64));
    match family {
        Family::Stripes => {
            let angle = rng.random_range(0.0..PI);
            let period = rng.random_range(0.15..0.3) * nf;
            let phase = rng.random_range(0.0..2.0 * PI);
            let (s, c) = angle.sin_cos();
            coords
                .map(|(y, x)| (2.0 * PI * (x * c + y * s) / period + phase).sin())
                .collect()
        }
        Family::Checkerboard => {
            let cell = rng.random_range(0.1..0.25) * nf;
            let (oy, ox) = (rng.random_range(0.0..cell), rng.random_range(0.0..cell));
            coords
                .map(|(y, x)| {
                    let parity = ((y + oy) / cell).floor() as i64 + ((x + ox) / cell).floor() as i64;
                    if parity.rem_euclid(2) == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        }
        Family::Radial => {
            let (cy, cx) = (rng.random_range(0.3..0.7) * nf, rng.random_range(0.3..0.7) * nf);
            let period = rng.random_range(0.15..0.3) * nf;
            let phase = rng.random_range(0.0..2.0 * PI);
            coords
                .map(|(y, x)| (2.0 * PI * (y - cy).hypot(x - cx) / period + phase).cos())
                .collect()
        }
        Family::Blobs => {
            let count = rng.random_range(3..7);
            let blobs: Vec<(f64, f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.random_range(0.0..nf),
                        rng.random_range(0.0..nf),
                        rng.random_range(0.06..0.14) * nf,
                    )
                })
                .collect();
            coords
                .map(|(y, x)| {
                    let v: f64 = blobs
                        .iter()
                        .map(|&(by, bx, r)| (-((y - by).powi(2) + (x - bx).powi(2)) / (2.0 * r * r)).exp())
                        .sum();
                    2.0 * v.min(1.0) - 1.0
                })
                .collect()
        }
    }
}

/// Render every image of `spec`, class-major, with origin ids `0..N`.
pub fn synth_records(spec: &SyntheticSpec) -> Result<Vec<ImageRecord>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.n_classes * spec.per_class);
    for class in 0..spec.n_classes {
        for index in 0..spec.per_class {
            let recipe = spec.recipe(class, index);
            out.push(ImageRecord {
                pixels: recipe.render(),
                label: class,
                origin: recipe.id(),
                origin_id: out.len(),
                tag: AugTag::Original,
            });
        }
    }
    Ok(out)
}
