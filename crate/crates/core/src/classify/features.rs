//! Feature vectors, their extraction from a discriminator and the FEAT file
//! format (`FEAT`, `u32` count, `u32` dim, then per record a `u32` label and
//! `dim` little-endian f32 values).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};
use crate::model::Discriminator;
use crate::train::gather;

pub const FEAT_MAGIC: &[u8; 4] = b"FEAT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: usize,
    /// Index of the source image in its dataset.
    pub source: usize,
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_features(features: &[FeatureVector]) -> Result<Self> {
        let first = features
            .first()
            .ok_or_else(|| Error::Data("empty feature set".into()))?;
        let cols = first.values.len();
        let mut data = Vec::with_capacity(cols * features.len());
        for (i, f) in features.iter().enumerate() {
            if f.values.len() != cols {
                return Err(Error::Data(format!(
                    "feature {i} has dimension {}, expected {cols}",
                    f.values.len()
                )));
            }
            if let Some(j) = f.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature {i} value {j}")));
            }
            data.extend_from_slice(&f.values);
        }
        Ok(Self {
            rows: features.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The transpose, so that columns become contiguous rows.
    pub fn columns(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Flattened multi-feature activations of every image, computed in
/// inference mode `chunk` images at a time.
pub fn extract_features(
    disc: &mut Discriminator,
    images: &Tensor,
    labels: &[usize],
    k: usize,
    chunk: usize,
) -> Result<Vec<FeatureVector>> {
    let n = images.shape()[0];
    if labels.len() != n {
        return Err(Error::Data(format!("{n} images but {} labels", labels.len())));
    }
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(chunk) {
        let idx: Vec<usize> = (start..(start + chunk).min(n)).collect();
        let feats = disc.features(&gather(images, &idx), k)?;
        let dim = feats.shape()[1];
        for (row, &i) in idx.iter().enumerate() {
            out.push(FeatureVector {
                values: feats.data()[row * dim..(row + 1) * dim].to_vec(),
                label: labels[i],
                source: i,
            });
        }
    }
    Ok(out)
}

/// Raw pixels as features, the baseline representation.
pub fn pixel_features(images: &Tensor, labels: &[usize]) -> Result<Vec<FeatureVector>> {
    let n = images.shape()[0];
    if labels.len() != n {
        return Err(Error::Data(format!("{n} images but {} labels", labels.len())));
    }
    let per = images.len() / n;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &label)| FeatureVector {
            values: images.data()[i * per..(i + 1) * per].to_vec(),
            label,
            source: i,
        })
        .collect())
}

/// Per-dimension mean and standard deviation fitted on a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[FeatureVector]) -> Result<Self> {
        let x = Matrix::from_features(features)?;
        let n = x.rows as f64;
        let mut mean = vec![0.0; x.cols];
        for i in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; x.cols];
        for i in 0..x.rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, features: &[FeatureVector]) -> Vec<FeatureVector> {
        features
            .iter()
            .map(|f| FeatureVector {
                values: f
                    .values
                    .iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) * s)
                    .collect(),
                ..f.clone()
            })
            .collect()
    }
}

pub fn encode_features(features: &[FeatureVector]) -> Result<Vec<u8>> {
    let dim = features.first().map_or(0, |f| f.values.len());
    let mut out = Vec::with_capacity(12 + features.len() * (4 + 4 * dim));
    out.extend_from_slice(FEAT_MAGIC);
    out.extend_from_slice(&(features.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (i, f) in features.iter().enumerate() {
        if f.values.len() != dim {
            return Err(Error::Data(format!("feature {i} has dimension {}, expected {dim}", f.values.len())));
        }
        out.extend_from_slice(&(f.label as u32).to_le_bytes());
        for &v in &f.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode a FEAT file; `source` is the record index.
pub fn decode_features(bytes: &[u8], path: &Path) -> Result<Vec<FeatureVector>> {
    let fail = |d: String| Error::format(path, d);
    if bytes.len() < 12 || &bytes[..4] != FEAT_MAGIC {
        return Err(fail("bad magic, not a feature file".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (count, dim) = (u32_at(4), u32_at(8));
    let record = 4 + 4 * dim;
    let expected = 12 + count * record;
    if bytes.len() != expected {
        return Err(fail(format!(
            "expected {expected} bytes for {count} records of dimension {dim}, found {}",
            bytes.len()
        )));
    }
    Ok((0..count)
        .map(|i| {
            let o = 12 + i * record;
            FeatureVector {
                label: u32_at(o),
                values: bytes[o + 4..o + record]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                source: i,
            }
        })
        .collect())
}

pub fn write_features(path: &Path, features: &[FeatureVector]) -> Result<()> {
    write_atomic(path, &encode_features(features)?)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    decode_features(&read_file(path)?, path)
}
