//! Binary snapshot of a [`Trainer`].
//!
//! Layout (little-endian): magic `MRTA`, `u32` version, `u32` tensor count,
//! then per tensor a `u16` name length, the UTF-8 name, a `u8` dtype code
//! (0 = f32, 1 = f64), a `u8` rank, `u32` dims and the raw payload; finally a
//! `u32` iteration counter. Tensors are written as f64 so a reload is
//! bit-exact; f32 payloads are accepted and widened.

use std::collections::HashMap;
use std::path::Path;

use super::adam::AdamState;
use super::config::{LossMode, TrainConfig};
use super::trainer::Trainer;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};
use crate::model::{ArchConfig, Discriminator, Generator, Module};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MRTA";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

/// Named tensors plus the iteration counter, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub iteration: u32,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Data(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(DTYPE_F64);
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.iteration.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let fail = |detail: String| Error::format(path, detail);
        if r.take(4) != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(fail("bad magic, not a checkpoint".into()));
        }
        let version = r.u32().ok_or_else(|| fail("truncated header".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(fail(format!(
                "checkpoint version {version}, this build reads version {CHECKPOINT_VERSION}"
            )));
        }
        let count = r.u32().ok_or_else(|| fail("truncated header".into()))? as usize;
        let mut tensors: Vec<(String, Tensor)> = Vec::with_capacity(count);
        for i in 0..count {
            let missing = || {
                let after = tensors
                    .last()
                    .map(|(n, _)| format!(" (after '{n}')"))
                    .unwrap_or_default();
                fail(format!("truncated: tensor {} of {count} missing{after}", i + 1))
            };
            let name_len = r.u16().ok_or_else(missing)? as usize;
            let name = r.take(name_len).ok_or_else(missing)?;
            let name = String::from_utf8(name.to_vec())
                .map_err(|_| fail(format!("tensor {} has a non-UTF-8 name", i + 1)))?;
            let inside = |what: &str| fail(format!("truncated inside tensor '{name}' ({what})"));
            let dtype = r.u8().ok_or_else(|| inside("dtype"))?;
            let rank = r.u8().ok_or_else(|| inside("rank"))? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| inside("dims"))?;
            let n: usize = shape.iter().product();
            let data: Vec<f64> = match dtype {
                DTYPE_F64 => r
                    .take(8 * n)
                    .ok_or_else(|| inside("payload"))?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                DTYPE_F32 => r
                    .take(4 * n)
                    .ok_or_else(|| inside("payload"))?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                other => return Err(fail(format!("tensor '{name}' has unknown dtype {other}"))),
            };
            let t = Tensor::new(&shape, data).map_err(|e| fail(format!("tensor '{name}': {e}")))?;
            tensors.push((name, t));
        }
        let iteration = r
            .u32()
            .ok_or_else(|| fail("truncated: missing iteration counter".into()))?;
        if r.pos != bytes.len() {
            return Err(fail(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { tensors, iteration })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

fn vector(values: Vec<f64>) -> Tensor {
    let n = values.len();
    Tensor::new(&[n], values).expect("non-empty vector")
}

fn encode_arch(a: &ArchConfig) -> Tensor {
    vector(
        [
            a.image_size,
            a.image_channels,
            a.z_dim,
            a.base_width,
            a.max_width,
            a.fusion_depth,
        ]
        .iter()
        .map(|&v| v as f64)
        .collect(),
    )
}

fn decode_arch(t: &Tensor) -> Result<ArchConfig> {
    let v = t.data();
    if v.len() != 6 {
        return Err(Error::Data("meta.arch must hold 6 values".into()));
    }
    Ok(ArchConfig {
        image_size: v[0] as usize,
        image_channels: v[1] as usize,
        z_dim: v[2] as usize,
        base_width: v[3] as usize,
        max_width: v[4] as usize,
        fusion_depth: v[5] as usize,
    })
}

fn encode_train(c: &TrainConfig) -> Tensor {
    vector(vec![
        c.learning_rate,
        c.beta1,
        c.beta2,
        c.adam_eps,
        c.batch_size as f64,
        c.epochs as f64,
        c.max_iterations.map_or(-1.0, |m| m as f64),
        c.d_steps_per_g_step as f64,
        match c.loss_mode {
            LossMode::PerceptualOnly => 0.0,
            LossMode::Final => 1.0,
        },
        if c.non_saturating { 1.0 } else { 0.0 },
        (c.seed >> 32) as f64,
        (c.seed & 0xffff_ffff) as f64,
    ])
}

fn decode_train(t: &Tensor) -> Result<TrainConfig> {
    let v = t.data();
    if v.len() != 12 {
        return Err(Error::Data("meta.train must hold 12 values".into()));
    }
    Ok(TrainConfig {
        learning_rate: v[0],
        beta1: v[1],
        beta2: v[2],
        adam_eps: v[3],
        batch_size: v[4] as usize,
        epochs: v[5] as usize,
        max_iterations: (v[6] >= 0.0).then_some(v[6] as u64),
        d_steps_per_g_step: v[7] as usize,
        loss_mode: if v[8] == 0.0 {
            LossMode::PerceptualOnly
        } else {
            LossMode::Final
        },
        non_saturating: v[9] != 0.0,
        seed: ((v[10] as u64) << 32) | v[11] as u64,
    })
}

fn owned(params: Vec<(String, &Tensor)>) -> Vec<(String, Tensor)> {
    params.into_iter().map(|(n, t)| (n, t.clone())).collect()
}

fn push_adam(out: &mut Vec<(String, Tensor)>, prefix: &str, names: &[(String, Tensor)], state: &AdamState) {
    out.push((format!("{prefix}.step"), vector(vec![state.step as f64])));
    for ((name, p), (m, v)) in names.iter().zip(state.m.iter().zip(&state.v)) {
        out.push((format!("{prefix}.m.{name}"), Tensor::new(p.shape(), m.clone()).unwrap()));
        out.push((format!("{prefix}.v.{name}"), Tensor::new(p.shape(), v.clone()).unwrap()));
    }
}

fn read_adam(map: &HashMap<String, Tensor>, prefix: &str, params: &[(String, Tensor)]) -> Result<AdamState> {
    let get = |name: String| {
        map.get(&name)
            .ok_or_else(|| Error::Data(format!("checkpoint is missing tensor '{name}'")))
    };
    let step = get(format!("{prefix}.step"))?.item() as u64;
    let mut m = Vec::with_capacity(params.len());
    let mut v = Vec::with_capacity(params.len());
    for (name, p) in params {
        for (dst, kind) in [(&mut m, "m"), (&mut v, "v")] {
            let t = get(format!("{prefix}.{kind}.{name}"))?;
            if t.len() != p.len() {
                return Err(Error::Data(format!("optimizer tensor {prefix}.{kind}.{name} has the wrong size")));
            }
            dst.push(t.data().to_vec());
        }
    }
    Ok(AdamState { m, v, step })
}

impl Trainer {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let iteration = u32::try_from(self.iteration)
            .map_err(|_| Error::Data("iteration counter exceeds u32".into()))?;
        let mut tensors = vec![
            ("meta.arch".to_string(), encode_arch(self.arch())),
            ("meta.train".to_string(), encode_train(&self.config)),
        ];
        let gen_params = owned(self.generator.parameters());
        let disc_params = owned(self.discriminator.parameters());
        tensors.extend(self.generator.state_tensors());
        tensors.extend(self.discriminator.state_tensors());
        push_adam(&mut tensors, "opt.g", &gen_params, &self.gen_opt);
        push_adam(&mut tensors, "opt.d", &disc_params, &self.disc_opt);
        Ok(Checkpoint { tensors, iteration })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let map: HashMap<String, Tensor> = ck.tensors.iter().cloned().collect();
        let meta = |name: &str| {
            map.get(name)
                .ok_or_else(|| Error::Data(format!("checkpoint is missing tensor '{name}'")))
        };
        let arch = decode_arch(meta("meta.arch")?)?;
        let config = decode_train(meta("meta.train")?)?;
        let mut generator = Generator::new(&arch, config.seed)?;
        let mut discriminator = Discriminator::new(&arch, config.seed)?;
        generator.load_state(&map)?;
        discriminator.load_state(&map)?;
        let gen_params = owned(generator.parameters());
        let disc_params = owned(discriminator.parameters());
        let mut trainer = Trainer::with_models(generator, discriminator, config)?;
        trainer.gen_opt = read_adam(&map, "opt.g", &gen_params)?;
        trainer.disc_opt = read_adam(&map, "opt.d", &disc_params)?;
        trainer.iteration = ck.iteration as u64;
        Ok(trainer)
    }
}

/// Atomically write the trainer snapshot to `path`.
pub fn save_checkpoint(path: &Path, trainer: &Trainer) -> Result<()> {
    write_atomic(path, &trainer.to_checkpoint()?.encode()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let bytes = read_file(path)?;
    let ck = Checkpoint::decode(&bytes, path)?;
    Trainer::from_checkpoint(&ck).map_err(|e| Error::format(path, e.to_string()))
}
