//! Raw tensor dump: 16-byte header then little-endian `f32` payload.
//!
//! Header layout: magic `TNSR`, `u32` rank (1..=4), four `u16` dims (unused
//! trailing dims are zero).

use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const TNSR_MAGIC: &[u8; 4] = b"TNSR";
const MAX_RANK: usize = 4;

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    if t.rank() > MAX_RANK || t.shape().iter().any(|&d| d > u16::MAX as usize) {
        return Err(Error::shape(
            "tensor dump",
            format!("shape {:?} exceeds rank 4 / u16 dims", t.shape()),
        ));
    }
    let mut out = Vec::with_capacity(16 + 4 * t.len());
    out.extend_from_slice(TNSR_MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for i in 0..MAX_RANK {
        let d = t.shape().get(i).copied().unwrap_or(0) as u16;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor> {
    if bytes.len() < 16 || &bytes[..4] != TNSR_MAGIC {
        return Err(Error::format(path, "not a TNSR tensor dump (bad magic)"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::format(path, format!("unsupported rank {rank}")));
    }
    let shape: Vec<usize> = (0..rank)
        .map(|i| u16::from_le_bytes([bytes[8 + 2 * i], bytes[9 + 2 * i]]) as usize)
        .collect();
    let n: usize = shape.iter().product();
    let payload = &bytes[16..];
    if payload.len() != 4 * n {
        return Err(Error::format(
            path,
            format!("shape {shape:?} needs {} payload bytes, found {}", 4 * n, payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(&shape, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let bytes = encode_tensor(t)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_sixteen_bytes() {
        let t = Tensor::from_fn(&[3, 4, 4], |i| i as f64 * 0.25);
        let bytes = encode_tensor(&t).unwrap();
        assert_eq!(bytes.len(), 16 + 48 * 4);
        let back = decode_tensor(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_truncated_payload() {
        let t = Tensor::zeros(&[2, 2]);
        let bytes = encode_tensor(&t).unwrap();
        assert!(decode_tensor(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
        assert!(decode_tensor(b"NOPE0000000000000000", Path::new("mem")).is_err());
    }
}
