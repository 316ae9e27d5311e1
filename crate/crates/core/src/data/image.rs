//! Image records, [-1, 1] scaling, PNG codec and the augmentation set.

use std::io::Cursor;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::autodiff::{read_tensor, Tensor};
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};

/// Pixel transform applied to an image, all exact permutations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugTag {
    Original,
    Hflip,
    Vflip,
    Rot90,
    Rot180,
    Rot270,
    Transpose,
    AntiTranspose,
}

impl AugTag {
    /// Source coordinates `(row, col)` of output pixel `(i, j)` in an `n × n` image.
    fn source(self, i: usize, j: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        match self {
            AugTag::Original => (i, j),
            AugTag::Hflip => (i, m - j),
            AugTag::Vflip => (m - i, j),
            // counter-clockwise quarter turn
            AugTag::Rot90 => (j, m - i),
            AugTag::Rot180 => (m - i, m - j),
            AugTag::Rot270 => (m - j, i),
            AugTag::Transpose => (j, i),
            AugTag::AntiTranspose => (m - j, m - i),
        }
    }
}

/// Which variants [`augment`] emits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    /// Add the 180 and 270 degree rotations.
    pub all_rotations: bool,
    /// Emit the full dihedral group of eight symmetries.
    pub dihedral: bool,
}

impl AugmentSpec {
    pub fn tags(&self) -> Vec<AugTag> {
        use AugTag::*;
        let mut tags = vec![Original, Hflip, Vflip, Rot90];
        if self.all_rotations || self.dihedral {
            tags.extend([Rot180, Rot270]);
        }
        if self.dihedral {
            tags.extend([Transpose, AntiTranspose]);
        }
        tags
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    /// `[C, H, W]`, values in `[-1, 1]`.
    pub pixels: Tensor,
    pub label: usize,
    /// Source path or synthetic recipe id.
    pub origin: String,
    /// Dataset index of the original image this record derives from.
    pub origin_id: usize,
    pub tag: AugTag,
}

/// Apply `tag` to a square `[C, n, n]` image.
pub fn transform(pixels: &Tensor, tag: AugTag) -> Tensor {
    let s = pixels.shape();
    let (c, n) = (s[0], s[1]);
    assert_eq!(s[1], s[2], "augmentation needs a square image");
    let src = pixels.data();
    Tensor::from_fn(&[c, n, n], |idx| {
        let (ch, rest) = (idx / (n * n), idx % (n * n));
        let (r, col) = tag.source(rest / n, rest % n, n);
        src[ch * n * n + r * n + col]
    })
}

/// Every variant of `record` listed by `spec`, each tagged, label preserved.
pub fn augment(record: &ImageRecord, spec: &AugmentSpec) -> Vec<ImageRecord> {
    spec.tags()
        .into_iter()
        .map(|tag| ImageRecord {
            pixels: transform(&record.pixels, tag),
            tag,
            ..record.clone()
        })
        .collect()
}

/// `v / 127.5 − 1`.
pub fn scale_byte(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

/// Inverse of [`scale_byte`], rounded and clamped to the byte range.
pub fn unscale(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Decode an 8-bit grey or RGB PNG into `[C, H, W]` scaled to `[-1, 1]`.
pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("cannot decode PNG: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img.color() {
        ColorType::L8 => (1, img.into_luma8().into_raw()),
        ColorType::Rgb8 => (3, img.into_rgb8().into_raw()),
        other => return Err(Error::format(path, format!("unsupported PNG color type {other:?}, need 8-bit grey or RGB"))),
    };
    Ok(Tensor::from_fn(&[channels, h, w], |idx| {
        let (ch, rest) = (idx / (h * w), idx % (h * w));
        scale_byte(raw[rest * channels + ch])
    }))
}

/// Encode `[C, H, W]` (`C` = 1 or 3) in `[-1, 1]` as an 8-bit PNG.
pub fn encode_png(pixels: &Tensor) -> Result<Vec<u8>> {
    let s = pixels.shape();
    if s.len() != 3 || !(s[0] == 1 || s[0] == 3) {
        return Err(Error::shape("encode_png", format!("need [1|3, H, W], got {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let data = pixels.data();
    let mut raw = vec![0u8; c * h * w];
    for ch in 0..c {
        for p in 0..h * w {
            raw[p * c + ch] = unscale(data[ch * h * w + p]);
        }
    }
    let img = if c == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer size"))
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer size"))
    };
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Data(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn write_png(path: &Path, pixels: &Tensor) -> Result<()> {
    write_atomic(path, &encode_png(pixels)?)
}

/// Load a PNG (scaled) or TNSR dump (used as stored) as `[C, H, W]`.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let t = if is_png {
        decode_png(&read_file(path)?, path)?
    } else {
        read_tensor(path)?
    };
    match t.shape() {
        [_, _, _] => Ok(t),
        [1, c, h, w] => t.reshape(&[*c, *h, *w]),
        s => Err(Error::format(path, format!("expected an image [C, H, W], found shape {s:?}"))),
    }
}

/// Tile `[N, C, H, W]` images into one `[C, rows·H, cols·W]` image, filling
/// row by row; unused cells stay at -1.
pub fn sample_grid(images: &Tensor, cols: usize) -> Result<Tensor> {
    let s = images.shape();
    if s.len() != 4 || cols == 0 {
        return Err(Error::shape("sample_grid", format!("need [N, C, H, W], got {s:?}")));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let rows = n.div_ceil(cols);
    let (gh, gw) = (rows * h, cols * w);
    let src = images.data();
    let mut out = vec![-1.0; c * gh * gw];
    for k in 0..n {
        let (r0, c0) = ((k / cols) * h, (k % cols) * w);
        for ch in 0..c {
            for y in 0..h {
                let from = ((k * c + ch) * h + y) * w;
                let to = ch * gh * gw + (r0 + y) * gw + c0;
                out[to..to + w].copy_from_slice(&src[from..from + w]);
            }
        }
    }
    Tensor::new(&[c, gh, gw], out)
}
