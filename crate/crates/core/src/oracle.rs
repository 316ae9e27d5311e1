//! Direct-loop reference implementations used to check the GEMM-lowered
//! operations. Deliberately naive: every output element is computed from its
//! textbook definition with no shared lowering code.

use crate::autodiff::Tensor;

/// `out[n,f,y,x] = b[f] + Σ_{c,i,j} in[n,c,y·s+i-p, x·s+j-p] · w[f,c,i,j]`.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let (n, c, h, w) = dims4(input);
    let (f, _, k, _) = dims4(weight);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let (x, wt) = (input.data(), weight.data());
    Tensor::from_fn(&[n, f, oh, ow], |idx| {
        let ox = idx % ow;
        let oy = (idx / ow) % oh;
        let fi = (idx / (ow * oh)) % f;
        let ni = idx / (ow * oh * f);
        let mut acc = bias.map_or(0.0, |b| b.data()[fi]);
        for ci in 0..c {
            for i in 0..k {
                for j in 0..k {
                    let iy = (oy * stride + i) as isize - pad as isize;
                    let ix = (ox * stride + j) as isize - pad as isize;
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                        continue;
                    }
                    acc += x[((ni * c + ci) * h + iy as usize) * w + ix as usize]
                        * wt[((fi * c + ci) * k + i) * k + j];
                }
            }
        }
        acc
    })
}

/// Scatter definition: every input pixel stamps `in · w[c,f]` onto the
/// output at offset `(y·s - p, x·s - p)`.
pub fn conv_transpose2d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let (n, c, h, w) = dims4(input);
    let (_, f, k, _) = dims4(weight);
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (w - 1) * stride + k - 2 * pad;
    let mut out = vec![0.0; n * f * oh * ow];
    let (x, wt) = (input.data(), weight.data());
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let v = x[((ni * c + ci) * h + y) * w + xx];
                    for fi in 0..f {
                        for i in 0..k {
                            for j in 0..k {
                                let oy = (y * stride + i) as isize - pad as isize;
                                let ox = (xx * stride + j) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((ni * f + fi) * oh + oy as usize) * ow + ox as usize] +=
                                    v * wt[((ci * f + fi) * k + i) * k + j];
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(b) = bias {
        for (idx, o) in out.iter_mut().enumerate() {
            *o += b.data()[(idx / (oh * ow)) % f];
        }
    }
    Tensor::new(&[n, f, oh, ow], out).expect("oracle output shape")
}

/// Triple-loop `a [n,d] · b [d,m]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, d) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..d {
                acc += a.data()[i * d + l] * b.data()[l * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    Tensor::new(&[n, m], out).expect("oracle output shape")
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 4, "oracle expects rank-4 tensors, got {s:?}");
    (s[0], s[1], s[2], s[3])
}
