//! Raw numeric kernels behind the graph operations: im2col/col2im lowering of
//! (transposed) convolution onto GEMM, pooling and batch statistics.
//!
//! All loops accumulate in a fixed order so results are bitwise reproducible.

/// Geometry of a square-kernel 2-D convolution over one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || kernel == 0 || height + 2 * pad < kernel || width + 2 * pad < kernel {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel) / stride + 1,
            out_w: (width + 2 * pad - kernel) / stride + 1,
        })
    }

    /// Rows of the lowered patch matrix.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Unroll patches of `img` (`channels × height × width`) into `cols`
/// (`patch_len × out_pixels`), zero where the window hangs over the padding.
pub(crate) fn im2col(img: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let k = g.kernel;
    let npix = g.out_pixels();
    for c in 0..g.channels {
        let plane = &img[c * g.in_pixels()..(c + 1) * g.in_pixels()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * npix..(row + 1) * npix];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `cols` back onto `img`.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, img: &mut [f64]) {
    let k = g.kernel;
    let npix = g.out_pixels();
    for c in 0..g.channels {
        let plane = &mut img[c * g.in_pixels()..(c + 1) * g.in_pixels()];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * npix..(row + 1) * npix];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Row-major matrix operand: data plus whether it is read transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a·b + beta·out` with `out` row-major `m × n`.
pub(crate) fn gemm(a: Mat<'_>, b: Mat<'_>, beta: f64, out: &mut [f64]) {
    let (m, k) = a.logical();
    let (k2, n) = b.logical();
    assert_eq!(k, k2, "gemm inner dimension mismatch");
    assert_eq!(out.len(), m * n, "gemm output size mismatch");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the operand slices were checked to cover rows × cols elements
    // and the strides describe exactly those layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward convolution for a batch. `weight` is `filters × patch_len`.
pub(crate) fn conv_forward(input: &[f64], batch: usize, g: &ConvGeom, weight: &[f64], filters: usize, bias: Option<&[f64]>) -> Vec<f64> {
    let in_len = g.channels * g.in_pixels();
    let out_len = filters * g.out_pixels();
    let mut out = vec![0.0; batch * out_len];
    let mut cols = vec![0.0; g.patch_len() * g.out_pixels()];
    let w = Mat::new(weight, filters, g.patch_len());
    for n in 0..batch {
        im2col(&input[n * in_len..(n + 1) * in_len], g, &mut cols);
        let dst = &mut out[n * out_len..(n + 1) * out_len];
        gemm(w, Mat::new(&cols, g.patch_len(), g.out_pixels()), 0.0, dst);
        if let Some(b) = bias {
            add_channel_bias(dst, b, g.out_pixels());
        }
    }
    out
}

/// Gradient of a convolution w.r.t. its input (equivalently, the forward pass
/// of the transposed convolution with the same weights).
pub(crate) fn conv_backward_input(grad_out: &[f64], batch: usize, g: &ConvGeom, weight: &[f64], filters: usize) -> Vec<f64> {
    let in_len = g.channels * g.in_pixels();
    let out_len = filters * g.out_pixels();
    let mut grad_in = vec![0.0; batch * in_len];
    let mut cols = vec![0.0; g.patch_len() * g.out_pixels()];
    let w = Mat::new(weight, filters, g.patch_len());
    for n in 0..batch {
        let go = Mat::new(&grad_out[n * out_len..(n + 1) * out_len], filters, g.out_pixels());
        gemm(w.t(), go, 0.0, &mut cols);
        col2im(&cols, g, &mut grad_in[n * in_len..(n + 1) * in_len]);
    }
    grad_in
}

/// Gradient of a convolution w.r.t. its weights, accumulated over the batch in order.
pub(crate) fn conv_backward_weight(input: &[f64], grad_out: &[f64], batch: usize, g: &ConvGeom, filters: usize) -> Vec<f64> {
    let in_len = g.channels * g.in_pixels();
    let out_len = filters * g.out_pixels();
    let mut grad_w = vec![0.0; filters * g.patch_len()];
    let mut cols = vec![0.0; g.patch_len() * g.out_pixels()];
    for n in 0..batch {
        im2col(&input[n * in_len..(n + 1) * in_len], g, &mut cols);
        let go = Mat::new(&grad_out[n * out_len..(n + 1) * out_len], filters, g.out_pixels());
        gemm(go, Mat::new(&cols, g.patch_len(), g.out_pixels()).t(), 1.0, &mut grad_w);
    }
    grad_w
}

pub(crate) fn add_channel_bias(plane_major: &mut [f64], bias: &[f64], pixels: usize) {
    for (c, b) in bias.iter().enumerate() {
        for v in &mut plane_major[c * pixels..(c + 1) * pixels] {
            *v += b;
        }
    }
}

/// Per-channel sum of an `N × C × P` buffer.
pub(crate) fn channel_sums(data: &[f64], batch: usize, channels: usize, pixels: usize) -> Vec<f64> {
    let mut sums = vec![0.0; channels];
    for n in 0..batch {
        for (c, s) in sums.iter_mut().enumerate() {
            let off = (n * channels + c) * pixels;
            *s += data[off..off + pixels].iter().sum::<f64>();
        }
    }
    sums
}

/// Non-overlapping max pooling over `N·C` planes. Returns values and the flat
/// input index of each window's first maximum in scan order.
pub(crate) fn max_pool(input: &[f64], planes: usize, h: usize, w: usize, window: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / window, w / window);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * window * w + ox * window;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = base + (oy * window + dy) * w + ox * window + dx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}
