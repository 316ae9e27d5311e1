use super::kernels::{self, ConvGeom, Mat};
use super::norm::{BatchNormState, NormMode};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Deliberate backward corruption used to prove the verification suite can fail.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    Conv2dBackward,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        geom: ConvGeom,
        filters: usize,
    },
    /// `geom` describes the adjoint convolution, mapping the output back to the input.
    ConvTranspose2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        geom: ConvGeom,
        in_channels: usize,
    },
    MaxPool {
        input: usize,
        argmax: Vec<usize>,
    },
    BatchNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Relu(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    LogSigmoid(usize),
    Dense {
        input: usize,
        weight: usize,
        bias: Option<usize>,
    },
    Concat {
        inputs: Vec<usize>,
        channels: Vec<usize>,
    },
    Reshape(usize),
    MeanAll(usize),
    SumAll(usize),
    MeanOverBatch(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Square(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    /// Leaf explicitly marked as requiring a gradient.
    requires_grad: bool,
    /// Some gradient-requiring leaf is reachable through this node.
    needs_grad: bool,
}

/// Single-use tape for reverse-mode differentiation.
///
/// Operations append nodes in program order, so every input id is smaller
/// than the id of the node consuming it. [`Graph::backward`] walks the tape
/// once in descending id order and then marks it consumed.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
    consumed: bool,
    fault: Option<Fault>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push_node(value, Op::Leaf, requires_grad, requires_grad)
    }

    /// Leaf whose gradient is wanted.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward pass w.r.t. a gradient-requiring leaf.
    /// Leaves the loss does not depend on get zeros.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = self.nodes.get(v.0)?;
        if !self.consumed || !node.requires_grad {
            return None;
        }
        Some(
            self.leaf_grads[v.0]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(node.value.shape())),
        )
    }

    fn push_node(&mut self, value: Tensor, op: Op, requires_grad: bool, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.push_node(value, op, false, needs_grad)
    }

    fn expect_rank(&self, op: &'static str, v: Var, rank: usize) -> Result<&[usize]> {
        let shape = self.shape(v);
        if shape.len() != rank {
            return Err(Error::shape(
                op,
                format!("expected rank {rank}, got shape {shape:?}"),
            ));
        }
        Ok(shape)
    }

    fn check_bias(&self, op: &'static str, bias: Option<Var>, len: usize) -> Result<()> {
        if let Some(b) = bias {
            if self.shape(b) != [len] {
                return Err(Error::shape(
                    op,
                    format!("bias shape {:?}, expected [{len}]", self.shape(b)),
                ));
            }
        }
        Ok(())
    }

    /// Cross-correlation of `input [N,C,H,W]` with `weight [F,C,k,k]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let &[n, c, h, w] = self.expect_rank("conv2d", input, 4)? else { unreachable!() };
        let &[f, wc, kh, kw] = self.expect_rank("conv2d", weight, 4)? else { unreachable!() };
        if wc != c || kh != kw {
            return Err(Error::shape(
                "conv2d",
                format!("input [{n},{c},{h},{w}] with {c} channels vs weight [{f},{wc},{kh},{kw}]"),
            ));
        }
        self.check_bias("conv2d", bias, f)?;
        let geom = ConvGeom::new(c, h, w, kh, stride, pad).ok_or_else(|| {
            Error::shape(
                "conv2d",
                format!("kernel {kh} stride {stride} pad {pad} does not fit {h}x{w}"),
            )
        })?;
        let out = kernels::conv_forward(
            self.value(input).data(),
            n,
            &geom,
            self.value(weight).data(),
            f,
            bias.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(&[n, f, geom.out_h, geom.out_w], out)?;
        let mut ids = vec![input.0, weight.0];
        ids.extend(bias.map(|b| b.0));
        Ok(self.push(
            value,
            Op::Conv2d {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
                geom,
                filters: f,
            },
            &ids,
        ))
    }

    /// Transposed convolution of `input [N,C,H,W]` with `weight [C,F,k,k]`;
    /// output spatial size is `(H-1)·stride - 2·pad + k`.
    ///
    /// The kernel must be divisible by the stride so every output pixel
    /// receives the same number of kernel taps.
    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let &[n, c, h, w] = self.expect_rank("conv_transpose2d", input, 4)? else { unreachable!() };
        let &[wc, f, kh, kw] = self.expect_rank("conv_transpose2d", weight, 4)? else { unreachable!() };
        if wc != c || kh != kw {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("input [{n},{c},{h},{w}] with {c} channels vs weight [{wc},{f},{kh},{kw}]"),
            ));
        }
        check_even_overlap(kh, stride)?;
        self.check_bias("conv_transpose2d", bias, f)?;
        let (oh, ow) = match ((h - 1) * stride + kh).checked_sub(2 * pad).zip(((w - 1) * stride + kw).checked_sub(2 * pad)) {
            Some((oh, ow)) if oh > 0 && ow > 0 => (oh, ow),
            _ => {
                return Err(Error::shape(
                    "conv_transpose2d",
                    format!("padding {pad} leaves no output for {h}x{w}"),
                ))
            }
        };
        let geom = ConvGeom::new(f, oh, ow, kh, stride, pad)
            .filter(|g| g.out_h == h && g.out_w == w)
            .ok_or_else(|| Error::shape("conv_transpose2d", "inconsistent geometry"))?;
        let mut out = kernels::conv_backward_input(self.value(input).data(), n, &geom, self.value(weight).data(), c);
        if let Some(b) = bias {
            let bias = self.value(b).data().to_vec();
            for sample in out.chunks_mut(f * oh * ow) {
                kernels::add_channel_bias(sample, &bias, oh * ow);
            }
        }
        let value = Tensor::new(&[n, f, oh, ow], out)?;
        let mut ids = vec![input.0, weight.0];
        ids.extend(bias.map(|b| b.0));
        Ok(self.push(
            value,
            Op::ConvTranspose2d {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
                geom,
                in_channels: c,
            },
            &ids,
        ))
    }

    /// Non-overlapping `window × window` max pooling. Window 1 is the identity.
    pub fn max_pool2d(&mut self, input: Var, window: usize) -> Result<Var> {
        let &[n, c, h, w] = self.expect_rank("max_pool2d", input, 4)? else { unreachable!() };
        if window == 0 || h % window != 0 || w % window != 0 {
            return Err(Error::shape(
                "max_pool2d",
                format!("window {window} does not divide {h}x{w}"),
            ));
        }
        let (out, argmax) = kernels::max_pool(self.value(input).data(), n * c, h, w, window);
        let value = Tensor::new(&[n, c, h / window, w / window], out)?;
        Ok(self.push(value, Op::MaxPool { input: input.0, argmax }, &[input.0]))
    }

    /// Per-channel batch normalization. `gamma` and `beta` are the bound
    /// values of `state.gamma` / `state.beta`; running statistics in `state`
    /// are updated only under [`NormMode::Train`].
    pub fn batch_norm2d(&mut self, input: Var, gamma: Var, beta: Var, state: &mut BatchNormState, mode: NormMode) -> Result<Var> {
        let &[n, c, h, w] = self.expect_rank("batch_norm2d", input, 4)? else { unreachable!() };
        if state.channels() != c || self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(
                "batch_norm2d",
                format!("{c} input channels vs state with {} channels", state.channels()),
            ));
        }
        let pixels = h * w;
        let count = (n * pixels) as f64;
        let x = self.value(input).data();
        let batch_stats = mode.uses_batch_stats();
        let (mean, var) = if batch_stats {
            let mean: Vec<f64> = kernels::channel_sums(x, n, c, pixels)
                .into_iter()
                .map(|s| s / count)
                .collect();
            let mut var = vec![0.0; c];
            for s in 0..n {
                for ch in 0..c {
                    let off = (s * c + ch) * pixels;
                    var[ch] += x[off..off + pixels]
                        .iter()
                        .map(|v| (v - mean[ch]) * (v - mean[ch]))
                        .sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count);
            (mean, var)
        } else {
            (state.running_mean.clone(), state.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.epsilon).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * pixels;
                for i in off..off + pixels {
                    xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
                    out[i] = g[ch] * xhat[i] + b[ch];
                }
            }
        }
        if mode == NormMode::Train {
            state.update_running(&mean, &var);
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                input: input.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
                batch_stats,
            },
            &[input.0, gamma.0, beta.0],
        ))
    }

    fn map_unary(&mut self, input: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let x = self.value(input);
        let value = Tensor::new(x.shape(), x.data().iter().map(|&v| f(v)).collect())
            .expect("elementwise map preserves shape");
        self.push(value, op, &[input.0])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Relu(x.0), |v| v.max(0.0))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.map_unary(x, Op::LeakyRelu(x.0, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Tanh(x.0), tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Sigmoid(x.0), sigmoid)
    }

    /// `ln σ(x)` evaluated without forming `σ(x)`.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::LogSigmoid(x.0), log_sigmoid)
    }

    /// `input [N,D] · weight [D,M] + bias [M]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let &[n, d] = self.expect_rank("dense", input, 2)? else { unreachable!() };
        let &[wd, m] = self.expect_rank("dense", weight, 2)? else { unreachable!() };
        if wd != d {
            return Err(Error::shape(
                "dense",
                format!("input [{n},{d}] vs weight [{wd},{m}]"),
            ));
        }
        self.check_bias("dense", bias, m)?;
        let mut out = vec![0.0; n * m];
        if let Some(b) = bias {
            let b = self.value(b).data();
            for row in out.chunks_mut(m) {
                row.copy_from_slice(b);
            }
        }
        kernels::gemm(
            Mat::new(self.value(input).data(), n, d),
            Mat::new(self.value(weight).data(), d, m),
            if bias.is_some() { 1.0 } else { 0.0 },
            &mut out,
        );
        let value = Tensor::new(&[n, m], out)?;
        let mut ids = vec![input.0, weight.0];
        ids.extend(bias.map(|b| b.0));
        Ok(self.push(
            value,
            Op::Dense {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
            },
            &ids,
        ))
    }

    /// Concatenate `[N,Ci,H,W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::shape("concat_channels", "no inputs"))?;
        let &[n, _, h, w] = self.expect_rank("concat_channels", first, 4)? else { unreachable!() };
        let mut channels = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.expect_rank("concat_channels", v, 4)?;
            if s[0] != n || s[2] != h || s[3] != w {
                return Err(Error::shape(
                    "concat_channels",
                    format!("{s:?} does not match batch {n} and spatial {h}x{w}"),
                ));
            }
            channels.push(s[1]);
        }
        let total: usize = channels.iter().sum();
        let pixels = h * w;
        let mut out = Vec::with_capacity(n * total * pixels);
        for s in 0..n {
            for (&v, &c) in inputs.iter().zip(&channels) {
                let data = self.value(v).data();
                out.extend_from_slice(&data[s * c * pixels..(s + 1) * c * pixels]);
            }
        }
        let value = Tensor::new(&[n, total, h, w], out)?;
        let ids: Vec<usize> = inputs.iter().map(|v| v.0).collect();
        Ok(self.push(
            value,
            Op::Concat {
                inputs: ids.clone(),
                channels,
            },
            &ids,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x.0), &[x.0]))
    }

    /// `[N, ...] -> [N, product(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        let n = shape[0];
        let rest: usize = shape[1..].iter().product();
        self.reshape(x, &[n, rest.max(1)])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(mean), Op::MeanAll(x.0), &[x.0])
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let sum = self.value(x).data().iter().sum::<f64>();
        self.push(Tensor::scalar(sum), Op::SumAll(x.0), &[x.0])
    }

    /// Average over the leading batch axis: `[N, ...] -> [...]`.
    pub fn mean_over_batch(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.rank() < 2 {
            return Err(Error::shape(
                "mean_over_batch",
                format!("need a batch axis plus features, got {:?}", t.shape()),
            ));
        }
        let n = t.shape()[0];
        let per = t.len() / n;
        let mut out = vec![0.0; per];
        for row in t.data().chunks(per) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        let value = Tensor::new(&t.shape()[1..], out)?;
        Ok(self.push(value, Op::MeanOverBatch(x.0), &[x.0]))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        Tensor::new(
            ta.shape(),
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map_unary(x, Op::Scale(x.0, factor), |v| v * factor)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map_unary(x, Op::Square(x.0), |v| v * v)
    }

    /// Propagate `d loss / d node` to every gradient-requiring leaf and
    /// consume the tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let shape = self.shape(loss).to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        self.leaf_grads = vec![None; self.nodes.len()];
        for id in (0..=loss.0).rev() {
            let Some(grad) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                if node.requires_grad {
                    self.leaf_grads[id] = Some(Tensor::new(node.value.shape(), grad)?);
                }
                continue;
            }
            for (input, g) in self.input_grads(id, &grad) {
                if !self.nodes[input].needs_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        self.consumed = true;
        Ok(())
    }

    fn wants(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    /// Vector-Jacobian products of node `id` for each of its inputs.
    fn input_grads(&self, id: usize, grad: &[f64]) -> Vec<(usize, Vec<f64>)> {
        let node = &self.nodes[id];
        let out = node.value.data();
        let val = |i: usize| self.nodes[i].value.data();
        let elementwise = |input: usize, f: &dyn Fn(usize) -> f64| -> Vec<(usize, Vec<f64>)> {
            vec![(input, grad.iter().enumerate().map(|(i, g)| g * f(i)).collect())]
        };
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                filters,
            } => {
                let n = self.nodes[*input].value.shape()[0];
                let mut res = Vec::new();
                let fault = if self.fault == Some(Fault::Conv2dBackward) { 1.01 } else { 1.0 };
                if self.wants(*input) {
                    let mut gi = kernels::conv_backward_input(grad, n, geom, val(*weight), *filters);
                    gi.iter_mut().for_each(|v| *v *= fault);
                    res.push((*input, gi));
                }
                if self.wants(*weight) {
                    let mut gw = kernels::conv_backward_weight(val(*input), grad, n, geom, *filters);
                    gw.iter_mut().for_each(|v| *v *= fault);
                    res.push((*weight, gw));
                }
                if let Some(b) = bias.filter(|&b| self.wants(b)) {
                    res.push((b, kernels::channel_sums(grad, n, *filters, geom.out_pixels())));
                }
                res
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                geom,
                in_channels,
            } => {
                // The forward pass is the input-gradient of a convolution over
                // the output; its adjoints are that convolution's forward and
                // weight-gradient passes with the roles swapped.
                let n = self.nodes[*input].value.shape()[0];
                let mut res = Vec::new();
                if self.wants(*input) {
                    res.push((
                        *input,
                        kernels::conv_forward(grad, n, geom, val(*weight), *in_channels, None),
                    ));
                }
                if self.wants(*weight) {
                    res.push((
                        *weight,
                        kernels::conv_backward_weight(grad, val(*input), n, geom, *in_channels),
                    ));
                }
                if let Some(b) = bias.filter(|&b| self.wants(b)) {
                    res.push((b, kernels::channel_sums(grad, n, geom.channels, geom.in_pixels())));
                }
                res
            }
            Op::MaxPool { input, argmax } => {
                let mut g = vec![0.0; self.nodes[*input].value.len()];
                for (src, &dst) in argmax.iter().enumerate() {
                    g[dst] += grad[src];
                }
                vec![(*input, g)]
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let shape = self.nodes[*input].value.shape();
                let (n, c, pixels) = (shape[0], shape[1], shape[2] * shape[3]);
                let count = (n * pixels) as f64;
                let gam = val(*gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for s in 0..n {
                    for ch in 0..c {
                        let off = (s * c + ch) * pixels;
                        for i in off..off + pixels {
                            dgamma[ch] += grad[i] * xhat[i];
                            dbeta[ch] += grad[i];
                        }
                    }
                }
                let mut res = Vec::new();
                if self.wants(*input) {
                    let mut dx = vec![0.0; grad.len()];
                    for s in 0..n {
                        for ch in 0..c {
                            let off = (s * c + ch) * pixels;
                            for i in off..off + pixels {
                                dx[i] = if *batch_stats {
                                    // dxhat sums are gamma·dbeta and gamma·dgamma.
                                    gam[ch] * inv_std[ch] / count
                                        * (count * grad[i] - dbeta[ch] - xhat[i] * dgamma[ch])
                                } else {
                                    gam[ch] * inv_std[ch] * grad[i]
                                };
                            }
                        }
                    }
                    res.push((*input, dx));
                }
                res.push((*gamma, dgamma));
                res.push((*beta, dbeta));
                res
            }
            Op::Relu(x) => {
                let xv = val(*x);
                elementwise(*x, &|i| if xv[i] > 0.0 { 1.0 } else { 0.0 })
            }
            Op::LeakyRelu(x, slope) => {
                let xv = val(*x);
                elementwise(*x, &|i| if xv[i] > 0.0 { 1.0 } else { *slope })
            }
            Op::Tanh(x) => elementwise(*x, &|i| 1.0 - out[i] * out[i]),
            Op::Sigmoid(x) => elementwise(*x, &|i| out[i] * (1.0 - out[i])),
            Op::LogSigmoid(x) => {
                let xv = val(*x);
                elementwise(*x, &|i| sigmoid(-xv[i]))
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let &[n, d] = self.nodes[*input].value.shape() else { unreachable!() };
                let m = node.value.shape()[1];
                let go = Mat::new(grad, n, m);
                let mut res = Vec::new();
                if self.wants(*input) {
                    let mut gi = vec![0.0; n * d];
                    kernels::gemm(go, Mat::new(val(*weight), d, m).t(), 0.0, &mut gi);
                    res.push((*input, gi));
                }
                if self.wants(*weight) {
                    let mut gw = vec![0.0; d * m];
                    kernels::gemm(Mat::new(val(*input), n, d).t(), go, 0.0, &mut gw);
                    res.push((*weight, gw));
                }
                if let Some(b) = bias.filter(|&b| self.wants(b)) {
                    let mut gb = vec![0.0; m];
                    for row in grad.chunks(m) {
                        gb.iter_mut().zip(row).for_each(|(a, g)| *a += g);
                    }
                    res.push((b, gb));
                }
                res
            }
            Op::Concat { inputs, channels } => {
                let shape = node.value.shape();
                let (n, pixels) = (shape[0], shape[2] * shape[3]);
                let total: usize = channels.iter().sum();
                let mut offset = 0;
                let mut res = Vec::with_capacity(inputs.len());
                for (&input, &c) in inputs.iter().zip(channels) {
                    let mut g = Vec::with_capacity(n * c * pixels);
                    for s in 0..n {
                        let start = (s * total + offset) * pixels;
                        g.extend_from_slice(&grad[start..start + c * pixels]);
                    }
                    offset += c;
                    res.push((input, g));
                }
                res
            }
            Op::Reshape(x) => vec![(*x, grad.to_vec())],
            Op::MeanAll(x) => {
                let len = self.nodes[*x].value.len();
                vec![(*x, vec![grad[0] / len as f64; len])]
            }
            Op::SumAll(x) => vec![(*x, vec![grad[0]; self.nodes[*x].value.len()])],
            Op::MeanOverBatch(x) => {
                let t = &self.nodes[*x].value;
                let n = t.shape()[0];
                let mut g = Vec::with_capacity(t.len());
                for _ in 0..n {
                    g.extend(grad.iter().map(|v| v / n as f64));
                }
                vec![(*x, g)]
            }
            Op::Add(a, b) => vec![(*a, grad.to_vec()), (*b, grad.to_vec())],
            Op::Sub(a, b) => vec![(*a, grad.to_vec()), (*b, grad.iter().map(|g| -g).collect())],
            Op::Scale(x, factor) => elementwise(*x, &|_| *factor),
            Op::Square(x) => {
                let xv = val(*x);
                elementwise(*x, &|i| 2.0 * xv[i])
            }
        }
    }
}

/// Rejects transposed-convolution configurations whose kernel overlaps
/// unevenly, which produces checkerboard artifacts.
pub fn check_even_overlap(kernel: usize, stride: usize) -> Result<()> {
    if stride == 0 || !kernel.is_multiple_of(stride) {
        return Err(Error::Config(format!(
            "kernel size {kernel} is not divisible by stride {stride}; \
             transposed convolution would overlap unevenly (checkerboard artifacts)"
        )));
    }
    Ok(())
}

/// Largest `f64` strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept inside the open interval (0, 1) even where the
/// exact value rounds to an endpoint.
pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// Hyperbolic tangent kept inside the open interval (-1, 1).
pub fn tanh(x: f64) -> f64 {
    x.tanh().clamp(-BELOW_ONE, BELOW_ONE)
}

pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}
