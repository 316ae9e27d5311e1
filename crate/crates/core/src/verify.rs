//! Built-in correctness suite: gradient checks, direct-loop oracles, the
//! even-coverage property of transposed convolution, loss identities, Adam
//! and the SVM analytic case.

use std::f64::consts::LN_2;
use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::autodiff::{check_even_overlap, grad_check, BatchNormState, Fault, Graph, NormMode, Tensor, Var};
use crate::classify::{train_svm, FeatureVector, SvmConfig};
use crate::error::Result;
use crate::oracle;
use crate::rng::{normal_tensor, seeded, uniform_tensor, SeededRng};
use crate::train::{adam_step, d_loss, g_feature_match_loss, g_perceptual_loss, AdamConfig, AdamState};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const CONV_ORACLE_TOLERANCE: f64 = 1e-6;
pub const DENSE_ORACLE_TOLERANCE: f64 = 1e-9;
pub const LOSS_TOLERANCE: f64 = 1e-9;
pub const ADAM_TOLERANCE: f64 = 1e-12;
pub const SVM_TOLERANCE: f64 = 1e-3;
const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:>12.3e} {:>10.1e}  {}",
            self.name,
            self.measured,
            self.threshold,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seeds: u64,
    pub oracle_shapes: usize,
    /// Corrupt a backward rule in every checked graph.
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: 5,
            oracle_shapes: 25,
            fault: None,
        }
    }
}

/// Reduce a graph output to a scalar whose gradient exercises every element:
/// `Σ (y − r)²` for a fixed random `r`.
fn project(g: &mut Graph, y: Var, rng_seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let r = g.constant(normal_tensor(&mut seeded(rng_seed, 99), &shape, 1.0));
    let d = g.sub(y, r)?;
    let sq = g.square(d);
    Ok(g.sum_all(sq))
}

type Op = fn(&mut Graph, &[Var]) -> Result<Var>;

fn gradient_cases(rng: &mut SeededRng) -> Vec<(&'static str, Op, Vec<Tensor>)> {
    let u = |rng: &mut SeededRng, s: &[usize]| uniform_tensor(rng, s, -1.0, 1.0);
    vec![
        (
            "conv2d",
            |g, v| g.conv2d(v[0], v[1], Some(v[2]), 2, 1),
            vec![u(rng, &[2, 2, 6, 6]), u(rng, &[3, 2, 4, 4]), u(rng, &[3])],
        ),
        (
            "conv_transpose2d",
            |g, v| g.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1),
            vec![u(rng, &[2, 3, 3, 3]), u(rng, &[3, 2, 4, 4]), u(rng, &[2])],
        ),
        ("max_pool2d", |g, v| g.max_pool2d(v[0], 2), vec![u(rng, &[2, 2, 4, 4])]),
        (
            "batch_norm2d",
            |g, v| {
                let mut state = BatchNormState::new(g.shape(v[0])[1]);
                g.batch_norm2d(v[0], v[1], v[2], &mut state, NormMode::Train)
            },
            vec![u(rng, &[3, 2, 3, 3]), u(rng, &[2]), u(rng, &[2])],
        ),
        (
            "dense",
            |g, v| g.dense(v[0], v[1], Some(v[2])),
            vec![u(rng, &[3, 5]), u(rng, &[5, 4]), u(rng, &[4])],
        ),
        ("relu", |g, v| Ok(g.relu(v[0])), vec![u(rng, &[4, 5])]),
        ("leaky_relu", |g, v| Ok(g.leaky_relu(v[0], 0.2)), vec![u(rng, &[4, 5])]),
        ("tanh", |g, v| Ok(g.tanh(v[0])), vec![u(rng, &[4, 5])]),
        ("sigmoid", |g, v| Ok(g.sigmoid(v[0])), vec![u(rng, &[4, 5])]),
        ("log_sigmoid", |g, v| Ok(g.log_sigmoid(v[0])), vec![normal_tensor(rng, &[4, 5], 3.0)]),
        (
            "concat_channels",
            |g, v| g.concat_channels(&[v[0], v[1]]),
            vec![u(rng, &[2, 1, 2, 2]), u(rng, &[2, 3, 2, 2])],
        ),
    ]
}

type LossOp = fn(&mut Graph, &[Var]) -> Result<Var>;

fn loss_cases(rng: &mut SeededRng) -> Vec<(&'static str, LossOp, Vec<Tensor>)> {
    vec![
        (
            "d_loss",
            |g, v| d_loss(g, v[0], v[1]),
            vec![normal_tensor(rng, &[4, 1], 2.0), normal_tensor(rng, &[4, 1], 2.0)],
        ),
        (
            "g_perceptual",
            |g, v| g_perceptual_loss(g, v[0], false),
            vec![normal_tensor(rng, &[4, 1], 2.0)],
        ),
        (
            "g_perceptual_nonsat",
            |g, v| g_perceptual_loss(g, v[0], true),
            vec![normal_tensor(rng, &[4, 1], 2.0)],
        ),
        (
            "g_feature_match",
            |g, v| g_feature_match_loss(g, v[0], v[1]),
            vec![normal_tensor(rng, &[3, 6], 1.0), normal_tensor(rng, &[5, 6], 1.0)],
        ),
    ]
}

/// Worst finite-difference error per op over `options.seeds` random draws.
pub fn gradient_checks(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let fault = options.fault;
    for seed in 0..options.seeds {
        let mut rng = seeded(seed, 1);
        let mut cases: Vec<(&'static str, Op, Vec<Tensor>, bool)> = gradient_cases(&mut rng)
            .into_iter()
            .map(|(n, f, i)| (n, f, i, true))
            .collect();
        cases.extend(loss_cases(&mut rng).into_iter().map(|(n, f, i)| (n, f, i, false)));
        for (i, (name, op, inputs, projected)) in cases.into_iter().enumerate() {
            let err = grad_check(
                |g, v| {
                    if let Some(f) = fault {
                        g.inject_fault(f);
                    }
                    let y = op(g, v)?;
                    if projected {
                        project(g, y, seed * 100 + i as u64)
                    } else {
                        Ok(y)
                    }
                },
                &inputs,
                FD_STEP,
            )?;
            match worst.iter_mut().find(|(n, _)| *n == name) {
                Some(w) => w.1 = w.1.max(err),
                None => worst.push((name, err)),
            }
        }
    }
    Ok(worst
        .into_iter()
        .map(|(n, e)| Check::new(format!("grad:{n}"), e, GRAD_TOLERANCE))
        .collect())
}

/// Engine conv and transposed conv against direct loops on random shapes,
/// and dense against a triple-loop product.
pub fn oracle_checks(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut rng = seeded(1234, 0);
    let (mut conv, mut deconv) = (0.0f64, 0.0f64);
    for _ in 0..options.oracle_shapes {
        let n = rng.random_range(1..3);
        let c = rng.random_range(1..4);
        let f = rng.random_range(1..4);
        let k = [1, 2, 3, 4][rng.random_range(0..4)];
        let s = rng.random_range(1..3);
        let p = rng.random_range(0..k.min(2));
        let h = rng.random_range(k.max(2)..8);
        let x = uniform_tensor(&mut rng, &[n, c, h, h], -1.0, 1.0);
        let w = uniform_tensor(&mut rng, &[f, c, k, k], -1.0, 1.0);
        let b = uniform_tensor(&mut rng, &[f], -1.0, 1.0);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = g.conv2d(xv, wv, Some(bv), s, p)?;
        conv = conv.max(g.value(y).max_abs_diff(&oracle::conv2d(&x, &w, Some(&b), s, p)));

        // transposed: weight is [C_in, C_out, k, k]; stride must divide k
        let s = if k % 2 == 0 { [1, 2][rng.random_range(0..2)] } else { 1 };
        let p = rng.random_range(0..k.min(2));
        let h = rng.random_range(1..5);
        let x = uniform_tensor(&mut rng, &[n, c, h, h], -1.0, 1.0);
        let w = uniform_tensor(&mut rng, &[c, f, k, k], -1.0, 1.0);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        if (h - 1) * s + k <= 2 * p {
            continue;
        }
        let y = g.conv_transpose2d(xv, wv, Some(bv), s, p)?;
        deconv = deconv.max(g.value(y).max_abs_diff(&oracle::conv_transpose2d(&x, &w, Some(&b), s, p)));
    }
    let mut dense = 0.0f64;
    for _ in 0..options.oracle_shapes {
        let (n, d, m) = (rng.random_range(1..6), rng.random_range(1..9), rng.random_range(1..6));
        let x = uniform_tensor(&mut rng, &[n, d], -1.0, 1.0);
        let w = uniform_tensor(&mut rng, &[d, m], -1.0, 1.0);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        let y = g.dense(xv, wv, None)?;
        dense = dense.max(g.value(y).max_abs_diff(&oracle::matmul(&x, &w)));
    }
    Ok(vec![
        Check::new("oracle:conv2d", conv, CONV_ORACLE_TOLERANCE),
        Check::new("oracle:conv_transpose2d", deconv, CONV_ORACLE_TOLERANCE),
        Check::new("oracle:dense", dense, DENSE_ORACLE_TOLERANCE),
    ])
}

/// Interior spread of a k=4, s=2 transposed conv of constant input and
/// kernel (must be exactly 0), and rejection of uneven overlap.
pub fn even_coverage_checks() -> Result<Vec<Check>> {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[1, 1, 5, 5], 1.0));
    let w = g.constant(Tensor::full(&[1, 1, 4, 4], 1.0));
    let y = g.conv_transpose2d(x, w, None, 2, 1)?;
    let out = g.value(y);
    let n = out.shape()[2];
    let interior: Vec<f64> = (2..n - 2)
        .flat_map(|i| (2..n - 2).map(move |j| (i, j)))
        .map(|(i, j)| out.data()[i * n + j])
        .collect();
    let lo = interior.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = interior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rejected = [(3, 2), (5, 2), (4, 3)]
        .iter()
        .filter(|&&(k, s)| check_even_overlap(k, s).is_err())
        .count();
    Ok(vec![
        Check::new("even_coverage:interior", hi - lo, 0.0),
        Check::new("even_coverage:rejects", (3 - rejected) as f64, 0.0),
    ])
}

pub fn loss_identity_checks() -> Result<Vec<Check>> {
    let mut g = Graph::new();
    let r = g.constant(Tensor::zeros(&[16, 1]));
    let f = g.constant(Tensor::zeros(&[16, 1]));
    let d = d_loss(&mut g, r, f)?;
    let half = (g.value(d).item() - 2.0 * LN_2).abs();
    let feats = normal_tensor(&mut seeded(5, 5), &[8, 12], 1.0);
    let a = g.constant(feats.clone());
    let b = g.constant(feats);
    let fm = g_feature_match_loss(&mut g, a, b)?;
    Ok(vec![
        Check::new("loss:d_loss_half", half, LOSS_TOLERANCE),
        Check::new("loss:feature_match_equal", g.value(fm).item().abs(), 0.0),
    ])
}

/// Vector Adam against a scalar re-derivation over 100 random gradients.
pub fn adam_checks() -> Vec<Check> {
    let cfg = AdamConfig {
        learning_rate: 0.0002,
        beta1: 0.5,
        beta2: 0.999,
        eps: 1e-8,
    };
    let mut rng = seeded(6, 0);
    let mut p = normal_tensor(&mut rng, &[9], 1.0);
    let mut scalar: Vec<[f64; 3]> = p.data().iter().map(|&x| [x, 0.0, 0.0]).collect();
    let mut state = AdamState::new([&p]);
    for t in 1..=100 {
        let grad = normal_tensor(&mut rng, &[9], 1.0);
        adam_step(&mut [&mut p], std::slice::from_ref(&grad), &mut state, &cfg);
        for (s, &gi) in scalar.iter_mut().zip(grad.data()) {
            s[1] = cfg.beta1 * s[1] + (1.0 - cfg.beta1) * gi;
            s[2] = cfg.beta2 * s[2] + (1.0 - cfg.beta2) * gi * gi;
            let mh = s[1] / (1.0 - cfg.beta1.powi(t));
            let vh = s[2] / (1.0 - cfg.beta2.powi(t));
            s[0] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
        }
    }
    let err = p
        .data()
        .iter()
        .zip(&scalar)
        .map(|(a, s)| (a - s[0]).abs())
        .fold(0.0, f64::max);
    let mut q = Tensor::scalar(0.0);
    let mut st = AdamState::new([&q]);
    adam_step(&mut [&mut q], &[Tensor::scalar(1.0)], &mut st, &cfg);
    vec![
        Check::new("adam:scalar_reference", err, ADAM_TOLERANCE),
        Check::new("adam:first_step", (q.item().abs() - cfg.learning_rate).abs(), 1e-9),
    ]
}

/// Two points at ±1 with large C: weight 1 and bias 0.
pub fn svm_checks() -> Result<Vec<Check>> {
    let data = vec![
        FeatureVector {
            values: vec![-1.0],
            label: 0,
            source: 0,
        },
        FeatureVector {
            values: vec![1.0],
            label: 1,
            source: 1,
        },
    ];
    let model = train_svm(&data, &SvmConfig::with_c(1e4))?;
    let err = (model.weights[1][0] - 1.0).abs().max(model.biases[1].abs());
    Ok(vec![Check::new("svm:max_margin", err, SVM_TOLERANCE)])
}

/// Every check in the suite, in a fixed order.
pub fn run_verification(options: &VerifyOptions) -> Result<Vec<Check>> {
    let mut checks = gradient_checks(options)?;
    checks.extend(oracle_checks(options)?);
    checks.extend(even_coverage_checks()?);
    checks.extend(loss_identity_checks()?);
    checks.extend(adam_checks());
    checks.extend(svm_checks()?);
    Ok(checks)
}

pub fn report_table(checks: &[Check]) -> String {
    let mut out = format!("{:<28} {:>12} {:>10}  result\n", "check", "measured", "threshold");
    for c in checks {
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}
