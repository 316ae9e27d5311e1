//! One-vs-rest linear L2-SVM.
//!
//! Per class the solver minimizes
//! `0.5·||w||² + C·Σ max(0, 1 − y·(w·x + b))²` with an unregularized bias.
//! It runs generalized Newton iterations in the span of the training samples
//! (`w = Σ aᵢ xᵢ`), so each iteration costs a dense solve in the number of
//! samples rather than the feature dimension, followed by an exact line
//! search on the piecewise-quadratic objective. Iterations that would not
//! lower the objective are rejected, so the recorded objective never rises.

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    /// Stop once an epoch improves the objective by less than this fraction.
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-9,
            max_epochs: 100,
        }
    }
}

impl SvmConfig {
    pub fn with_c(c: f64) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance >= 0.0) || self.max_epochs == 0 {
            return Err(Error::Config("solver tolerance must be ≥ 0 and max_epochs ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCap,
}

/// How one binary subproblem ended, with the objective after every epoch
/// (entry 0 is the objective at `w = 0, b = 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub termination: Termination,
    pub epochs: usize,
    pub objective: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub config: SvmConfig,
    pub reports: Vec<SolverReport>,
}

impl SvmModel {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    /// Class scores `w_c·x + b_c`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Data(format!(
                "feature dimension {} does not match model dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &SvmModel, features: &[FeatureVector]) -> Result<Vec<usize>> {
    features
        .iter()
        .map(|f| model.scores(&f.values).map(|s| argmax(&s)))
        .collect()
}

/// Train one binary classifier per class present in `0..n_classes`.
pub fn train_svm(features: &[FeatureVector], config: &SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    let x = Matrix::from_features(features)?;
    let labels: Vec<usize> = features.iter().map(|f| f.label).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_classes];
    for &l in &labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Data("an SVM needs samples from at least two classes".into()));
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("class {empty} has no training samples")));
    }
    let gram = gram(&x);
    let mut weights = Vec::with_capacity(n_classes);
    let mut biases = Vec::with_capacity(n_classes);
    let mut reports = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let (a, b, report) = solve_in_span(&gram, &y, config);
        weights.push(combine(&x, &a));
        biases.push(b);
        reports.push(report);
    }
    Ok(SvmModel {
        weights,
        biases,
        config: config.clone(),
        reports,
    })
}

/// Primal objective of a binary problem at `(w, b)`.
pub fn binary_objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let reg = 0.5 * dot(w, w);
    let loss: f64 = (0..x.rows)
        .map(|i| {
            let m = 1.0 - y[i] * (dot(x.row(i), w) + b);
            if m > 0.0 {
                m * m
            } else {
                0.0
            }
        })
        .sum();
    reg + c * loss
}

/// Solve one binary problem directly on a feature matrix, returning `(w, b)`.
pub fn solve_binary(x: &Matrix, y: &[f64], config: &SvmConfig) -> (Vec<f64>, f64, SolverReport) {
    let (a, b, report) = solve_in_span(&gram(x), y, config);
    (combine(x, &a), b, report)
}

fn gram(x: &Matrix) -> Vec<Vec<f64>> {
    let n = x.rows;
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = dot(x.row(i), x.row(j));
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// `Σ aᵢ xᵢ`.
fn combine(x: &Matrix, a: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; x.cols];
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            for (wj, xj) in w.iter_mut().zip(x.row(i)) {
                *wj += ai * xj;
            }
        }
    }
    w
}

fn mat_vec(k: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    k.iter().map(|row| dot(row, v)).collect()
}

/// Objective with `w = Σ aᵢ xᵢ`, given `ka = K·a`.
fn span_objective(a: &[f64], ka: &[f64], b: f64, y: &[f64], c: f64) -> f64 {
    let loss: f64 = y
        .iter()
        .zip(ka)
        .map(|(yi, o)| (1.0 - yi * (o + b)).max(0.0).powi(2))
        .sum();
    0.5 * dot(a, ka) + c * loss
}

/// Newton iterations on the sample-space coefficients `a` and bias `b`.
fn solve_in_span(k: &[Vec<f64>], y: &[f64], config: &SvmConfig) -> (Vec<f64>, f64, SolverReport) {
    let n = y.len();
    let c = config.c;
    let mut a = vec![0.0; n];
    let mut b = 0.0;
    let mut ka = vec![0.0; n];
    let mut objective = vec![span_objective(&a, &ka, b, y, c)];
    let mut termination = Termination::IterationCap;

    for _ in 0..config.max_epochs {
        let margins: Vec<f64> = (0..n).map(|i| 1.0 - y[i] * (ka[i] + b)).collect();
        let active: Vec<usize> = (0..n).filter(|&i| margins[i] > 0.0).collect();
        let (delta, db) = newton_direction(k, y, c, &a, &margins, &active);
        let kd = mat_vec(k, &delta);
        let z: Vec<f64> = kd.iter().map(|v| v + db).collect();
        let t = exact_line_search(dot(&delta, &kd), dot(&a, &kd), &margins, y, &z, c);
        let prev = *objective.last().unwrap();
        let next_a: Vec<f64> = a.iter().zip(&delta).map(|(ai, di)| ai + t * di).collect();
        let next_b = b + t * db;
        let next_ka = mat_vec(k, &next_a);
        let now = span_objective(&next_a, &next_ka, next_b, y, c);
        if !(now <= prev) {
            termination = Termination::Converged;
            break;
        }
        a = next_a;
        b = next_b;
        ka = next_ka;
        objective.push(now);
        if prev - now <= config.tolerance * prev.abs().max(f64::MIN_POSITIVE) {
            termination = Termination::Converged;
            break;
        }
    }
    let report = SolverReport {
        termination,
        epochs: objective.len() - 1,
        objective,
    };
    (a, b, report)
}

/// Generalized Newton step `(δ, δb)` with `Δw = Σ δᵢ xᵢ`.
///
/// Inactive samples drop out of `w` (`δᵢ = −aᵢ`); the active block and the
/// bias solve `(I + 2C·K_II)·δ_I + 2C·δb = r₁` and
/// `2C·1ᵀ(K_I·δ) + 2C·|I|·δb = r₂`.
fn newton_direction(
    k: &[Vec<f64>],
    y: &[f64],
    c: f64,
    a: &[f64],
    margins: &[f64],
    active: &[usize],
) -> (Vec<f64>, f64) {
    let n = a.len();
    let mut delta: Vec<f64> = a.iter().map(|v| -v).collect();
    let m = active.len();
    if m == 0 {
        return (delta, 0.0);
    }
    let two_c = 2.0 * c;
    let inactive: Vec<usize> = (0..n).filter(|i| margins[*i] <= 0.0).collect();
    // K_{i,Ī}·a_Ī for each active i
    let carry: Vec<f64> = active
        .iter()
        .map(|&i| inactive.iter().map(|&j| k[i][j] * a[j]).sum())
        .collect();
    let size = m + 1;
    let mut sys = vec![vec![0.0; size + 1]; size];
    for (r, &i) in active.iter().enumerate() {
        for (s, &j) in active.iter().enumerate() {
            sys[r][s] = two_c * k[i][j] + if r == s { 1.0 } else { 0.0 };
        }
        sys[r][m] = two_c;
        let gamma = a[i] - two_c * y[i] * margins[i];
        sys[r][size] = -gamma + two_c * carry[r];
    }
    let g_b: f64 = -two_c * active.iter().map(|&i| y[i] * margins[i]).sum::<f64>();
    for (s, &j) in active.iter().enumerate() {
        sys[m][s] = two_c * active.iter().map(|&i| k[i][j]).sum::<f64>();
    }
    sys[m][m] = two_c * m as f64;
    sys[m][size] = -g_b + two_c * carry.iter().sum::<f64>();
    let sol = solve_dense(sys);
    for (r, &i) in active.iter().enumerate() {
        delta[i] = sol[r];
    }
    (delta, sol[m])
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mut m: Vec<Vec<f64>>) -> Vec<f64> {
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        if p == 0.0 {
            continue;
        }
        for row in col + 1..n {
            let f = m[row][col] / p;
            if f != 0.0 {
                for j in col..=n {
                    m[row][j] -= f * m[col][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|j| m[row][j] * x[j]).sum();
        x[row] = if m[row][row] == 0.0 { 0.0 } else { (m[row][n] - s) / m[row][row] };
    }
    x
}

/// Minimizer over `t ≥ 0` of the objective along the step.
///
/// The derivative is piecewise linear and non-decreasing:
/// `t·dkd + akd − 2C·Σ_active yᵢzᵢ(mᵢ − t·yᵢzᵢ)`, with sample `i` active
/// while `mᵢ − t·yᵢzᵢ > 0`. Walk the breakpoints in order until the root.
fn exact_line_search(dkd: f64, akd: f64, margins: &[f64], y: &[f64], z: &[f64], c: f64) -> f64 {
    let two_c = 2.0 * c;
    let mut slope = dkd;
    let mut offset = akd;
    let mut events: Vec<(f64, usize)> = Vec::new();
    for i in 0..margins.len() {
        let s = y[i] * z[i];
        let (m, active_now) = (margins[i], margins[i] > 0.0 || (margins[i] == 0.0 && s < 0.0));
        if active_now {
            slope += two_c * z[i] * z[i];
            offset -= two_c * s * m;
        }
        if s != 0.0 {
            let t = m / s;
            if t > 0.0 {
                events.push((t, i));
            }
        }
    }
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut lo = 0.0;
    for &(t_event, i) in &events {
        if slope > 0.0 {
            let root = -offset / slope;
            if root <= t_event {
                return root.max(lo);
            }
        }
        lo = t_event;
        let s = y[i] * z[i];
        let contribution = (two_c * z[i] * z[i], -two_c * s * margins[i]);
        if s > 0.0 {
            // leaves the active set
            slope -= contribution.0;
            offset -= contribution.1;
        } else {
            slope += contribution.0;
            offset += contribution.1;
        }
    }
    if slope > 0.0 {
        (-offset / slope).max(lo)
    } else {
        lo
    }
}
