//! Stratified k-fold cross-validation and its report.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Standardizer};
use super::svm::{predict, train_svm, SvmConfig, Termination};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Folds are drawn from this stream of the caller's seed.
const FOLD_STREAM: u64 = 3 << 40;

/// Split indices into `k` disjoint folds, each class dealt round-robin after
/// a seeded shuffle. Every class must have at least `k` samples.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = seeded(seed, FOLD_STREAM);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {class} has {} samples, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_indices: Vec<usize>,
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub converged: bool,
}

/// Accuracies are percentages; the confusion matrix has true classes as rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub overall_mean: f64,
    pub overall_std: f64,
    pub per_class: Vec<ClassAccuracy>,
    pub confusion: Vec<Vec<usize>>,
    pub fold_accuracies: Vec<f64>,
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `trace / total` of the summed confusion matrix, as a percentage.
    pub fn pooled_accuracy(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let trace: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        100.0 * trace as f64 / total as f64
    }
}

/// Options shared by every fold.
#[derive(Clone, Debug, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub svm: SvmConfig,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            svm: SvmConfig::default(),
            standardize: false,
            seed: 0,
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-class accuracy (percent) across folds from each fold's confusion matrix.
pub fn per_class_accuracy(confusions: &[Vec<Vec<usize>>]) -> Result<Vec<ClassAccuracy>> {
    let first = confusions
        .first()
        .ok_or_else(|| Error::Data("per-class accuracy needs at least one fold".into()))?;
    (0..first.len())
        .map(|class| {
            let accs = confusions
                .iter()
                .enumerate()
                .map(|(f, m)| {
                    let row = &m[class];
                    let total: usize = row.iter().sum();
                    if total == 0 {
                        return Err(Error::Data(format!("fold {f} has no test samples of class {class}")));
                    }
                    Ok(100.0 * row[class] as f64 / total as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, std) = mean_std(&accs);
            Ok(ClassAccuracy { class, mean, std })
        })
        .collect()
}

/// Train on `k − 1` folds and test on the held-out one, for every fold.
pub fn cross_validate(features: &[FeatureVector], config: &CvConfig) -> Result<CvReport> {
    let labels: Vec<usize> = features.iter().map(|f| f.label).collect();
    let folds = stratified_folds(&labels, config.folds, config.seed)?;
    cross_validate_folds(features, &folds, config)
}

/// Cross-validate on an explicit fold assignment.
pub fn cross_validate_folds(features: &[FeatureVector], folds: &[Vec<usize>], config: &CvConfig) -> Result<CvReport> {
    let n_classes = features.iter().map(|f| f.label).max().map_or(0, |m| m + 1);
    let mut results = Vec::with_capacity(folds.len());
    for test in folds {
        let mut in_test = vec![false; features.len()];
        for &i in test {
            in_test[i] = true;
        }
        let mut train: Vec<FeatureVector> = features
            .iter()
            .zip(&in_test)
            .filter(|(_, &t)| !t)
            .map(|(x, _)| x.clone())
            .collect();
        let mut held: Vec<FeatureVector> = test.iter().map(|&i| features[i].clone()).collect();
        if config.standardize {
            let s = Standardizer::fit(&train)?;
            train = s.apply(&train);
            held = s.apply(&held);
        }
        let model = train_svm(&train, &config.svm)?;
        let predictions = predict(&model, &held)?;
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (x, &p) in held.iter().zip(&predictions) {
            confusion[x.label][p] += 1;
        }
        let correct = held.iter().zip(&predictions).filter(|(x, &p)| x.label == p).count();
        results.push(FoldResult {
            test_indices: test.clone(),
            predictions,
            accuracy: 100.0 * correct as f64 / held.len() as f64,
            confusion,
            converged: model.reports.iter().all(|r| r.termination == Termination::Converged),
        });
    }
    let fold_accuracies: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let (overall_mean, overall_std) = mean_std(&fold_accuracies);
    let confusions: Vec<Vec<Vec<usize>>> = results.iter().map(|r| r.confusion.clone()).collect();
    let per_class = per_class_accuracy(&confusions)?;
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for m in &confusions {
        for (row, src) in confusion.iter_mut().zip(m) {
            for (a, b) in row.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
    Ok(CvReport {
        overall_mean,
        overall_std,
        per_class,
        confusion,
        fold_accuracies,
        folds: results,
    })
}
