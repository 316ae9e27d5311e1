use rand::Rng;

use super::*;
use crate::autodiff::Tensor;
use crate::model::{ArchConfig, Discriminator};
use crate::rng::{seeded, uniform_tensor};

fn fv(values: Vec<f64>, label: usize) -> FeatureVector {
    FeatureVector {
        values,
        label,
        source: 0,
    }
}

fn blobs(per_class: usize, seed: u64) -> Vec<FeatureVector> {
    let centers = [(-3.0, -3.0), (3.0, -3.0), (0.0, 3.0)];
    let mut rng = seeded(seed, 0);
    let mut out = Vec::new();
    for (label, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let dx: f64 = rng.random_range(-1.0..1.0);
            let dy: f64 = rng.random_range(-1.0..1.0);
            out.push(fv(vec![cx + dx, cy + dy], label));
        }
    }
    for (i, f) in out.iter_mut().enumerate() {
        f.source = i;
    }
    out
}

#[test]
fn analytic_max_margin_case() {
    let data = vec![fv(vec![-1.0], 0), fv(vec![1.0], 1)];
    let model = train_svm(&data, &SvmConfig::with_c(1e4)).unwrap();
    // class 1 vs rest: w → 4C/(1+4C), b = 0
    assert!((model.weights[1][0] - 1.0).abs() <= 1e-3, "{:?}", model.weights);
    assert!(model.biases[1].abs() <= 1e-3);
    assert!((model.weights[0][0] + 1.0).abs() <= 1e-3);
    assert_eq!(predict(&model, &data).unwrap(), vec![0, 1]);
    let at_zero = model.scores(&[0.0]).unwrap();
    assert!((at_zero[1] - 0.0).abs() <= 1e-3);
}

#[test]
fn separable_blobs_train_perfectly() {
    let data = blobs(20, 1);
    let model = train_svm(&data, &SvmConfig::default()).unwrap();
    let pred = predict(&model, &data).unwrap();
    assert!(pred.iter().zip(&data).all(|(p, f)| *p == f.label));
}

#[test]
fn objective_never_increases() {
    let mut rng = seeded(4, 0);
    let data: Vec<FeatureVector> = (0..60)
        .map(|i| fv((0..12).map(|_| rng.random_range(-1.0..1.0)).collect(), i % 3))
        .collect();
    for c in [0.01, 1.0, 100.0] {
        let model = train_svm(&data, &SvmConfig::with_c(c)).unwrap();
        for r in &model.reports {
            assert!(r.objective.windows(2).all(|w| w[1] <= w[0]), "C={c}: {:?}", r.objective);
        }
    }
}

#[test]
fn converged_objective_matches_long_reference() {
    let data = blobs(10, 9);
    let x = Matrix::from_features(&data).unwrap();
    let y: Vec<f64> = data.iter().map(|f| if f.label == 2 { 1.0 } else { -1.0 }).collect();
    let cfg = SvmConfig::default();
    let (w, b, report) = solve_binary(&x, &y, &cfg);
    assert_eq!(report.termination, Termination::Converged);
    let long = SvmConfig {
        tolerance: 0.0,
        max_epochs: 10_000,
        ..cfg.clone()
    };
    let (wr, br, _) = solve_binary(&x, &y, &long);
    let f = binary_objective(&x, &y, &w, b, cfg.c);
    let fr = binary_objective(&x, &y, &wr, br, cfg.c);
    assert!(f - fr <= 1e-4 * fr.max(1.0), "{f} vs {fr}");
}

#[test]
fn duplicated_samples_with_half_c_agree() {
    let data = blobs(8, 3);
    let twice: Vec<FeatureVector> = data.iter().chain(&data).cloned().collect();
    let a = train_svm(&data, &SvmConfig::with_c(2.0)).unwrap();
    let b = train_svm(&twice, &SvmConfig::with_c(1.0)).unwrap();
    for x in &data {
        let (sa, sb) = (a.scores(&x.values).unwrap(), b.scores(&x.values).unwrap());
        for (p, q) in sa.iter().zip(&sb) {
            assert!((p - q).abs() <= 1e-6, "{p} vs {q}");
        }
    }
}

#[test]
fn single_class_rejected() {
    let data = vec![fv(vec![0.0], 0), fv(vec![1.0], 0)];
    assert!(train_svm(&data, &SvmConfig::default()).is_err());
}

#[test]
fn prediction_rules() {
    assert_eq!(argmax(&[0.5, 0.5]), 0);
    assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    assert_eq!(argmax(&[-3.0]), 0);
    let data = blobs(10, 5);
    let mut model = train_svm(&data, &SvmConfig::default()).unwrap();
    let before = predict(&model, &data).unwrap();
    for b in &mut model.biases {
        *b += 17.5;
    }
    assert_eq!(predict(&model, &data).unwrap(), before);
    assert!(predict(&model, &[fv(vec![1.0; 3], 0)]).is_err());
}

#[test]
fn folds_of_hundred_per_class_protocol() {
    let labels: Vec<usize> = (0..2100).map(|i| i / 100).collect();
    let folds = stratified_folds(&labels, 5, 1).unwrap();
    for fold in &folds {
        let mut counts = [0usize; 21];
        for &i in fold {
            counts[labels[i]] += 1;
        }
        assert!(counts.iter().all(|&c| c == 20));
    }
    let mut all: Vec<usize> = folds.concat();
    all.sort_unstable();
    assert_eq!(all, (0..2100).collect::<Vec<_>>());
}

#[test]
fn small_class_folds() {
    let folds = stratified_folds(&[0; 10], 5, 0).unwrap();
    assert!(folds.iter().all(|f| f.len() == 2));
    assert!(stratified_folds(&[0, 0, 0, 1, 1, 1, 1, 1], 5, 0).is_err());
    assert_eq!(stratified_folds(&[0; 10], 5, 3).unwrap(), stratified_folds(&[0; 10], 5, 3).unwrap());
}

#[test]
fn per_class_accuracy_examples() {
    let perfect = vec![vec![vec![5, 0], vec![0, 5]]; 3];
    for c in per_class_accuracy(&perfect).unwrap() {
        assert_eq!((c.mean, c.std), (100.0, 0.0));
    }
    let two = vec![vec![vec![9, 1], vec![0, 4]], vec![vec![10, 0], vec![0, 4]]];
    let acc = per_class_accuracy(&two).unwrap();
    assert!((acc[0].mean - 95.0).abs() < 1e-12 && (acc[0].std - 5.0).abs() < 1e-12);
    let empty = vec![vec![vec![1, 0], vec![0, 0]]];
    assert!(per_class_accuracy(&empty).is_err());
    assert!(per_class_accuracy(&[]).is_err());
}

#[test]
fn separable_cross_validation_is_perfect() {
    let data = blobs(10, 2);
    let report = cross_validate(&data, &CvConfig::default()).unwrap();
    assert_eq!(report.overall_mean, 100.0);
    assert_eq!(report.overall_std, 0.0);
    assert_eq!(report.pooled_accuracy(), report.overall_mean);
    for (class, row) in report.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), 10);
        assert_eq!(row[class], 10);
    }
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    for key in ["overall_mean", "overall_std", "per_class", "confusion"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn report_recount_matches() {
    let mut rng = seeded(8, 0);
    let data: Vec<FeatureVector> = (0..40)
        .map(|i| fv((0..6).map(|_| rng.random_range(-1.0..1.0)).collect(), i % 4))
        .collect();
    let report = cross_validate(&data, &CvConfig::default()).unwrap();
    let mut correct = 0;
    let mut total = 0;
    for f in &report.folds {
        for (&i, &p) in f.test_indices.iter().zip(&f.predictions) {
            correct += usize::from(data[i].label == p);
            total += 1;
        }
    }
    assert_eq!(total, 40);
    assert!((100.0 * correct as f64 / total as f64 - report.pooled_accuracy()).abs() < 1e-12);
    assert!((report.pooled_accuracy() - report.overall_mean).abs() < 1e-9);
}

#[test]
fn standardize_is_fitted_on_training_folds() {
    let data = blobs(10, 6);
    let scaled: Vec<FeatureVector> = data
        .iter()
        .map(|f| FeatureVector {
            values: vec![f.values[0] * 1000.0, f.values[1] * 0.001],
            ..f.clone()
        })
        .collect();
    let cfg = CvConfig {
        standardize: true,
        ..CvConfig::default()
    };
    assert_eq!(cross_validate(&scaled, &cfg).unwrap().overall_mean, 100.0);
    let s = Standardizer::fit(&data).unwrap();
    let z = s.apply(&data);
    let mean0: f64 = z.iter().map(|f| f.values[0]).sum::<f64>() / z.len() as f64;
    assert!(mean0.abs() < 1e-12);
}

#[test]
fn feature_file_round_trip() {
    let data = blobs(3, 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.feat");
    write_features(&path, &data).unwrap();
    let back = read_features(&path).unwrap();
    assert_eq!(back.len(), data.len());
    for (a, b) in data.iter().zip(&back) {
        assert_eq!(a.label, b.label);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(*x as f32 as f64, *y);
        }
    }
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(read_features(&path).is_err());
}

#[test]
fn extracted_features_ignore_batching() {
    let arch = ArchConfig {
        image_size: 32,
        image_channels: 3,
        z_dim: 8,
        base_width: 4,
        max_width: 16,
        fusion_depth: 3,
    };
    let mut d = Discriminator::new(&arch, 1).unwrap();
    let images = uniform_tensor(&mut seeded(2, 0), &[6, 3, 32, 32], -1.0, 1.0);
    let labels = vec![0, 1, 2, 0, 1, 2];
    let one = extract_features(&mut d, &images, &labels, 3, 1).unwrap();
    let all = extract_features(&mut d, &images, &labels, 3, 64).unwrap();
    assert_eq!(one.len(), 6);
    assert_eq!(one[0].values.len(), arch.feature_dim(3));
    for (a, b) in one.iter().zip(&all) {
        assert_eq!(a.source, b.source);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
    let wrong = Tensor::zeros(&[2, 3, 16, 16]);
    assert!(extract_features(&mut d, &wrong, &[0, 1], 3, 4).is_err());
}

/// Plain gradient descent on the primal objective, the independent reference.
fn gradient_descent_reference(x: &Matrix, y: &[f64], c: f64, steps: usize) -> f64 {
    let (mut w, mut b) = (vec![0.0; x.cols], 0.0);
    let lr = 1.0 / (1.0 + 2.0 * c * x.data.iter().map(|v| v * v).sum::<f64>() + 2.0 * c * x.rows as f64);
    for _ in 0..steps {
        let mut gw = w.clone();
        let mut gb = 0.0;
        for i in 0..x.rows {
            let o: f64 = x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let m = 1.0 - y[i] * o;
            if m > 0.0 {
                for (g, xi) in gw.iter_mut().zip(x.row(i)) {
                    *g -= 2.0 * c * y[i] * m * xi;
                }
                gb -= 2.0 * c * y[i] * m;
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g;
        }
        b -= lr * gb;
    }
    binary_objective(x, y, &w, b, c)
}

#[test]
fn newton_solution_matches_gradient_descent_reference() {
    let data = blobs(6, 12);
    let x = Matrix::from_features(&data).unwrap();
    for class in 0..3 {
        let y: Vec<f64> = data.iter().map(|f| if f.label == class { 1.0 } else { -1.0 }).collect();
        let cfg = SvmConfig::with_c(0.5);
        let (w, b, report) = solve_binary(&x, &y, &cfg);
        assert_eq!(report.termination, Termination::Converged);
        let ours = binary_objective(&x, &y, &w, b, cfg.c);
        let reference = gradient_descent_reference(&x, &y, cfg.c, 200_000);
        assert!(ours <= reference + 1e-9, "{ours} vs {reference}");
        assert!(reference - ours <= 1e-6 * reference.max(1.0), "{ours} vs {reference}");
    }
}
