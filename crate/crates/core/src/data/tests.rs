use super::*;
use crate::autodiff::{write_tensor, Tensor};
use crate::classify::stratified_folds;

fn record(pixels: Tensor, origin_id: usize) -> ImageRecord {
    ImageRecord {
        pixels,
        label: 0,
        origin: format!("r{origin_id}"),
        origin_id,
        tag: AugTag::Original,
    }
}

fn marked(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[1, n, n]);
    t.data_mut()[1] = 1.0; // row 0, col 1
    t
}

#[test]
fn scaling_endpoints() {
    assert_eq!(scale_byte(255), 1.0);
    assert_eq!(scale_byte(0), -1.0);
    let mid = (scale_byte(127) + scale_byte(128)) / 2.0;
    assert!(mid.abs() <= 1.0 / 255.0);
    for b in 0..=255u8 {
        assert_eq!(unscale(scale_byte(b)), b);
    }
}

#[test]
fn png_round_trip_within_quantization() {
    let spec = SyntheticSpec {
        per_class: 1,
        ..SyntheticSpec::default()
    };
    let recs = synth_records(&spec).unwrap();
    for r in &recs {
        let bytes = encode_png(&r.pixels).unwrap();
        let back = decode_png(&bytes, "mem.png".as_ref()).unwrap();
        assert_eq!(back.shape(), r.pixels.shape());
        assert!(back.max_abs_diff(&r.pixels) <= 1.0 / 255.0 + 1e-12);
    }
    let grey = Tensor::from_fn(&[1, 4, 4], |i| i as f64 / 8.0 - 1.0);
    let back = decode_png(&encode_png(&grey).unwrap(), "g.png".as_ref()).unwrap();
    assert_eq!(back.shape(), &[1, 4, 4]);
    assert!(decode_png(b"not a png", "x.png".as_ref()).is_err());
}

#[test]
fn default_augmentation_emits_four_tagged_variants() {
    let r = record(marked(5), 3);
    let out = augment(&r, &AugmentSpec::default());
    let tags: Vec<AugTag> = out.iter().map(|v| v.tag).collect();
    assert_eq!(tags, vec![AugTag::Original, AugTag::Hflip, AugTag::Vflip, AugTag::Rot90]);
    assert!(out.iter().all(|v| v.label == r.label && v.origin_id == 3));
    let all = AugmentSpec {
        all_rotations: true,
        ..AugmentSpec::default()
    };
    assert_eq!(augment(&r, &all).len(), 6);
    let d8 = AugmentSpec {
        dihedral: true,
        ..AugmentSpec::default()
    };
    let variants = augment(&r, &d8);
    assert_eq!(variants.len(), 8);
    for (i, a) in variants.iter().enumerate() {
        for b in &variants[i + 1..] {
            assert_ne!(a.pixels, b.pixels, "{:?} vs {:?}", a.tag, b.tag);
        }
    }
}

#[test]
fn group_identities() {
    let t = Tensor::from_fn(&[3, 6, 6], |i| (i * 37 % 11) as f64);
    assert_eq!(transform(&transform(&t, AugTag::Hflip), AugTag::Hflip), t);
    assert_eq!(transform(&transform(&t, AugTag::Vflip), AugTag::Vflip), t);
    let mut r = t.clone();
    for _ in 0..4 {
        r = transform(&r, AugTag::Rot90);
    }
    assert_eq!(r, t);
    let twice = transform(&transform(&t, AugTag::Rot90), AugTag::Rot90);
    assert_eq!(twice, transform(&t, AugTag::Rot180));
    let thrice = transform(&twice, AugTag::Rot90);
    assert_eq!(thrice, transform(&t, AugTag::Rot270));
}

#[test]
fn witness_image_variants_are_distinct() {
    let m = marked(4);
    let h = transform(&m, AugTag::Hflip);
    let v = transform(&m, AugTag::Vflip);
    let r = transform(&m, AugTag::Rot90);
    assert_ne!(h, v);
    assert_ne!(v, r);
    assert_ne!(h, r);
    // the mark at (0, 1) lands where each map says it should
    let at = |t: &Tensor| t.data().iter().position(|&x| x == 1.0).unwrap();
    assert_eq!(at(&h), 2);
    assert_eq!(at(&v), 3 * 4 + 1);
    assert_eq!(at(&r), 2 * 4);
}

#[test]
fn synth_is_deterministic_and_bounded() {
    let spec = SyntheticSpec::default();
    let (a, ma) = synth_dataset(&spec).unwrap();
    let (b, mb) = synth_dataset(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    assert_eq!(a.len(), 200);
    assert!(a.iter().all(|r| r.pixels.data().iter().all(|v| (-1.0..=1.0).contains(v))));
    let other = synth_records(&SyntheticSpec { seed: 8, ..spec }).unwrap();
    assert_ne!(other[0].pixels, a[0].pixels);
}

#[test]
fn synth_rejects_bad_specs() {
    for size in [8, 33, 48] {
        assert!(synth_records(&SyntheticSpec {
            size,
            ..SyntheticSpec::default()
        })
        .is_err());
    }
    assert!("waves".parse::<Family>().is_err());
    assert_eq!("radial".parse::<Family>().unwrap(), Family::Radial);
    let json = r#"{"n_classes": 2, "families": ["stripes", "waves"]}"#;
    assert!(serde_json::from_str::<SyntheticSpec>(json).is_err());
}

#[test]
fn manifest_recipes_reload_identically() {
    let spec = SyntheticSpec {
        per_class: 3,
        ..SyntheticSpec::default()
    };
    let (records, manifest) = synth_dataset(&spec).unwrap();
    let json = manifest.to_json();
    let parsed: Manifest = serde_json::from_str(&json).unwrap();
    let loaded = load_images(&parsed, ".".as_ref()).unwrap();
    assert_eq!(loaded, records);
}

#[test]
fn png_dataset_round_trip() {
    let spec = SyntheticSpec {
        per_class: 2,
        ..SyntheticSpec::default()
    };
    let records = synth_records(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_png_dataset(dir.path(), &records, &synth_class_names(&spec)).unwrap();
    assert_eq!(written.len(), 9);
    let manifest = Manifest::read(&dir.path().join("manifest.json")).unwrap();
    let loaded = load_images(&manifest, dir.path()).unwrap();
    assert_eq!(loaded.len(), records.len());
    for (a, b) in loaded.iter().zip(&records) {
        assert_eq!(a.label, b.label);
        assert!(a.pixels.max_abs_diff(&b.pixels) <= 1.0 / 255.0 + 1e-12);
    }
}

#[test]
fn loading_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest {
        image_size: 16,
        channels: 1,
        classes: vec![ClassEntry {
            name: "a".into(),
            items: vec![ManifestItem::Path("missing.png".into())],
        }],
    };
    let err = load_images(&manifest, dir.path()).unwrap_err().to_string();
    assert!(err.contains("missing.png"), "{err}");

    write_tensor(&dir.path().join("small.tnsr"), &Tensor::zeros(&[1, 8, 8])).unwrap();
    let manifest = Manifest {
        classes: vec![ClassEntry {
            name: "a".into(),
            items: vec![ManifestItem::Path("small.tnsr".into())],
        }],
        ..manifest
    };
    let err = load_images(&manifest, dir.path()).unwrap_err().to_string();
    assert!(err.contains("small.tnsr"), "{err}");
}

#[test]
fn tnsr_images_load_unscaled() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tensor::from_fn(&[1, 3, 16, 16], |i| (i % 7) as f64 * 0.25 - 0.75);
    write_tensor(&dir.path().join("x.tnsr"), &t).unwrap();
    let back = load_image(&dir.path().join("x.tnsr")).unwrap();
    assert_eq!(back.shape(), &[3, 16, 16]);
    assert_eq!(back.data(), t.data());
}

#[test]
fn train_test_view_counts_and_leakage() {
    let records: Vec<ImageRecord> = (0..100)
        .map(|i| ImageRecord {
            label: i % 4,
            ..record(Tensor::full(&[1, 4, 4], i as f64 / 100.0), i)
        })
        .collect();
    let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
    let folds = stratified_folds(&labels, 5, 0).unwrap();
    for f in 0..5 {
        let (train, test) = train_test_view(&records, &folds, f, &AugmentSpec::default(), true).unwrap();
        assert_eq!(train.len(), 320);
        assert_eq!(test.len(), folds[f].len());
        assert!(test.iter().all(|r| r.tag == AugTag::Original));
        assert!(train.iter().all(|tr| test.iter().all(|te| te.origin_id != tr.origin_id)));
        let (plain, _) = train_test_view(&records, &folds, f, &AugmentSpec::default(), false).unwrap();
        assert_eq!(plain.len(), 80);
    }
    assert!(train_test_view(&records, &folds, 5, &AugmentSpec::default(), true).is_err());
}

#[test]
fn grid_layout() {
    let imgs = Tensor::from_fn(&[3, 1, 2, 2], |i| (i / 4) as f64);
    let g = sample_grid(&imgs, 2).unwrap();
    assert_eq!(g.shape(), &[1, 4, 4]);
    let d = g.data();
    assert_eq!((d[0], d[2], d[8], d[10]), (0.0, 1.0, 2.0, -1.0));
}

#[test]
fn stacking_rejects_empty() {
    assert!(stack_records(&[]).is_err());
}
