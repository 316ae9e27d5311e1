use super::image::{augment, AugmentSpec, ImageRecord};
use crate::error::{Error, Result};

/// Training and test views for held-out fold `test_fold`.
///
/// Training records are augmented when `augment_train` is set; test records
/// are always the originals. Folds hold indices into `records`.
pub fn train_test_view(
    records: &[ImageRecord],
    folds: &[Vec<usize>],
    test_fold: usize,
    spec: &AugmentSpec,
    augment_train: bool,
) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>)> {
    let held = folds
        .get(test_fold)
        .ok_or_else(|| Error::Config(format!("fold {test_fold} out of range for {} folds", folds.len())))?;
    let mut is_test = vec![false; records.len()];
    for &i in held {
        *is_test
            .get_mut(i)
            .ok_or_else(|| Error::Data(format!("fold index {i} out of range")))? = true;
    }
    let test = held.iter().map(|&i| records[i].clone()).collect();
    let train = records
        .iter()
        .zip(&is_test)
        .filter(|(_, &t)| !t)
        .flat_map(|(r, _)| {
            if augment_train {
                augment(r, spec)
            } else {
                vec![r.clone()]
            }
        })
        .collect();
    Ok((train, test))
}

/// All variants of every record, in record order, for GAN training.
pub fn augment_all(records: &[ImageRecord], spec: &AugmentSpec) -> Vec<ImageRecord> {
    records.iter().flat_map(|r| augment(r, spec)).collect()
}
