//! Downstream evaluation: feature extraction, a one-vs-rest linear L2-SVM and
//! stratified k-fold cross-validation.

mod cv;
mod features;
mod svm;

pub use cv::{
    cross_validate, cross_validate_folds, mean_std, per_class_accuracy, stratified_folds, ClassAccuracy, CvConfig,
    CvReport, FoldResult,
};
pub use features::{
    decode_features, encode_features, extract_features, pixel_features, read_features, write_features,
    FeatureVector, Matrix, Standardizer, FEAT_MAGIC,
};
pub use svm::{
    argmax, binary_objective, predict, solve_binary, train_svm, SolverReport, SvmConfig, SvmModel, Termination,
};

#[cfg(test)]
mod tests;
