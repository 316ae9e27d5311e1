//! Image ingestion, scaling, augmentation and synthetic texture datasets.

mod image;
mod manifest;
mod split;
mod synth;

pub use self::image::{
    augment, decode_png, encode_png, load_image, sample_grid, scale_byte, transform, unscale, write_png, AugTag,
    AugmentSpec, ImageRecord,
};
pub use manifest::{
    load_images, stack_records, synth_class_names, synth_dataset, write_png_dataset, ClassEntry, Manifest,
    ManifestItem,
};
pub use split::{augment_all, train_test_view};
pub use synth::{synth_records, Family, Recipe, SyntheticSpec};

#[cfg(test)]
mod tests;
