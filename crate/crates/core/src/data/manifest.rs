//! Dataset manifests and loading.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::{load_image, write_png, AugTag, ImageRecord};
use super::synth::{synth_records, Recipe, SyntheticSpec};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestItem {
    Path(String),
    Recipe { recipe: Recipe },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub name: String,
    pub items: Vec<ManifestItem>,
}

/// Class ids are positions in `classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub image_size: usize,
    pub channels: usize,
    pub classes: Vec<ClassEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.classes.iter().map(|c| c.items.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, format!("invalid manifest: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

/// Load every item in manifest order. Relative paths resolve against `base`.
pub fn load_images(manifest: &Manifest, base: &Path) -> Result<Vec<ImageRecord>> {
    let expected = [manifest.channels, manifest.image_size, manifest.image_size];
    let mut out = Vec::with_capacity(manifest.len());
    for (label, class) in manifest.classes.iter().enumerate() {
        for item in &class.items {
            let (pixels, origin) = match item {
                ManifestItem::Path(p) => {
                    let path = base.join(p);
                    let t = load_image(&path)?;
                    if t.shape() != expected {
                        return Err(Error::format(
                            &path,
                            format!("image shape {:?}, manifest expects {expected:?}", t.shape()),
                        ));
                    }
                    (t, p.clone())
                }
                ManifestItem::Recipe { recipe } => {
                    if [recipe.channels, recipe.size, recipe.size] != expected {
                        return Err(Error::Data(format!("recipe {} does not match the manifest image shape", recipe.id())));
                    }
                    (recipe.render(), recipe.id())
                }
            };
            out.push(ImageRecord {
                pixels,
                label,
                origin,
                origin_id: out.len(),
                tag: AugTag::Original,
            });
        }
    }
    Ok(out)
}

fn class_name(class: usize, spec: &SyntheticSpec) -> String {
    format!("class{class:02}_{}", spec.families[class % spec.families.len()])
}

/// Rendered records plus a manifest listing their recipes.
pub fn synth_dataset(spec: &SyntheticSpec) -> Result<(Vec<ImageRecord>, Manifest)> {
    let records = synth_records(spec)?;
    let classes = (0..spec.n_classes)
        .map(|c| ClassEntry {
            name: class_name(c, spec),
            items: (0..spec.per_class)
                .map(|i| ManifestItem::Recipe {
                    recipe: spec.recipe(c, i),
                })
                .collect(),
        })
        .collect();
    let manifest = Manifest {
        image_size: spec.size,
        channels: spec.channels,
        classes,
    };
    Ok((records, manifest))
}

/// Write records as PNGs under `dir/<class>/` plus `dir/manifest.json`
/// listing their relative paths. Returns every written file.
pub fn write_png_dataset(dir: &Path, records: &[ImageRecord], class_names: &[String]) -> Result<Vec<PathBuf>> {
    let first = records.first().ok_or_else(|| Error::Data("empty dataset".into()))?;
    let shape = first.pixels.shape();
    let mut classes: Vec<ClassEntry> = class_names
        .iter()
        .map(|name| ClassEntry {
            name: name.clone(),
            items: Vec::new(),
        })
        .collect();
    let mut written = Vec::with_capacity(records.len() + 1);
    for r in records {
        let entry = classes
            .get_mut(r.label)
            .ok_or_else(|| Error::Data(format!("label {} has no class name", r.label)))?;
        let rel = format!("{}/{:05}.png", entry.name, r.origin_id);
        let path = dir.join(&rel);
        write_png(&path, &r.pixels)?;
        entry.items.push(ManifestItem::Path(rel));
        written.push(path);
    }
    let manifest = Manifest {
        image_size: shape[1],
        channels: shape[0],
        classes,
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    written.push(path);
    Ok(written)
}

/// Batch-major `[N, C, H, W]` tensor and labels of `records`.
pub fn stack_records(records: &[ImageRecord]) -> Result<(Tensor, Vec<usize>)> {
    if records.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let pixels: Vec<Tensor> = records.iter().map(|r| r.pixels.clone()).collect();
    Ok((Tensor::stack(&pixels)?, records.iter().map(|r| r.label).collect()))
}

/// Class names for a synthetic spec, in label order.
pub fn synth_class_names(spec: &SyntheticSpec) -> Vec<String> {
    (0..spec.n_classes).map(|c| class_name(c, spec)).collect()
}
