use std::path::{Path, PathBuf};

use marta::data::{AugmentSpec, SyntheticSpec};
use marta::model::ArchConfig;
use marta::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset manifest; when absent the synthetic spec is rendered in memory.
    pub manifest: Option<PathBuf>,
    pub augment: AugmentSpec,
    /// Augment the images the GAN trains on.
    pub augment_gan: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            augment: AugmentSpec::default(),
            augment_gan: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub c: f64,
    pub folds: usize,
    pub standardize: bool,
    /// Fusion depth used for feature extraction; the model's own when absent.
    pub fusion_depth: Option<usize>,
    /// Largest depth evaluated by `sweep-k`; all stages when absent.
    pub max_k: Option<usize>,
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        let svm = marta::classify::SvmConfig::default();
        Self {
            c: svm.c,
            folds: 5,
            standardize: false,
            fusion_depth: None,
            max_k: None,
            tolerance: svm.tolerance,
            max_epochs: svm.max_epochs,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub synth: SyntheticSpec,
    pub data: DataConfig,
    pub classify: ClassifyConfig,
    pub output_dir: PathBuf,
    /// Checkpoint read by `generate`, `features` and `sweep-k`.
    pub checkpoint: Option<PathBuf>,
    /// Feature file read by `classify`.
    pub features: Option<PathBuf>,
    /// Iterations between checkpoints and sample grids; 0 disables them.
    pub save_interval: u64,
    /// Side length of generated sample grids.
    pub grid: usize,
    pub generate_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            synth: SyntheticSpec::default(),
            data: DataConfig::default(),
            classify: ClassifyConfig::default(),
            output_dir: PathBuf::from("runs"),
            checkpoint: None,
            features: None,
            save_interval: 100,
            grid: 8,
            generate_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn svm(&self) -> marta::classify::SvmConfig {
        marta::classify::SvmConfig {
            c: self.classify.c,
            tolerance: self.classify.tolerance,
            max_epochs: self.classify.max_epochs,
        }
    }

    pub fn cv(&self) -> marta::classify::CvConfig {
        marta::classify::CvConfig {
            folds: self.classify.folds,
            svm: self.svm(),
            standardize: self.classify.standardize,
            seed: self.classify.seed,
        }
    }
}

/// Resolve `dir` against the output root from the environment, if set.
pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(crate::OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}
