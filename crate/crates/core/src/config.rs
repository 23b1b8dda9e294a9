//! Run configuration (flat TOML) and the settings snapshot stored with a run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::{MergeConfig, MergeCriterion};
use crate::model::{FeatureSpec, TrainConfig};
use crate::raster::{RgbImage, Segmentation};
use crate::sieve::SieveConfig;
use crate::superpixel::{grid_segmentation, slic, SlicConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseAlgo {
    Slic,
    Grid,
}

/// How the base over-segmentation is produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum BaseSegmentation {
    Slic(SlicConfig),
    Grid { cell: u32 },
}

impl BaseSegmentation {
    pub fn segment(&self, image: &RgbImage) -> Result<Segmentation> {
        match self {
            BaseSegmentation::Slic(cfg) => slic(image, cfg),
            BaseSegmentation::Grid { cell } => grid_segmentation(image.width(), image.height(), *cell),
        }
    }
}

/// Which pieces of the pipeline a run uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Adaptive merging, acquisition-ranked selection and sieving.
    #[default]
    AmspS,
    /// Adaptive merging and acquisition, no sieving.
    Amsp,
    /// Base superpixels with acquisition and sieving.
    SpS,
    /// Base superpixels with acquisition only.
    Sp,
    /// Uniformly random base superpixels, no sieving.
    Random,
}

impl Strategy {
    pub fn merges(self) -> bool {
        matches!(self, Strategy::AmspS | Strategy::Amsp)
    }

    pub fn sieves(self) -> bool {
        matches!(self, Strategy::AmspS | Strategy::SpS)
    }

    pub fn random_selection(self) -> bool {
        self == Strategy::Random
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    #[default]
    Simulated,
    Human,
}

/// Everything the loop needs to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopSettings {
    pub num_classes: u16,
    pub ignore_id: u16,
    pub class_names: Vec<String>,
    pub base: BaseSegmentation,
    pub merge: MergeConfig,
    pub sieve: SieveConfig,
    pub train: TrainConfig,
    pub features: FeatureSpec,
    pub strategy: Strategy,
    /// Queries per round.
    pub budget: usize,
    /// Rounds after warm-up.
    pub rounds: u32,
    pub seed: u64,
    pub oracle: OracleMode,
    /// Do not refill skipped queries; a round may close with fewer answers.
    pub partial: bool,
    /// Hold already-queried base regions out of merging so merged candidates
    /// never overlap earlier queries.
    #[serde(default = "default_true")]
    pub lock_labeled: bool,
    /// Manifest the training images come from, for resuming.
    pub dataset: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

impl Default for LoopSettings {
    fn default() -> Self {
        Self {
            num_classes: crate::synth::SHAPE_CLASSES,
            ignore_id: 255,
            class_names: crate::synth::SHAPE_CLASS_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            base: BaseSegmentation::Slic(SlicConfig::default()),
            merge: MergeConfig::default(),
            sieve: SieveConfig::default(),
            train: TrainConfig::default(),
            features: FeatureSpec::default(),
            strategy: Strategy::AmspS,
            budget: 40,
            rounds: 3,
            seed: 0,
            oracle: OracleMode::Simulated,
            partial: false,
            lock_labeled: true,
            dataset: None,
        }
    }
}

impl LoopSettings {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be >= 1".into()));
        }
        if !self.class_names.is_empty() && self.class_names.len() != self.num_classes as usize {
            return Err(Error::Config(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.num_classes
            )));
        }
        self.merge.validate()?;
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        if self.class_names.is_empty() {
            (0..self.num_classes).map(|c| format!("class {c}")).collect()
        } else {
            self.class_names.clone()
        }
    }
}

/// Flat run file, e.g.
///
/// ```toml
/// name = "shapes"
/// dataset = "data/dataset.json"
/// num_classes = 4
/// epsilon = 0.1
/// budget = 40
/// rounds = 3
/// oracle = "simulated"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub dataset: PathBuf,
    pub num_classes: u16,
    pub ignore_id: u16,
    pub class_names: Vec<String>,
    pub base_algo: BaseAlgo,
    pub base_size: u32,
    pub compactness: f64,
    pub slic_iterations: u32,
    pub epsilon: f64,
    pub merge_fraction: f64,
    pub criterion: MergeCriterion,
    pub budget: usize,
    pub rounds: u32,
    pub sieve_sample_count: usize,
    pub min_pixels_for_knee: usize,
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub oracle: OracleMode,
    pub partial: bool,
    pub lock_labeled: bool,
    /// Address of the annotation API in human mode.
    pub listen: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = LoopSettings::default();
        let slic = SlicConfig::default();
        Self {
            name: "run".into(),
            output_dir: PathBuf::from("runs"),
            dataset: PathBuf::from("dataset.json"),
            num_classes: s.num_classes,
            ignore_id: s.ignore_id,
            class_names: s.class_names,
            base_algo: BaseAlgo::Slic,
            base_size: slic.target_region_size,
            compactness: slic.compactness,
            slic_iterations: slic.iterations,
            epsilon: s.merge.epsilon,
            merge_fraction: s.merge.merge_fraction,
            criterion: s.merge.criterion,
            budget: s.budget,
            rounds: s.rounds,
            sieve_sample_count: s.sieve.sample_count,
            min_pixels_for_knee: s.sieve.min_pixels_for_knee,
            learning_rate: s.train.learning_rate,
            epochs: s.train.epochs,
            batch_size: s.train.batch_size,
            seed: s.seed,
            strategy: s.strategy,
            oracle: s.oracle,
            partial: false,
            lock_labeled: s.lock_labeled,
            listen: "127.0.0.1:8080".into(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a run file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }

    pub fn settings(&self) -> Result<LoopSettings> {
        let base = match self.base_algo {
            BaseAlgo::Slic => BaseSegmentation::Slic(SlicConfig {
                target_region_size: self.base_size,
                compactness: self.compactness,
                iterations: self.slic_iterations,
            }),
            BaseAlgo::Grid => BaseSegmentation::Grid {
                cell: self.base_size,
            },
        };
        let settings = LoopSettings {
            num_classes: self.num_classes,
            ignore_id: self.ignore_id,
            class_names: self.class_names.clone(),
            base,
            merge: MergeConfig {
                epsilon: self.epsilon,
                merge_fraction: self.merge_fraction,
                criterion: self.criterion,
            },
            sieve: SieveConfig {
                sample_count: self.sieve_sample_count,
                min_pixels_for_knee: self.min_pixels_for_knee,
            },
            train: TrainConfig {
                learning_rate: self.learning_rate,
                epochs: self.epochs,
                batch_size: self.batch_size,
                seed: self.seed,
            },
            features: FeatureSpec::default(),
            strategy: self.strategy,
            budget: self.budget,
            rounds: self.rounds,
            seed: self.seed,
            oracle: self.oracle,
            partial: self.partial,
            lock_labeled: self.lock_labeled,
            dataset: Some(self.dataset.clone()),
        };
        settings.validate()?;
        Ok(settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_toml() {
        let cfg = RunConfig::from_toml(
            r#"
            name = "demo"
            dataset = "d.json"
            base_algo = "grid"
            base_size = 8
            epsilon = 0.15
            budget = 10
            rounds = 2
            oracle = "human"
            strategy = "random"
            criterion = "euclidean"
            "#,
        )
        .unwrap();
        let s = cfg.settings().unwrap();
        assert_eq!(s.base, BaseSegmentation::Grid { cell: 8 });
        assert_eq!(s.merge.epsilon, 0.15);
        assert_eq!(s.merge.criterion, MergeCriterion::Euclidean);
        assert_eq!(s.oracle, OracleMode::Human);
        assert_eq!(s.strategy, Strategy::Random);
        assert_eq!(s.budget, 10);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("epsilonn = 0.1").is_err());
        let cfg = RunConfig::from_toml("merge_fraction = 0.0").unwrap();
        assert!(cfg.settings().is_err());
        let cfg = RunConfig::from_toml("class_names = [\"a\"]").unwrap();
        assert!(cfg.settings().is_err());
    }
}
