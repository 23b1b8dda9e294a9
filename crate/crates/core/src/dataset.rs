//! Dataset manifests and in-memory image samples.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{load_label_map, load_rgb, save_label_map, save_rgb, LabelMap, RgbImage};
use crate::synth::{generate_shapes, ShapesConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: u32,
    /// RGB PNG, relative to the manifest directory unless absolute.
    pub image: PathBuf,
    /// Single-channel label PNG.
    pub labels: PathBuf,
    pub split: Split,
}

/// JSON manifest listing the images of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Vec<DatasetEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

/// A decoded image with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub id: u32,
    pub image: RgbImage,
    pub labels: LabelMap,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ds: Dataset = serde_json::from_str(&text)?;
        ds.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.images {
            if !seen.insert(e.id) {
                return Err(Error::Config(format!("duplicate image id {}", e.id)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.images.iter().filter(move |e| e.split == split)
    }

    /// Decodes every entry of `split`, checking image and label sizes agree.
    pub fn load_split(&self, split: Split, num_classes: u16, ignore_id: u16) -> Result<Vec<ImageSample>> {
        self.entries(split)
            .map(|e| {
                let image = load_rgb(&self.resolve(&e.image))?;
                let labels = load_label_map(&self.resolve(&e.labels), num_classes, ignore_id)?;
                if (image.width(), image.height()) != (labels.width(), labels.height()) {
                    return Err(Error::DimensionMismatch {
                        expected_width: image.width(),
                        expected_height: image.height(),
                        width: labels.width(),
                        height: labels.height(),
                    });
                }
                Ok(ImageSample {
                    id: e.id,
                    image,
                    labels,
                })
            })
            .collect()
    }
}

/// In-memory shapes samples with ids `first_id..first_id + count`.
pub fn shapes_samples(cfg: &ShapesConfig, seed: u64, first_id: u32, count: u32) -> Vec<ImageSample> {
    (first_id..first_id + count)
        .map(|id| {
            let (image, labels) = generate_shapes(cfg, seed, id);
            ImageSample { id, image, labels }
        })
        .collect()
}

/// Writes a shapes dataset (PNGs plus `dataset.json`) under `dir`.
pub fn write_shapes_dataset(
    dir: &Path,
    cfg: &ShapesConfig,
    seed: u64,
    train: u32,
    val: u32,
) -> Result<PathBuf> {
    for sub in ["images", "labels"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut ds = Dataset::default();
    for sample in shapes_samples(cfg, seed, 0, train + val) {
        let image = PathBuf::from(format!("images/{:04}.png", sample.id));
        let labels = PathBuf::from(format!("labels/{:04}.png", sample.id));
        save_rgb(&sample.image, &dir.join(&image))?;
        save_label_map(&sample.labels, &dir.join(&labels))?;
        ds.images.push(DatasetEntry {
            id: sample.id,
            image,
            labels,
            split: if sample.id < train { Split::Train } else { Split::Val },
        });
    }
    let manifest = dir.join("dataset.json");
    ds.save(&manifest)?;
    Ok(manifest)
}
