//! On-disk layout of a run:
//!
//! ```text
//! <run>/state.json
//! <run>/base/<image_id>.seg
//! <run>/round_<t>/probs/<image_id>.ppf
//! <run>/round_<t>/merged/<image_id>.seg
//! <run>/round_<t>/batch.json
//! <run>/round_<t>/queries.json
//! <run>/round_<t>/sieved.svd
//! <run>/round_<t>/model.mlp
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::raster::{load_prob_map, load_segmentation, save_prob_map, save_segmentation, ProbMap, Segmentation};
use crate::sieve::SievedDataset;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactStore {
    root: PathBuf,
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

impl ArtifactStore {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        ensure_dir(&root)?;
        Ok(Self { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        require(root.join("state.json"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn state_path(&self) -> PathBuf {
        self.root.join("state.json")
    }

    pub fn round_dir(&self, round: u32) -> PathBuf {
        self.root.join(format!("round_{round}"))
    }

    pub fn base_path(&self, image_id: u32) -> PathBuf {
        self.root.join("base").join(format!("{image_id}.seg"))
    }

    pub fn probs_path(&self, round: u32, image_id: u32) -> PathBuf {
        self.round_dir(round).join("probs").join(format!("{image_id}.ppf"))
    }

    pub fn merged_path(&self, round: u32, image_id: u32) -> PathBuf {
        self.round_dir(round).join("merged").join(format!("{image_id}.seg"))
    }

    pub fn model_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("model.mlp")
    }

    pub fn sieved_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("sieved.svd")
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        if let Some(parent) = path.parent() {
            ensure_dir(parent)?;
        }
        let text = serde_json::to_string_pretty(value)?;
        // write-then-rename keeps the previous state readable if interrupted
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read_json<T: DeserializeOwned>(&self, path: &Path) -> Result<T> {
        let path = require(path.to_path_buf())?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::State(format!("{}: {e}", path.display())))
    }

    pub fn save_base(&self, image_id: u32, seg: &Segmentation) -> Result<()> {
        let p = self.base_path(image_id);
        ensure_dir(p.parent().unwrap())?;
        save_segmentation(seg, &p)
    }

    pub fn load_base(&self, image_id: u32, dims: (u32, u32)) -> Result<Segmentation> {
        load_segmentation(&require(self.base_path(image_id))?, Some(dims))
    }

    pub fn save_probs(&self, round: u32, image_id: u32, map: &ProbMap) -> Result<()> {
        let p = self.probs_path(round, image_id);
        ensure_dir(p.parent().unwrap())?;
        save_prob_map(map, &p)
    }

    pub fn load_probs(&self, round: u32, image_id: u32) -> Result<ProbMap> {
        load_prob_map(&require(self.probs_path(round, image_id))?)
    }

    pub fn save_merged(&self, round: u32, image_id: u32, seg: &Segmentation) -> Result<()> {
        let p = self.merged_path(round, image_id);
        ensure_dir(p.parent().unwrap())?;
        save_segmentation(seg, &p)
    }

    pub fn save_model(&self, round: u32, model: &ModelParams) -> Result<()> {
        ensure_dir(&self.round_dir(round))?;
        model.save(&self.model_path(round))
    }

    pub fn load_model(&self, round: u32) -> Result<ModelParams> {
        ModelParams::load(&require(self.model_path(round))?)
    }

    pub fn save_sieved(&self, round: u32, ds: &SievedDataset) -> Result<()> {
        ensure_dir(&self.round_dir(round))?;
        ds.save(&self.sieved_path(round))
    }
}
