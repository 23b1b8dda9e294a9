//! Ground-truth driven annotator and oracle superpixels.

use serde::{Deserialize, Serialize};

use crate::components::label_components;
use crate::error::{Error, Result};
use crate::raster::{LabelMap, Segmentation};

/// Maximal connected same-label components of a label map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleSuperpixels {
    pub segmentation: Segmentation,
    /// Regions made of ignore pixels; excluded from metrics.
    pub ignored: Vec<bool>,
}

impl OracleSuperpixels {
    /// Per-pixel mask of pixels inside ignored regions.
    pub fn ignore_mask(&self) -> Vec<bool> {
        self.segmentation
            .region_ids()
            .iter()
            .map(|&r| self.ignored[r as usize])
            .collect()
    }
}

pub fn oracle_superpixels(gt: &LabelMap) -> OracleSuperpixels {
    let data = gt.data();
    let (ids, count) = label_components(gt.width(), gt.height(), |a, b| data[a] == data[b]);
    let mut ignored = vec![false; count as usize];
    for (p, &id) in ids.iter().enumerate() {
        if gt.is_ignored(p) {
            ignored[id as usize] = true;
        }
    }
    OracleSuperpixels {
        segmentation: Segmentation::from_dense_unchecked(gt.width(), gt.height(), ids, count),
        ignored,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub dominant: u16,
    /// Fraction of non-ignore pixels whose true label differs from `dominant`.
    pub noise_rate: f64,
}

/// Majority ground-truth label over the non-ignore pixels of a region;
/// ties go to the lowest class id.
pub fn answer_query(pixels: &[u32], gt: &LabelMap) -> Result<OracleAnswer> {
    let mut counts = vec![0u32; gt.num_classes() as usize];
    let mut total = 0u32;
    for &p in pixels {
        let p = p as usize;
        if p >= gt.len() {
            return Err(Error::InvalidArgument(format!(
                "pixel {p} outside {}x{} label map",
                gt.width(),
                gt.height()
            )));
        }
        if !gt.is_ignored(p) {
            counts[gt.get(p) as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Unanswerable);
    }
    let mut dominant = 0usize;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[dominant] {
            dominant = c;
        }
    }
    Ok(OracleAnswer {
        dominant: dominant as u16,
        noise_rate: (total - counts[dominant]) as f64 / total as f64,
    })
}
