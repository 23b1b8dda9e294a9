//! Scoring merged superpixels and selecting the query batch.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::RegionStats;
use crate::raster::Segmentation;

/// Pixel-mass share of each predicted-dominant class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPopularity {
    pub values: Vec<f64>,
}

impl ClassPopularity {
    pub fn get(&self, class: u16) -> f64 {
        self.values.get(class as usize).copied().unwrap_or(0.0)
    }
}

/// Pixel-level class popularity over the merged segmentations of every image.
///
/// `values[c]` is the fraction of all pixels lying in regions whose predicted
/// dominant label is `c`.
pub fn class_popularity(
    images: &[(&Segmentation, &[RegionStats])],
    num_classes: u16,
) -> Result<ClassPopularity> {
    let mut mass = vec![0u64; num_classes as usize];
    let mut total = 0u64;
    for (seg, stats) in images {
        if stats.len() != seg.num_regions() as usize {
            return Err(Error::LengthMismatch(seg.num_regions() as usize, stats.len()));
        }
        let covered: u64 = stats.iter().map(|s| s.pixel_count as u64).sum();
        if covered != seg.len() as u64 {
            return Err(Error::LengthMismatch(seg.len(), covered as usize));
        }
        for s in stats.iter() {
            let slot = mass
                .get_mut(s.predicted_dominant as usize)
                .ok_or(Error::ClassOutOfRange {
                    pixel: 0,
                    class_id: s.predicted_dominant as u32,
                    num_classes: num_classes as u32,
                })?;
            *slot += s.pixel_count as u64;
        }
        total += covered;
    }
    if total == 0 {
        return Err(Error::InvalidArgument(
            "class popularity over an empty dataset".into(),
        ));
    }
    Ok(ClassPopularity {
        values: mass.iter().map(|&m| m as f64 / total as f64).collect(),
    })
}

/// Uncertainty weighted towards rare predicted classes: `u * exp(-p(D))`.
pub fn acquisition_score(stats: &RegionStats, pop: &ClassPopularity) -> f64 {
    stats.uncertainty * (-pop.get(stats.predicted_dominant)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub image_id: u32,
    pub region_id: u32,
    pub stats: RegionStats,
    pub score: f64,
    /// Ascending pixel indices of the region.
    pub pixels: Vec<u32>,
}

/// Pixels already covered by earlier queries, per image.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledPixels {
    masks: BTreeMap<u32, Vec<bool>>,
}

impl LabeledPixels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mark(&mut self, image_id: u32, num_pixels: usize, pixels: &[u32]) {
        let mask = self
            .masks
            .entry(image_id)
            .or_insert_with(|| vec![false; num_pixels]);
        for &p in pixels {
            mask[p as usize] = true;
        }
    }

    pub fn overlaps(&self, image_id: u32, pixels: &[u32]) -> bool {
        self.masks
            .get(&image_id)
            .is_some_and(|m| pixels.iter().any(|&p| m[p as usize]))
    }

    pub fn count(&self) -> usize {
        self.masks
            .values()
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum()
    }

    pub fn mask(&self, image_id: u32) -> Option<&[bool]> {
        self.masks.get(&image_id).map(Vec::as_slice)
    }
}

fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.image_id.cmp(&b.image_id))
        .then(a.region_id.cmp(&b.region_id))
}

/// All candidates not touching a labeled pixel, best first.
pub fn rank_candidates(candidates: Vec<Candidate>, excluded: &LabeledPixels) -> Vec<Candidate> {
    let mut eligible: Vec<Candidate> = candidates
        .into_iter()
        .filter(|c| !excluded.overlaps(c.image_id, &c.pixels))
        .collect();
    eligible.sort_by(rank_order);
    eligible
}

/// The `budget` highest-scoring eligible candidates.
pub fn select_batch(
    candidates: Vec<Candidate>,
    budget: usize,
    excluded: &LabeledPixels,
) -> Result<Vec<Candidate>> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be >= 1".into()));
    }
    let mut ranked = rank_candidates(candidates, excluded);
    if ranked.is_empty() {
        return Err(Error::NoEligibleCandidates);
    }
    ranked.truncate(budget);
    Ok(ranked)
}
