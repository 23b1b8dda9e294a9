//! Per-superpixel confidence sieving of dominant labels.
//!
//! For a queried superpixel, the model's confidence in the queried dominant
//! class is collected over its pixels and sorted. The knee of that curve is
//! the superpixel's own threshold: pixels below it are dropped from training.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::QueryRecord;
use crate::raster::ProbMap;

/// Curves whose value range is below this are treated as flat.
const FLAT_EPS: f64 = 1e-12;

pub const SVD_MAGIC: &[u8; 4] = b"SVD1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveConfig {
    /// Pixels subsampled from the sorted confidence curve for knee detection.
    pub sample_count: usize,
    /// Regions with fewer pixels are kept whole.
    pub min_pixels_for_knee: usize,
}

impl Default for SieveConfig {
    fn default() -> Self {
        Self {
            sample_count: 20,
            min_pixels_for_knee: 5,
        }
    }
}

/// Knee of an ascending curve: the index maximizing the gap between the
/// min-max normalized values and the normalized index. `None` for flat
/// curves or when no point lies above the diagonal.
pub fn kneedle(values: &[f64]) -> Result<Option<usize>> {
    if values.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "kneedle needs at least 3 values, got {}",
            values.len()
        )));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Unsorted);
    }
    let lo = values[0];
    let range = values[values.len() - 1] - lo;
    if range < FLAT_EPS {
        return Ok(None);
    }
    let last = (values.len() - 1) as f64;
    let mut best = 0usize;
    let mut best_diff = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        let diff = (v - lo) / range - i as f64 / last;
        if diff > best_diff {
            best_diff = diff;
            best = i;
        }
    }
    Ok((best_diff > FLAT_EPS).then_some(best))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Threshold {
    KeepAll,
    Knee(f32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SieveResult {
    pub threshold: Threshold,
    /// Ascending pixel indices whose confidence passes the threshold.
    pub kept_pixels: Vec<u32>,
}

/// Sieves one superpixel labeled `dominant`.
pub fn sieve_superpixel(
    pixels: &[u32],
    dominant: u16,
    probs: &ProbMap,
    cfg: &SieveConfig,
) -> Result<SieveResult> {
    if pixels.is_empty() {
        return Err(Error::InvalidArgument("cannot sieve an empty region".into()));
    }
    if dominant as u32 >= probs.num_classes() {
        return Err(Error::ClassOutOfRange {
            pixel: pixels[0] as usize,
            class_id: dominant as u32,
            num_classes: probs.num_classes(),
        });
    }
    let keep_all = || SieveResult {
        threshold: Threshold::KeepAll,
        kept_pixels: pixels.to_vec(),
    };
    let n = pixels.len();
    if n < cfg.min_pixels_for_knee.max(3) || cfg.sample_count < 3 {
        return Ok(keep_all());
    }
    let plane = probs.plane(dominant as usize);
    let sample = confidence_curve(pixels, plane, cfg.sample_count);
    let Some(knee) = kneedle(&sample)? else {
        return Ok(keep_all());
    };
    let phi = sample[knee] as f32;
    let kept_pixels = pixels
        .iter()
        .copied()
        .filter(|&p| plane[p as usize] >= phi)
        .collect();
    Ok(SieveResult {
        threshold: Threshold::Knee(phi),
        kept_pixels,
    })
}

/// Ascending confidences of `pixels` under `plane`, subsampled at
/// `sample_count` evenly spaced ranks (first and last always included).
pub fn confidence_curve(pixels: &[u32], plane: &[f32], sample_count: usize) -> Vec<f64> {
    let mut conf: Vec<f32> = pixels.iter().map(|&p| plane[p as usize]).collect();
    conf.sort_by(f32::total_cmp);
    let n = conf.len();
    let m = sample_count.min(n);
    if m < 2 {
        return conf.iter().take(m).map(|&c| c as f64).collect();
    }
    (0..m).map(|k| conf[k * (n - 1) / (m - 1)] as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SievedRecord {
    pub image_id: u32,
    pub pixel: u32,
    pub class_id: u16,
}

/// Pixel-level training labels, sorted by image then pixel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SievedDataset {
    pub records: Vec<SievedRecord>,
}

impl SievedDataset {
    /// Sorts records and rejects any pixel carrying two different labels.
    pub fn from_records(mut records: Vec<SievedRecord>) -> Result<Self> {
        records.sort_unstable();
        records.dedup();
        if let Some(w) = records
            .windows(2)
            .find(|w| w[0].image_id == w[1].image_id && w[0].pixel == w[1].pixel)
        {
            return Err(Error::ConflictingLabels {
                image_id: w[0].image_id,
                pixel: w[0].pixel,
                first: w[0].class_id,
                second: w[1].class_id,
            });
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_distinct_labels(&self) -> usize {
        let mut labels: Vec<u16> = self.records.iter().map(|r| r.class_id).collect();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.records.len() * 10);
        out.extend_from_slice(SVD_MAGIC);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.image_id.to_le_bytes());
            out.extend_from_slice(&r.pixel.to_le_bytes());
            out.extend_from_slice(&r.class_id.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::malformed("SVD1", "truncated header"));
        }
        if &bytes[..4] != SVD_MAGIC {
            return Err(Error::BadMagic {
                expected: "SVD1",
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
            });
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let payload = &bytes[8..];
        if payload.len() != count * 10 {
            return Err(Error::malformed(
                "SVD1",
                format!("expected {} record bytes, found {}", count * 10, payload.len()),
            ));
        }
        let records = payload
            .chunks_exact(10)
            .map(|c| SievedRecord {
                image_id: u32::from_le_bytes(c[0..4].try_into().unwrap()),
                pixel: u32::from_le_bytes(c[4..8].try_into().unwrap()),
                class_id: u16::from_le_bytes(c[8..10].try_into().unwrap()),
            })
            .collect();
        Self::from_records(records)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Training set from every answered query. With `cfg = None` each queried
/// superpixel contributes all its pixels; otherwise each one is sieved with
/// the probability map returned by `probs` for its image.
pub fn build_sieved_dataset<'a, F>(
    queries: &[QueryRecord],
    probs: F,
    cfg: Option<&SieveConfig>,
) -> Result<SievedDataset>
where
    F: Fn(u32) -> Option<&'a ProbMap>,
{
    let mut records = Vec::new();
    for q in queries {
        let Some(class_id) = q.answer() else { continue };
        let kept = match cfg {
            None => q.pixels.clone(),
            Some(cfg) => {
                let map = probs(q.image_id).ok_or(Error::MissingProbMap(q.image_id))?;
                sieve_superpixel(&q.pixels, class_id, map, cfg)?.kept_pixels
            }
        };
        records.extend(kept.into_iter().map(|pixel| SievedRecord {
            image_id: q.image_id,
            pixel,
            class_id,
        }));
    }
    SievedDataset::from_records(records)
}
