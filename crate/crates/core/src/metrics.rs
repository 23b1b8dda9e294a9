//! Achievable superpixel metrics, mIoU, merge correctness and correlation.
//!
//! The achievable metrics pair every region of one segmentation with its
//! best-overlapping region of the other (lowest id on ties) and score the
//! pairing as pixel accuracy (ASA), per-region precision (AP), recall (AR)
//! and F1 (AF). Evaluating `(S; G)` and `(G; S)` gives the eight values.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::MergeEvent;
use crate::oracle::answer_query;
use crate::raster::{LabelMap, Segmentation};

/// Best-match table between two segmentations over the counted pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapTable {
    sizes_a: Vec<u32>,
    sizes_b: Vec<u32>,
    /// For each region of A: (best region of B, overlap). Zero-size regions hold (0, 0).
    best_a: Vec<(u32, u32)>,
    best_b: Vec<(u32, u32)>,
}

impl OverlapTable {
    /// `exclude[p] == true` drops pixel `p` from every count.
    pub fn new(a: &Segmentation, b: &Segmentation, exclude: Option<&[bool]>) -> Result<Self> {
        a.same_dims(b.width(), b.height())?;
        if let Some(mask) = exclude {
            if mask.len() != a.len() {
                return Err(Error::LengthMismatch(a.len(), mask.len()));
            }
        }
        let mut sizes_a = vec![0u32; a.num_regions() as usize];
        let mut sizes_b = vec![0u32; b.num_regions() as usize];
        let mut overlap: HashMap<(u32, u32), u32> = HashMap::new();
        for (p, (&ra, &rb)) in a.region_ids().iter().zip(b.region_ids()).enumerate() {
            if exclude.is_some_and(|m| m[p]) {
                continue;
            }
            sizes_a[ra as usize] += 1;
            sizes_b[rb as usize] += 1;
            *overlap.entry((ra, rb)).or_insert(0) += 1;
        }
        let mut best_a = vec![(0u32, 0u32); sizes_a.len()];
        let mut best_b = vec![(0u32, 0u32); sizes_b.len()];
        let better = |cur: (u32, u32), cand: (u32, u32)| {
            cand.1 > cur.1 || (cand.1 == cur.1 && cand.1 > 0 && cand.0 < cur.0)
        };
        for (&(ra, rb), &n) in &overlap {
            if better(best_a[ra as usize], (rb, n)) {
                best_a[ra as usize] = (rb, n);
            }
            if better(best_b[rb as usize], (ra, n)) {
                best_b[rb as usize] = (ra, n);
            }
        }
        Ok(Self {
            sizes_a,
            sizes_b,
            best_a,
            best_b,
        })
    }

    /// Best match in B and overlap for region `a` of A.
    pub fn best_for_a(&self, a: u32) -> (u32, u32) {
        self.best_a[a as usize]
    }

    pub fn best_for_b(&self, b: u32) -> (u32, u32) {
        self.best_b[b as usize]
    }

    fn sums(sizes: &[u32], best: &[(u32, u32)], other_sizes: &[u32]) -> DirectionSums {
        let mut s = DirectionSums::default();
        for (&size, &(m, overlap)) in sizes.iter().zip(best) {
            if size == 0 {
                continue;
            }
            let (size, overlap) = (size as f64, overlap as f64);
            let matched = other_sizes[m as usize] as f64;
            s.overlap += overlap;
            s.pixels += size;
            s.precision += overlap / size;
            s.recall += overlap / matched;
            s.f1 += 2.0 * overlap / (size + matched);
            s.regions += 1;
        }
        s
    }

    /// Sums for the A-against-B direction.
    pub fn forward(&self) -> DirectionSums {
        Self::sums(&self.sizes_a, &self.best_a, &self.sizes_b)
    }

    /// Sums for the B-against-A direction.
    pub fn backward(&self) -> DirectionSums {
        Self::sums(&self.sizes_b, &self.best_b, &self.sizes_a)
    }
}

/// Additive partial sums for one evaluation direction; pooling across images
/// is plain addition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionSums {
    pub overlap: f64,
    pub pixels: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub regions: u64,
}

impl DirectionSums {
    pub fn add(&mut self, other: &DirectionSums) {
        self.overlap += other.overlap;
        self.pixels += other.pixels;
        self.precision += other.precision;
        self.recall += other.recall;
        self.f1 += other.f1;
        self.regions += other.regions;
    }

    pub fn finish(&self) -> Result<DirectionalMetrics> {
        if self.regions == 0 {
            return Err(Error::Undefined("no counted pixels"));
        }
        let r = self.regions as f64;
        Ok(DirectionalMetrics {
            asa: self.overlap / self.pixels,
            ap: self.precision / r,
            ar: self.recall / r,
            af: self.f1 / r,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalMetrics {
    pub asa: f64,
    pub ap: f64,
    pub ar: f64,
    pub af: f64,
}

/// All eight achievable metrics: generated against oracle and the reverse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AchievableMetrics {
    pub sg: DirectionalMetrics,
    pub gs: DirectionalMetrics,
}

impl AchievableMetrics {
    pub const NAMES: [&'static str; 8] = [
        "asa_sg", "ap_sg", "ar_sg", "af_sg", "asa_gs", "ap_gs", "ar_gs", "af_gs",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.sg.asa,
            self.sg.ap,
            self.sg.ar,
            self.sg.af,
            self.gs.asa,
            self.gs.ap,
            self.gs.ar,
            self.gs.af,
        ]
    }
}

/// Pooled accumulation of achievable metrics over many image pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricAccumulator {
    pub sg: DirectionSums,
    pub gs: DirectionSums,
}

impl MetricAccumulator {
    pub fn add_table(&mut self, table: &OverlapTable) {
        self.sg.add(&table.forward());
        self.gs.add(&table.backward());
    }

    pub fn finish(&self) -> Result<AchievableMetrics> {
        Ok(AchievableMetrics {
            sg: self.sg.finish()?,
            gs: self.gs.finish()?,
        })
    }
}

pub fn achievable_metrics(
    s: &Segmentation,
    g: &Segmentation,
    exclude: Option<&[bool]>,
) -> Result<AchievableMetrics> {
    let mut acc = MetricAccumulator::default();
    acc.add_table(&OverlapTable::new(s, g, exclude)?);
    acc.finish()
}

fn directional(a: &Segmentation, b: &Segmentation) -> Result<DirectionalMetrics> {
    OverlapTable::new(a, b, None)?.forward().finish()
}

/// Achievable segmentation accuracy of `a` against `b`.
pub fn asa(a: &Segmentation, b: &Segmentation) -> Result<f64> {
    Ok(directional(a, b)?.asa)
}

/// Achievable precision of `a` against `b`.
pub fn ap(a: &Segmentation, b: &Segmentation) -> Result<f64> {
    Ok(directional(a, b)?.ap)
}

/// Achievable recall of `a` against `b`.
pub fn ar(a: &Segmentation, b: &Segmentation) -> Result<f64> {
    Ok(directional(a, b)?.ar)
}

/// Achievable F1 of `a` against `b`.
pub fn af(a: &Segmentation, b: &Segmentation) -> Result<f64> {
    Ok(directional(a, b)?.af)
}

/// Per-class intersection and union counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IouCounts {
    pub intersection: Vec<u64>,
    pub union: Vec<u64>,
    pub gt_pixels: Vec<u64>,
}

impl IouCounts {
    pub fn new(num_classes: u16) -> Self {
        let c = num_classes as usize;
        Self {
            intersection: vec![0; c],
            union: vec![0; c],
            gt_pixels: vec![0; c],
        }
    }

    pub fn add(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
            return Err(Error::DimensionMismatch {
                expected_width: gt.width(),
                expected_height: gt.height(),
                width: pred.width(),
                height: pred.height(),
            });
        }
        let c = self.gt_pixels.len();
        if pred.num_classes() as usize != c || gt.num_classes() as usize != c {
            return Err(Error::InvalidArgument("class count mismatch".into()));
        }
        for (&p, &t) in pred.data().iter().zip(gt.data()) {
            if t == gt.ignore_id() {
                continue;
            }
            let t = t as usize;
            self.gt_pixels[t] += 1;
            self.union[t] += 1;
            if p as usize == t {
                self.intersection[t] += 1;
            } else if (p as usize) < c {
                self.union[p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Mean IoU over classes present in the ground truth.
    pub fn miou(&self) -> Result<f64> {
        let present: Vec<f64> = (0..self.gt_pixels.len())
            .filter(|&c| self.gt_pixels[c] > 0)
            .map(|c| self.intersection[c] as f64 / self.union[c] as f64)
            .collect();
        if present.is_empty() {
            return Err(Error::Undefined("ground truth has no labeled pixels"));
        }
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }
}

pub fn miou(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    let mut counts = IouCounts::new(gt.num_classes());
    counts.add(pred, gt)?;
    counts.miou()
}

/// Fraction of merge events whose two regions share the same ground-truth
/// dominant label. Events touching a region with no labeled pixel are skipped.
pub fn merge_correctness(events: &[MergeEvent], base: &Segmentation, gt: &LabelMap) -> Result<f64> {
    let (correct, total) = merge_correctness_counts(events, base, gt)?;
    if total == 0 {
        return Err(Error::Undefined("no evaluable merge events"));
    }
    Ok(correct as f64 / total as f64)
}

/// (correct, evaluated) event counts, for pooling across images.
pub fn merge_correctness_counts(
    events: &[MergeEvent],
    base: &Segmentation,
    gt: &LabelMap,
) -> Result<(u64, u64)> {
    base.same_dims(gt.width(), gt.height())?;
    let pixels = base.region_pixels();
    let mut dominant: Vec<Option<Option<u16>>> = vec![None; pixels.len()];
    let mut label = |r: u32| -> Option<u16> {
        *dominant[r as usize]
            .get_or_insert_with(|| answer_query(&pixels[r as usize], gt).ok().map(|a| a.dominant))
    };
    let (mut correct, mut total) = (0u64, 0u64);
    for e in events {
        if let (Some(a), Some(b)) = (label(e.root), label(e.absorbed)) {
            total += 1;
            correct += u64::from(a == b);
        }
    }
    Ok((correct, total))
}

/// Pearson correlation coefficient.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
