//! Superpixel-quality sweep: for a range of base segmentations, measure the
//! achievable metrics against oracle superpixels and the mIoU reached by a
//! model trained on a fixed click budget of dominant labels.

use serde::Serialize;

use crate::config::{BaseSegmentation, LoopSettings};
use crate::dataset::ImageSample;
use crate::error::Result;
use crate::learner::ActiveLearner;
use crate::metrics::{AchievableMetrics, MetricAccumulator, OverlapTable};
use crate::oracle::oracle_superpixels;
use crate::par_map;
use crate::superpixel::SlicConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: String,
    pub metrics: AchievableMetrics,
    pub miou: f64,
}

/// Grids and SLIC at several scales, from heavily over-segmented to coarse.
pub fn default_sweep_configs() -> Vec<(String, BaseSegmentation)> {
    let mut out = Vec::new();
    for cell in [2u32, 4, 8, 12, 16, 24] {
        out.push((format!("grid_{cell}"), BaseSegmentation::Grid { cell }));
    }
    for target in [16u32, 32, 64, 128, 256, 512] {
        out.push((
            format!("slic_{target}"),
            BaseSegmentation::Slic(SlicConfig {
                target_region_size: target,
                ..Default::default()
            }),
        ));
    }
    out
}

/// Pooled achievable metrics of `segs` against the oracle superpixels of
/// each sample's ground truth, ignore regions excluded.
pub fn metrics_against_oracle(
    samples: &[ImageSample],
    segs: &[crate::raster::Segmentation],
) -> Result<AchievableMetrics> {
    let mut acc = MetricAccumulator::default();
    for (s, seg) in samples.iter().zip(segs) {
        let oracle = oracle_superpixels(&s.labels);
        let mask = oracle.ignore_mask();
        acc.add_table(&OverlapTable::new(seg, &oracle.segmentation, Some(&mask))?);
    }
    acc.finish()
}

/// Runs one warm-up round (random superpixels, simulated oracle, no
/// sieving) per configuration and reports metrics next to validation mIoU.
/// `template` supplies classes, training and seed; its base and budget are
/// overridden.
pub fn run_sweep(
    train: &[ImageSample],
    val: &[ImageSample],
    configs: &[(String, BaseSegmentation)],
    template: &LoopSettings,
    budget: usize,
) -> Result<Vec<SweepRow>> {
    configs
        .iter()
        .map(|(name, base)| {
            let segs = par_map(train, |s| base.segment(&s.image))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let metrics = metrics_against_oracle(train, &segs)?;
            let total: usize = segs.iter().map(|s| s.num_regions() as usize).sum();
            let settings = LoopSettings {
                base: *base,
                budget: budget.min(total),
                rounds: 0,
                ..template.clone()
            };
            let mut learner = ActiveLearner::with_bases(settings, train.to_vec(), segs, None)?;
            learner.run_to_completion()?;
            Ok(SweepRow {
                config: name.clone(),
                metrics,
                miou: learner.evaluate(val)?,
            })
        })
        .collect()
}

/// Long-format rows `(metric, value, score, config)` for the correlate tool.
pub fn long_rows(rows: &[SweepRow]) -> Vec<(String, f64, f64, String)> {
    let mut out = Vec::new();
    for r in rows {
        for (name, v) in AchievableMetrics::NAMES.iter().zip(r.metrics.values()) {
            out.push((name.to_string(), v, r.miou, r.config.clone()));
        }
    }
    out
}
