//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The page shows one synthetic image and lets the user change the base
//! superpixels, sweep the merge threshold while watching AF(G;S), and click
//! a region to see its confidence curve, knee and sieved pixels.

use spal_core::config::{BaseSegmentation, LoopSettings};
use spal_core::dataset::shapes_samples;
use spal_core::learner::ActiveLearner;
use spal_core::merge::{adaptive_merge_detailed, Exploration, MergeConfig};
use spal_core::metrics::{achievable_metrics, AchievableMetrics};
use spal_core::model::{predict, ModelParams};
use spal_core::oracle::{answer_query, oracle_superpixels, OracleSuperpixels};
use spal_core::overlay::draw_boundaries;
use spal_core::raster::{LabelMap, ProbMap, RgbImage, Segmentation};
use spal_core::sieve::{confidence_curve, kneedle, sieve_superpixel, SieveConfig, Threshold};
use spal_core::superpixel::SlicConfig;
use spal_core::synth::{ShapesConfig, SHAPE_CLASS_NAMES};
use spal_core::Result;
use wasm_bindgen::prelude::*;

const BOUNDARY: [u8; 3] = [255, 230, 0];

/// Platform-independent state behind [`Demo`].
pub struct DemoState {
    image: RgbImage,
    labels: LabelMap,
    oracle: OracleSuperpixels,
    probs: ProbMap,
    base: Segmentation,
    merged: Segmentation,
}

fn to_rgba(image: &RgbImage) -> Vec<u8> {
    image.data().chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Model from a short simulated warm-up on other images of the same seed.
fn warmup_model(seed: u64, size: u32) -> Result<ModelParams> {
    let cfg = ShapesConfig {
        width: size,
        height: size,
        ..Default::default()
    };
    let settings = LoopSettings {
        budget: 30,
        rounds: 0,
        seed,
        ..Default::default()
    };
    let mut learner = ActiveLearner::new(settings, shapes_samples(&cfg, seed, 1, 4), None)?;
    learner.run_to_completion()?;
    Ok(learner.model().expect("trained after warm-up").clone())
}

impl DemoState {
    pub fn new(seed: u64, size: u32) -> Result<Self> {
        let cfg = ShapesConfig {
            width: size,
            height: size,
            ..Default::default()
        };
        let sample = shapes_samples(&cfg, seed, 0, 1).remove(0);
        let model = warmup_model(seed, size)?;
        let spec = LoopSettings::default().features;
        let probs = predict(&model, &spec.extract(&sample.image), size, size)?;
        let base = BaseSegmentation::Slic(SlicConfig::default()).segment(&sample.image)?;
        Ok(Self {
            oracle: oracle_superpixels(&sample.labels),
            image: sample.image,
            labels: sample.labels,
            probs,
            merged: base.clone(),
            base,
        })
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn image_rgba(&self) -> Vec<u8> {
        to_rgba(&self.image)
    }

    /// Recomputes the base superpixels; returns their count.
    pub fn segment(&mut self, region_size: u32, compactness: f64) -> Result<u32> {
        let cfg = SlicConfig {
            target_region_size: region_size,
            compactness,
            ..Default::default()
        };
        self.base = BaseSegmentation::Slic(cfg).segment(&self.image)?;
        self.merged = self.base.clone();
        Ok(self.base.num_regions())
    }

    pub fn base_rgba(&self) -> Result<Vec<u8>> {
        Ok(to_rgba(&draw_boundaries(&self.image, &self.base, BOUNDARY)?))
    }

    fn metrics(&self, seg: &Segmentation) -> Result<AchievableMetrics> {
        achievable_metrics(seg, &self.oracle.segmentation, Some(&self.oracle.ignore_mask()))
    }

    /// Merges the base superpixels at `epsilon` and scores the result.
    pub fn merge(&mut self, epsilon: f64) -> Result<MergeView> {
        let cfg = MergeConfig {
            epsilon,
            ..Default::default()
        };
        cfg.validate()?;
        let out = adaptive_merge_detailed(&self.base, &self.probs, &cfg, Exploration::BreadthFirst)?;
        self.merged = out.segmentation;
        let m = self.metrics(&self.merged)?;
        Ok(MergeView {
            regions: self.merged.num_regions(),
            base_regions: self.base.num_regions(),
            af_gs: m.gs.af,
            asa_sg: m.sg.asa,
            rgba: to_rgba(&draw_boundaries(&self.image, &self.merged, BOUNDARY)?),
        })
    }

    /// Sieves the merged region under pixel `(x, y)` with its oracle label.
    pub fn sieve_at(&self, x: u32, y: u32) -> Result<SieveView> {
        if x >= self.width() || y >= self.height() {
            return Err(spal_core::Error::InvalidArgument(format!("pixel ({x}, {y}) outside image")));
        }
        let region = self.merged.region_of((y * self.width() + x) as usize);
        let pixels: Vec<u32> = self
            .merged
            .region_ids()
            .iter()
            .enumerate()
            .filter(|&(_, &r)| r == region)
            .map(|(p, _)| p as u32)
            .collect();
        let dominant = answer_query(&pixels, &self.labels)?.dominant;
        let cfg = SieveConfig::default();
        let result = sieve_superpixel(&pixels, dominant, &self.probs, &cfg)?;
        let curve = confidence_curve(&pixels, self.probs.plane(dominant as usize), cfg.sample_count);
        let knee = match result.threshold {
            Threshold::Knee(_) if curve.len() >= 3 => kneedle(&curve)?.map_or(-1, |k| k as i32),
            _ => -1,
        };
        let noise = |px: &[u32]| {
            let counted: Vec<&u32> = px.iter().filter(|&&p| !self.labels.is_ignored(p as usize)).collect();
            let wrong = counted.iter().filter(|&&&p| self.labels.get(p as usize) != dominant).count();
            wrong as f64 / counted.len().max(1) as f64
        };
        let mut rgba = vec![0u8; self.merged.len() * 4];
        let mut kept_mask = vec![false; self.merged.len()];
        for &p in &result.kept_pixels {
            kept_mask[p as usize] = true;
        }
        for &p in &pixels {
            let px = if kept_mask[p as usize] { [40, 200, 90, 150] } else { [230, 40, 40, 190] };
            rgba[p as usize * 4..p as usize * 4 + 4].copy_from_slice(&px);
        }
        Ok(SieveView {
            label: SHAPE_CLASS_NAMES.get(dominant as usize).copied().unwrap_or("?").to_string(),
            total: pixels.len() as u32,
            kept: result.kept_pixels.len() as u32,
            noise_before: noise(&pixels),
            noise_after: noise(&result.kept_pixels),
            knee,
            curve,
            rgba,
        })
    }
}

#[wasm_bindgen]
pub struct MergeView {
    regions: u32,
    base_regions: u32,
    af_gs: f64,
    asa_sg: f64,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl MergeView {
    #[wasm_bindgen(getter)]
    pub fn regions(&self) -> u32 {
        self.regions
    }

    #[wasm_bindgen(getter)]
    pub fn base_regions(&self) -> u32 {
        self.base_regions
    }

    #[wasm_bindgen(getter)]
    pub fn af_gs(&self) -> f64 {
        self.af_gs
    }

    #[wasm_bindgen(getter)]
    pub fn asa_sg(&self) -> f64 {
        self.asa_sg
    }

    /// Image with merged region boundaries, RGBA.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

#[wasm_bindgen]
pub struct SieveView {
    label: String,
    total: u32,
    kept: u32,
    noise_before: f64,
    noise_after: f64,
    knee: i32,
    curve: Vec<f64>,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl SieveView {
    #[wasm_bindgen(getter)]
    pub fn label(&self) -> String {
        self.label.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn total(&self) -> u32 {
        self.total
    }

    #[wasm_bindgen(getter)]
    pub fn kept(&self) -> u32 {
        self.kept
    }

    #[wasm_bindgen(getter)]
    pub fn noise_before(&self) -> f64 {
        self.noise_before
    }

    #[wasm_bindgen(getter)]
    pub fn noise_after(&self) -> f64 {
        self.noise_after
    }

    /// Index into `curve` of the knee, or -1 when the region is kept whole.
    #[wasm_bindgen(getter)]
    pub fn knee(&self) -> i32 {
        self.knee
    }

    /// Sampled ascending confidences for the region's label.
    pub fn curve(&self) -> Vec<f64> {
        self.curve.clone()
    }

    /// Kept pixels in green, dropped pixels in red, RGBA.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

fn js(e: spal_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: u32) -> Result<Demo, JsError> {
        Ok(Demo {
            state: DemoState::new(seed as u64, size).map_err(js)?,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.state.width()
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.state.height()
    }

    pub fn image_rgba(&self) -> Vec<u8> {
        self.state.image_rgba()
    }

    pub fn segment(&mut self, region_size: u32, compactness: f64) -> Result<u32, JsError> {
        self.state.segment(region_size, compactness).map_err(js)
    }

    pub fn base_rgba(&self) -> Result<Vec<u8>, JsError> {
        self.state.base_rgba().map_err(js)
    }

    pub fn merge(&mut self, epsilon: f64) -> Result<MergeView, JsError> {
        self.state.merge(epsilon).map_err(js)
    }

    pub fn sieve_at(&self, x: u32, y: u32) -> Result<SieveView, JsError> {
        self.state.sieve_at(x, y).map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_operations() {
        let mut d = DemoState::new(3, 48).unwrap();
        assert_eq!(d.image_rgba().len(), 48 * 48 * 4);
        let n = d.segment(32, 10.0).unwrap();
        assert!(n > 10);
        assert_eq!(d.base_rgba().unwrap().len(), 48 * 48 * 4);

        let none = d.merge(0.0).unwrap();
        assert_eq!(none.regions, n);
        let some = d.merge(0.3).unwrap();
        assert!(some.regions < n);
        assert!((0.0..=1.0).contains(&some.af_gs));

        let view = d.sieve_at(10, 10).unwrap();
        assert!(view.kept >= 1 && view.kept <= view.total);
        assert!(view.curve.windows(2).all(|w| w[0] <= w[1]));
        assert!(view.knee < view.curve.len() as i32);
        assert!(d.sieve_at(48, 0).is_err());
    }
}
