//! Procedural shapes dataset with known ground truth, used for tests,
//! demos and desk-scale experiments.
//!
//! Class 0 is a shaded background, class 1 rectangles, class 2 ellipses and
//! class 3 thin poles. Colors are jittered per image and per pixel so the
//! classes overlap in color space near their boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::raster::{LabelMap, ProbMap, RgbImage, Segmentation};

pub const SHAPE_CLASSES: u16 = 4;
pub const SHAPE_CLASS_NAMES: [&str; 4] = ["background", "box", "blob", "pole"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapesConfig {
    pub width: u32,
    pub height: u32,
    /// Per-pixel color noise standard deviation (0-255 scale).
    pub noise: f64,
    /// Per-image color jitter amplitude.
    pub jitter: f64,
    pub ignore_id: u16,
}

impl Default for ShapesConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            noise: 22.0,
            jitter: 18.0,
            ignore_id: 255,
        }
    }
}

const BASE_COLORS: [[f64; 3]; 4] = [
    [96.0, 118.0, 92.0],
    [168.0, 92.0, 76.0],
    [84.0, 96.0, 168.0],
    [184.0, 170.0, 84.0],
];

/// One shapes image and its labels; deterministic in `(seed, index)`.
pub fn generate_shapes(cfg: &ShapesConfig, seed: u64, index: u32) -> (RgbImage, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (w, h) = (cfg.width as i64, cfg.height as i64);
    let mut labels = vec![0u16; (w * h) as usize];

    let n_boxes = rng.random_range(1..=3);
    for _ in 0..n_boxes {
        let bw = rng.random_range(w / 6..=w / 3);
        let bh = rng.random_range(h / 6..=h / 3);
        let x0 = rng.random_range(0..w - bw);
        let y0 = rng.random_range(0..h - bh);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                labels[(y * w + x) as usize] = 1;
            }
        }
    }
    let n_blobs = rng.random_range(1..=2);
    for _ in 0..n_blobs {
        let rx = rng.random_range(w as f64 / 10.0..w as f64 / 5.0);
        let ry = rng.random_range(h as f64 / 10.0..h as f64 / 5.0);
        let cx = rng.random_range(rx..w as f64 - rx);
        let cy = rng.random_range(ry..h as f64 - ry);
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    labels[(y * w + x) as usize] = 2;
                }
            }
        }
    }
    let n_poles = rng.random_range(0..=2);
    for _ in 0..n_poles {
        let pw = rng.random_range(2..=3);
        let x0 = rng.random_range(0..w - pw);
        let y0 = rng.random_range(0..h / 3);
        let y1 = rng.random_range(2 * h / 3..h);
        for y in y0..y1 {
            for x in x0..x0 + pw {
                labels[(y * w + x) as usize] = 3;
            }
        }
    }

    let mut palette = BASE_COLORS;
    for color in &mut palette {
        for v in color.iter_mut() {
            *v += rng.random_range(-cfg.jitter..=cfg.jitter);
        }
    }
    let noise = Normal::new(0.0, cfg.noise.max(1e-9)).expect("finite noise");
    let shade = rng.random_range(-20.0..20.0);
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for (p, &c) in labels.iter().enumerate() {
        let y = p as i64 / w;
        let gradient = if c == 0 {
            shade * (y as f64 / h as f64 - 0.5)
        } else {
            0.0
        };
        for v in palette[c as usize] {
            let value = v + gradient + noise.sample(&mut rng);
            data.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    let image = RgbImage::new(cfg.width, cfg.height, data).expect("sized buffer");
    let gt = LabelMap::new(cfg.width, cfg.height, labels, SHAPE_CLASSES, cfg.ignore_id)
        .expect("labels in range");
    (image, gt)
}

/// Random predictions with region structure: each region draws one of
/// `prototypes` random class distributions, perturbed per region and per
/// pixel by up to `jitter`, then renormalized. Deterministic in `seed`.
pub fn clustered_prob_map(
    seg: &Segmentation,
    num_classes: u32,
    prototypes: usize,
    jitter: f64,
    seed: u64,
) -> ProbMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = num_classes as usize;
    let protos: Vec<Vec<f64>> = (0..prototypes.max(1))
        .map(|_| (0..c).map(|_| rng.random_range(0.0..1.0f64).powi(3) + 1e-3).collect())
        .collect();
    let region_dists: Vec<Vec<f64>> = (0..seg.num_regions())
        .map(|_| {
            let base = &protos[rng.random_range(0..protos.len())];
            base.iter().map(|v| v + rng.random_range(0.0..=jitter)).collect()
        })
        .collect();
    let pixels: Vec<Vec<f32>> = seg
        .region_ids()
        .iter()
        .map(|&r| {
            let raw: Vec<f64> = region_dists[r as usize]
                .iter()
                .map(|v| v + rng.random_range(0.0..=jitter))
                .collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|v| (v / sum) as f32).collect()
        })
        .collect();
    ProbMap::from_pixels(seg.width(), seg.height(), num_classes, &pixels).expect("normalized rows")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        let cfg = ShapesConfig::default();
        let a = generate_shapes(&cfg, 7, 0);
        let b = generate_shapes(&cfg, 7, 0);
        assert_eq!(a, b);
        let c = generate_shapes(&cfg, 7, 1);
        assert_ne!(a.1, c.1);
        assert_eq!(a.0.len(), 64 * 64);
        // background and at least one box always present
        assert!(a.1.data().contains(&0));
        assert!(a.1.data().contains(&1));
    }
}
