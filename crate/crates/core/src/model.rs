//! Lightweight per-pixel classifier: multinomial logistic regression over
//! local color and position features, trained with mini-batch SGD on
//! softmax cross-entropy.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ProbMap, RgbImage};
use crate::sieve::SievedDataset;

pub const MODEL_MAGIC: &[u8; 4] = b"MLP1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    R,
    G,
    B,
    XNorm,
    YNorm,
    /// 3x3 box mean of the red channel (clamped to the image).
    LocalMeanR,
    LocalMeanG,
    LocalMeanB,
}

/// Ordered feature channels; a constant bias is always appended.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub channels: Vec<Feature>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        use Feature::*;
        Self {
            channels: vec![R, G, B, XNorm, YNorm, LocalMeanR, LocalMeanG, LocalMeanB],
        }
    }
}

impl FeatureSpec {
    /// Feature dimension without the bias.
    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    /// Row-major `(pixels, dim + 1)` matrix; the last column is the bias.
    pub fn extract(&self, image: &RgbImage) -> FeatureMatrix {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let n = w * h;
        let stride = self.dim() + 1;
        let needs_local = self.channels.iter().any(|f| {
            matches!(
                f,
                Feature::LocalMeanR | Feature::LocalMeanG | Feature::LocalMeanB
            )
        });
        let local = if needs_local {
            box_mean(image)
        } else {
            Vec::new()
        };
        let xs = (w.max(2) - 1) as f32;
        let ys = (h.max(2) - 1) as f32;
        let mut data = vec![0f32; n * stride];
        for p in 0..n {
            let px = image.pixel(p);
            let row = &mut data[p * stride..(p + 1) * stride];
            for (slot, f) in row.iter_mut().zip(&self.channels) {
                *slot = match f {
                    Feature::R => px[0] as f32 / 255.0,
                    Feature::G => px[1] as f32 / 255.0,
                    Feature::B => px[2] as f32 / 255.0,
                    Feature::XNorm => (p % w) as f32 / xs,
                    Feature::YNorm => (p / w) as f32 / ys,
                    Feature::LocalMeanR => local[p * 3],
                    Feature::LocalMeanG => local[p * 3 + 1],
                    Feature::LocalMeanB => local[p * 3 + 2],
                };
            }
            row[stride - 1] = 1.0;
        }
        FeatureMatrix {
            rows: n,
            stride,
            data,
        }
    }
}

fn box_mean(image: &RgbImage) -> Vec<f32> {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let mut out = vec![0f32; (w * h * 3) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0u32; 3];
            let mut count = 0u32;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        let px = image.pixel((ny * w + nx) as usize);
                        for k in 0..3 {
                            acc[k] += px[k] as u32;
                        }
                        count += 1;
                    }
                }
            }
            let p = ((y * w + x) * 3) as usize;
            for k in 0..3 {
                out[p + k] = acc[k] as f32 / (count as f32 * 255.0);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    /// Columns per row, including the bias.
    pub stride: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 30,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Weights of shape `(feature_dim + 1) x num_classes`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub feature_dim: u32,
    pub num_classes: u32,
    pub weights: Vec<f32>,
}

impl ModelParams {
    pub fn zeros(feature_dim: u32, num_classes: u32) -> Self {
        Self {
            feature_dim,
            num_classes,
            weights: vec![0.0; (feature_dim as usize + 1) * num_classes as usize],
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.weights.len() * 4);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&self.feature_dim.to_le_bytes());
        out.extend_from_slice(&self.num_classes.to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::malformed("MLP1", "truncated header"));
        }
        if &bytes[..4] != MODEL_MAGIC {
            return Err(Error::BadMagic {
                expected: "MLP1",
                found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
            });
        }
        let feature_dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let num_classes = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let expected = (feature_dim as usize + 1) * num_classes as usize * 4;
        if bytes.len() - 12 != expected {
            return Err(Error::malformed(
                "MLP1",
                format!("expected {expected} weight bytes, found {}", bytes.len() - 12),
            ));
        }
        let weights: Vec<f32> = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::malformed("MLP1", "non-finite weight"));
        }
        Ok(Self {
            feature_dim,
            num_classes,
            weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// In-place numerically stable softmax.
pub fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

#[inline]
fn logits_into<W: Copy + Into<f64>>(weights: &[W], x: &[f32], classes: usize, out: &mut [f64]) {
    out.fill(0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let row = &weights[j * classes..(j + 1) * classes];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += xj as f64 * w.into();
        }
    }
}

/// Mean cross-entropy of `weights` over the given (row, label) samples and its
/// gradient with respect to every weight.
pub fn loss_and_gradient(
    weights: &[f64],
    features: &[&[f32]],
    labels: &[u16],
    num_classes: usize,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; weights.len()];
    let mut probs = vec![0.0; num_classes];
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        logits_into(weights, x, num_classes, &mut probs);
        softmax(&mut probs);
        loss -= probs[y as usize].max(f64::MIN_POSITIVE).ln();
        probs[y as usize] -= 1.0;
        for (j, &xj) in x.iter().enumerate() {
            let g = &mut grad[j * num_classes..(j + 1) * num_classes];
            for (gc, &d) in g.iter_mut().zip(&probs) {
                *gc += xj as f64 * d;
            }
        }
    }
    let n = features.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrainWarning {
    /// Fewer than two distinct labels; the model cannot discriminate.
    SingleClass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub warning: Option<TrainWarning>,
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains from zero weights. `features(image_id)` supplies the feature matrix
/// of each image referenced by the dataset.
pub fn train<'a, F>(
    dataset: &SievedDataset,
    features: F,
    feature_dim: usize,
    num_classes: u16,
    cfg: &TrainConfig,
) -> Result<TrainOutcome>
where
    F: Fn(u32) -> Option<&'a FeatureMatrix>,
{
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let classes = num_classes as usize;
    let mut rows: Vec<&[f32]> = Vec::with_capacity(dataset.len());
    let mut labels: Vec<u16> = Vec::with_capacity(dataset.len());
    for r in &dataset.records {
        let m = features(r.image_id).ok_or(Error::UnknownImage(r.image_id))?;
        if m.stride != feature_dim + 1 {
            return Err(Error::LengthMismatch(feature_dim + 1, m.stride));
        }
        if r.pixel as usize >= m.rows {
            return Err(Error::InvalidArgument(format!(
                "pixel {} outside image {}",
                r.pixel, r.image_id
            )));
        }
        if r.class_id as usize >= classes {
            return Err(Error::ClassOutOfRange {
                pixel: r.pixel as usize,
                class_id: r.class_id as u32,
                num_classes: classes as u32,
            });
        }
        rows.push(m.row(r.pixel as usize));
        labels.push(r.class_id);
    }
    let warning = (dataset.num_distinct_labels() < 2).then_some(TrainWarning::SingleClass);

    let mut weights = vec![0f64; (feature_dim + 1) * classes];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probs = vec![0.0; classes];
    let mut grad = vec![0.0; weights.len()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs as usize);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let x = rows[i];
                logits_into(&weights, x, classes, &mut probs);
                softmax(&mut probs);
                probs[labels[i] as usize] -= 1.0;
                for (j, &xj) in x.iter().enumerate() {
                    if xj == 0.0 {
                        continue;
                    }
                    let g = &mut grad[j * classes..(j + 1) * classes];
                    for (gc, &d) in g.iter_mut().zip(&probs) {
                        *gc += xj as f64 * d;
                    }
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= step * g;
            }
        }
        epoch_losses.push(mean_loss(&weights, &rows, &labels, classes));
    }
    Ok(TrainOutcome {
        params: ModelParams {
            feature_dim: feature_dim as u32,
            num_classes: classes as u32,
            weights: weights.iter().map(|&w| w as f32).collect(),
        },
        warning,
        epoch_losses,
    })
}

fn mean_loss(weights: &[f64], rows: &[&[f32]], labels: &[u16], classes: usize) -> f64 {
    let mut probs = vec![0.0; classes];
    let mut loss = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        logits_into(weights, x, classes, &mut probs);
        softmax(&mut probs);
        loss -= probs[y as usize].max(f64::MIN_POSITIVE).ln();
    }
    loss / rows.len() as f64
}

/// Softmax class probabilities for every pixel of an image.
pub fn predict(
    model: &ModelParams,
    features: &FeatureMatrix,
    width: u32,
    height: u32,
) -> Result<ProbMap> {
    if features.stride != model.feature_dim as usize + 1 {
        return Err(Error::LengthMismatch(
            model.feature_dim as usize + 1,
            features.stride,
        ));
    }
    let n = width as usize * height as usize;
    if features.rows != n {
        return Err(Error::LengthMismatch(n, features.rows));
    }
    let classes = model.num_classes as usize;
    let mut planes = vec![0f32; n * classes];
    let mut probs = vec![0.0; classes];
    for p in 0..n {
        logits_into(&model.weights, features.row(p), classes, &mut probs);
        softmax(&mut probs);
        for (c, &v) in probs.iter().enumerate() {
            planes[c * n + p] = v as f32;
        }
    }
    ProbMap::new_unchecked(width, height, classes as u32, planes)
}
