//! Region-based active learning for semantic segmentation.
//!
//! Pipeline per round: predict with the current model, merge base
//! superpixels whose class distributions agree, rank the merged regions by
//! uncertainty weighted toward rare classes, ask an oracle for one dominant
//! label per region, sieve out pixels that probably disagree with that label
//! and retrain.

pub mod acquisition;
pub mod components;
pub mod config;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod learner;
pub mod merge;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod overlay;
pub mod query;
pub mod raster;
pub mod sieve;
pub mod store;
pub mod superpixel;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}
