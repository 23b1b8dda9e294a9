//! Raster types shared by every stage: label maps, probability maps,
//! region segmentations and RGB images.

mod io;

pub use io::{
    load_label_map, load_prob_map, load_rgb, load_segmentation, read_prob_map, read_segmentation,
    save_label_map, save_prob_map, save_rgb, save_segmentation, write_prob_map, write_segmentation,
    PPF_MAGIC, SEG_MAGIC,
};

use crate::error::{Error, Result};

/// Pixel neighborhood used for adjacency and connected components.
/// Switching to 8-connectivity only requires adding the diagonal offsets.
pub const NEIGHBOR_OFFSETS: &[(i32, i32)] = &[(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Tolerance on per-pixel probability sums when validating a [`ProbMap`].
pub const PROB_SUM_TOLERANCE: f64 = 1e-5;

/// Iterate the in-bounds neighbors of pixel `idx` in a `width` x `height` raster.
#[inline]
pub fn neighbors(idx: usize, width: u32, height: u32) -> impl Iterator<Item = usize> {
    let w = width as i64;
    let h = height as i64;
    let x = idx as i64 % w;
    let y = idx as i64 / w;
    NEIGHBOR_OFFSETS.iter().filter_map(move |&(dx, dy)| {
        let nx = x + dx as i64;
        let ny = y + dy as i64;
        (nx >= 0 && ny >= 0 && nx < w && ny < h).then(|| (ny * w + nx) as usize)
    })
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<()> {
    let expected = width as usize * height as usize;
    if expected != len {
        return Err(Error::LengthMismatch(expected, len));
    }
    Ok(())
}

/// Per-pixel class ids with an ignore sentinel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    data: Vec<u16>,
    ignore_id: u16,
    num_classes: u16,
}

impl LabelMap {
    pub fn new(
        width: u32,
        height: u32,
        data: Vec<u16>,
        num_classes: u16,
        ignore_id: u16,
    ) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some((pixel, &v)) = data
            .iter()
            .enumerate()
            .find(|(_, &v)| v != ignore_id && v >= num_classes)
        {
            return Err(Error::ClassOutOfRange {
                pixel,
                class_id: v as u32,
                num_classes: num_classes as u32,
            });
        }
        Ok(Self {
            width,
            height,
            data,
            ignore_id,
            num_classes,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn ignore_id(&self) -> u16 {
        self.ignore_id
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    #[inline]
    pub fn get(&self, idx: usize) -> u16 {
        self.data[idx]
    }

    #[inline]
    pub fn is_ignored(&self, idx: usize) -> bool {
        self.data[idx] == self.ignore_id
    }
}

/// Per-pixel class distributions, stored as `num_classes` row-major planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    width: u32,
    height: u32,
    num_classes: u32,
    planes: Vec<f32>,
}

impl ProbMap {
    /// Builds a map from plane-major data, validating range and normalization.
    pub fn new(width: u32, height: u32, num_classes: u32, planes: Vec<f32>) -> Result<Self> {
        let map = Self::new_unchecked(width, height, num_classes, planes)?;
        map.validate()?;
        Ok(map)
    }

    pub(crate) fn new_unchecked(
        width: u32,
        height: u32,
        num_classes: u32,
        planes: Vec<f32>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        let n = width as usize * height as usize;
        if planes.len() != n * num_classes as usize {
            return Err(Error::LengthMismatch(n * num_classes as usize, planes.len()));
        }
        Ok(Self {
            width,
            height,
            num_classes,
            planes,
        })
    }

    /// Builds a map from pixel-major rows of length `num_classes`.
    pub fn from_pixels(
        width: u32,
        height: u32,
        num_classes: u32,
        pixels: &[Vec<f32>],
    ) -> Result<Self> {
        let n = width as usize * height as usize;
        if pixels.len() != n {
            return Err(Error::LengthMismatch(n, pixels.len()));
        }
        let c = num_classes as usize;
        let mut planes = vec![0f32; n * c];
        for (i, p) in pixels.iter().enumerate() {
            if p.len() != c {
                return Err(Error::LengthMismatch(c, p.len()));
            }
            for (k, &v) in p.iter().enumerate() {
                planes[k * n + i] = v;
            }
        }
        Self::new(width, height, num_classes, planes)
    }

    /// Every pixel gets the same distribution `1 / num_classes`.
    pub fn uniform(width: u32, height: u32, num_classes: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            num_classes,
            planes: vec![1.0 / num_classes as f32; n * num_classes as usize],
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            let mut sum = 0f64;
            for c in 0..self.num_classes as usize {
                let v = self.planes[c * n + i];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::ProbabilityOutOfRange {
                        pixel: i,
                        class: c,
                        value: v,
                    });
                }
                sum += v as f64;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::NotNormalized { pixel: i, sum });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn planes(&self) -> &[f32] {
        &self.planes
    }

    pub fn plane(&self, class: usize) -> &[f32] {
        let n = self.len();
        &self.planes[class * n..(class + 1) * n]
    }

    #[inline]
    pub fn prob(&self, pixel: usize, class: usize) -> f32 {
        self.planes[class * self.len() + pixel]
    }

    /// Writes the distribution at `pixel` into `out` (length `num_classes`).
    #[inline]
    pub fn pixel_into(&self, pixel: usize, out: &mut [f64]) {
        let n = self.len();
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.planes[c * n + pixel] as f64;
        }
    }

    pub fn pixel(&self, pixel: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_classes as usize];
        self.pixel_into(pixel, &mut out);
        out
    }

    /// Most probable class at `pixel`; ties resolve to the lowest class id.
    #[inline]
    pub fn argmax(&self, pixel: usize) -> u16 {
        let n = self.len();
        let mut best = 0usize;
        let mut best_v = self.planes[pixel];
        for c in 1..self.num_classes as usize {
            let v = self.planes[c * n + pixel];
            if v > best_v {
                best = c;
                best_v = v;
            }
        }
        best as u16
    }

    pub fn argmax_map(&self, ignore_id: u16) -> LabelMap {
        let data = (0..self.len()).map(|i| self.argmax(i)).collect();
        LabelMap {
            width: self.width,
            height: self.height,
            data,
            ignore_id,
            num_classes: self.num_classes as u16,
        }
    }
}

/// Per-pixel region ids, dense in `0..num_regions`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    width: u32,
    height: u32,
    region_ids: Vec<u32>,
    num_regions: u32,
}

impl Segmentation {
    /// Builds a segmentation whose ids must already be dense.
    pub fn new(width: u32, height: u32, region_ids: Vec<u32>) -> Result<Self> {
        check_dims(width, height, region_ids.len())?;
        let num_regions = region_ids.iter().max().map_or(0, |&m| m + 1);
        let mut used = vec![false; num_regions as usize];
        for &id in &region_ids {
            used[id as usize] = true;
        }
        if let Some(missing) = used.iter().position(|&u| !u) {
            return Err(Error::EmptyRegion(missing as u32));
        }
        Ok(Self {
            width,
            height,
            region_ids,
            num_regions,
        })
    }

    /// Builds a segmentation from arbitrary ids, relabeling them densely in
    /// order of first appearance in a row-major scan.
    pub fn from_sparse(width: u32, height: u32, ids: &[u32]) -> Result<Self> {
        check_dims(width, height, ids.len())?;
        let mut map = std::collections::HashMap::new();
        let region_ids = ids
            .iter()
            .map(|&id| {
                let next = map.len() as u32;
                *map.entry(id).or_insert(next)
            })
            .collect();
        Ok(Self {
            width,
            height,
            region_ids,
            num_regions: map.len() as u32,
        })
    }

    pub(crate) fn from_dense_unchecked(
        width: u32,
        height: u32,
        region_ids: Vec<u32>,
        num_regions: u32,
    ) -> Self {
        debug_assert_eq!(region_ids.len(), width as usize * height as usize);
        Self {
            width,
            height,
            region_ids,
            num_regions,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.region_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region_ids.is_empty()
    }

    pub fn num_regions(&self) -> u32 {
        self.num_regions
    }

    pub fn region_ids(&self) -> &[u32] {
        &self.region_ids
    }

    #[inline]
    pub fn region_of(&self, pixel: usize) -> u32 {
        self.region_ids[pixel]
    }

    pub fn same_dims(&self, width: u32, height: u32) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                expected_width: self.width,
                expected_height: self.height,
                width,
                height,
            });
        }
        Ok(())
    }

    pub fn region_sizes(&self) -> Vec<u32> {
        let mut sizes = vec![0u32; self.num_regions as usize];
        for &id in &self.region_ids {
            sizes[id as usize] += 1;
        }
        sizes
    }

    /// Pixel indices of each region, ascending within a region.
    pub fn region_pixels(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_regions as usize];
        for (i, &id) in self.region_ids.iter().enumerate() {
            out[id as usize].push(i as u32);
        }
        out
    }
}

/// 8-bit RGB raster, row-major, three bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len() / 3)?;
        if data.len() % 3 != 0 {
            return Err(Error::LengthMismatch(width as usize * height as usize * 3, data.len()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            data: rgb.iter().copied().cycle().take(n * 3).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, idx: usize) -> [u8; 3] {
        [self.data[idx * 3], self.data[idx * 3 + 1], self.data[idx * 3 + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, idx: usize, rgb: [u8; 3]) {
        self.data[idx * 3..idx * 3 + 3].copy_from_slice(&rgb);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_map_rejects_out_of_range() {
        let err = LabelMap::new(2, 2, vec![0, 7, 0, 1], 2, 255).unwrap_err();
        assert!(matches!(err, Error::ClassOutOfRange { class_id: 7, .. }));
        assert!(LabelMap::new(2, 2, vec![0, 1, 255, 1], 2, 255).is_ok());
    }

    #[test]
    fn prob_map_rejects_bad_sum() {
        let err = ProbMap::new(1, 1, 2, vec![0.5, 0.4]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
        let err = ProbMap::new(1, 1, 2, vec![1.5, -0.5]).unwrap_err();
        assert!(matches!(err, Error::ProbabilityOutOfRange { .. }));
    }

    #[test]
    fn segmentation_densify_first_appearance() {
        let s = Segmentation::from_sparse(2, 1, &[3, 7]).unwrap();
        assert_eq!(s.region_ids(), &[0, 1]);
        let s = Segmentation::from_sparse(3, 1, &[9, 2, 9]).unwrap();
        assert_eq!(s.region_ids(), &[0, 1, 0]);
        assert_eq!(s.num_regions(), 2);
    }

    #[test]
    fn segmentation_requires_dense_ids() {
        assert!(matches!(
            Segmentation::new(2, 1, vec![0, 2]),
            Err(Error::EmptyRegion(1))
        ));
        assert_eq!(Segmentation::new(2, 1, vec![0, 1]).unwrap().num_regions(), 2);
    }

    #[test]
    fn neighbors_are_four_connected() {
        let mut n: Vec<_> = neighbors(4, 3, 3).collect();
        n.sort();
        assert_eq!(n, vec![1, 3, 5, 7]);
        let mut n: Vec<_> = neighbors(0, 3, 3).collect();
        n.sort();
        assert_eq!(n, vec![1, 3]);
    }
}
