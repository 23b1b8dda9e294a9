//! RGBA overlays for showing regions on top of an image.

use std::io::Cursor;

use image::{ImageBuffer, ImageFormat, Rgb, Rgba};

use crate::error::{Error, Result};
use crate::raster::{neighbors, RgbImage, Segmentation};

/// Pixels with at least one neighbor in a different region.
pub fn boundary_mask(seg: &Segmentation) -> Vec<bool> {
    let ids = seg.region_ids();
    (0..seg.len())
        .map(|p| neighbors(p, seg.width(), seg.height()).any(|q| ids[q] != ids[p]))
        .collect()
}

/// RGBA buffer with region boundaries drawn in `color`, transparent elsewhere.
pub fn boundary_overlay(seg: &Segmentation, color: [u8; 4]) -> Vec<u8> {
    let mut out = vec![0u8; seg.len() * 4];
    for (p, on) in boundary_mask(seg).into_iter().enumerate() {
        if on {
            out[p * 4..p * 4 + 4].copy_from_slice(&color);
        }
    }
    out
}

/// RGBA buffer highlighting one query region: a translucent fill with an
/// opaque outline.
pub fn region_overlay(width: u32, height: u32, pixels: &[u32]) -> Vec<u8> {
    let n = width as usize * height as usize;
    let mut inside = vec![false; n];
    for &p in pixels {
        if let Some(v) = inside.get_mut(p as usize) {
            *v = true;
        }
    }
    let mut out = vec![0u8; n * 4];
    for &p in pixels {
        let p = p as usize;
        if p >= n {
            continue;
        }
        let edge = neighbors(p, width, height).count() < 4
            || neighbors(p, width, height).any(|q| !inside[q]);
        let px = if edge { [255, 230, 0, 255] } else { [255, 230, 0, 80] };
        out[p * 4..p * 4 + 4].copy_from_slice(&px);
    }
    out
}

/// Draws region boundaries onto a copy of `image`.
pub fn draw_boundaries(image: &RgbImage, seg: &Segmentation, color: [u8; 3]) -> Result<RgbImage> {
    seg.same_dims(image.width(), image.height())?;
    let mut out = image.clone();
    for (p, on) in boundary_mask(seg).into_iter().enumerate() {
        if on {
            out.set_pixel(p, color);
        }
    }
    Ok(out)
}

fn encode_error(e: image::ImageError) -> Error {
    Error::Image {
        path: "<memory>".into(),
        message: e.to_string(),
    }
}

pub fn encode_rgba_png(width: u32, height: u32, rgba: Vec<u8>) -> Result<Vec<u8>> {
    let buf = ImageBuffer::<Rgba<u8>, _>::from_raw(width, height, rgba)
        .ok_or_else(|| Error::InvalidArgument("rgba buffer size".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).map_err(encode_error)?;
    Ok(out.into_inner())
}

pub fn encode_rgb_png(image: &RgbImage) -> Result<Vec<u8>> {
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(image.width(), image.height(), image.data().to_vec())
        .ok_or_else(|| Error::InvalidArgument("rgb buffer size".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).map_err(encode_error)?;
    Ok(out.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpixel::grid_segmentation;

    #[test]
    fn boundaries_of_grid() {
        let seg = grid_segmentation(4, 2, 2).unwrap();
        let mask = boundary_mask(&seg);
        assert_eq!(mask, vec![false, true, true, false, false, true, true, false]);
    }

    #[test]
    fn region_overlay_png_roundtrip() {
        let rgba = region_overlay(3, 3, &[0, 1, 3, 4]);
        assert_eq!(rgba[3], 255);
        assert_eq!(rgba[8 * 4 + 3], 0);
        let png = encode_rgba_png(3, 3, rgba.clone()).unwrap();
        let back = image::load_from_memory(&png).unwrap().into_rgba8();
        assert_eq!(back.into_raw(), rgba);
    }
}
