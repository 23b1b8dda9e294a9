use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use super::{LabelMap, ProbMap, RgbImage, Segmentation};
use crate::error::{Error, Result};

pub const SEG_MAGIC: &[u8; 4] = b"SEG1";
pub const PPF_MAGIC: &[u8; 4] = b"PPF1";
const HEADER_LEN: usize = 16;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    let bytes = read_file(path)?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
        Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

/// Parses the shared 16-byte header and returns (width, height, third field).
fn parse_header(
    bytes: &[u8],
    magic: &'static [u8; 4],
    format: &'static str,
) -> Result<(u32, u32, u32)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::malformed(format, "truncated header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::BadMagic {
            expected: format,
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    Ok((u32_at(bytes, 4), u32_at(bytes, 8), u32_at(bytes, 12)))
}

/// Loads a single-channel 8- or 16-bit PNG label map.
pub fn load_label_map(path: &Path, num_classes: u16, ignore_id: u16) -> Result<LabelMap> {
    let img = open_image(path)?;
    let (w, h) = (img.width(), img.height());
    let data: Vec<u16> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u16::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: format!("expected single-channel PNG, got {:?}", other.color()),
            })
        }
    };
    LabelMap::new(w, h, data, num_classes, ignore_id)
}

/// Saves as 8-bit when every value fits, 16-bit otherwise.
pub fn save_label_map(map: &LabelMap, path: &Path) -> Result<()> {
    let (w, h) = (map.width(), map.height());
    let result = if map.data().iter().all(|&v| v <= u8::MAX as u16) {
        let raw: Vec<u8> = map.data().iter().map(|&v| v as u8).collect();
        ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
            .expect("buffer size")
            .save_with_format(path, image::ImageFormat::Png)
    } else {
        ImageBuffer::<Luma<u16>, _>::from_raw(w, h, map.data().to_vec())
            .expect("buffer size")
            .save_with_format(path, image::ImageFormat::Png)
    };
    result.map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = open_image(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::new(w, h, img.into_raw())
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    ImageBuffer::<Rgb<u8>, _>::from_raw(img.width(), img.height(), img.data().to_vec())
        .expect("buffer size")
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

pub fn write_segmentation(seg: &Segmentation) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + seg.len() * 4);
    out.extend_from_slice(SEG_MAGIC);
    out.extend_from_slice(&seg.width().to_le_bytes());
    out.extend_from_slice(&seg.height().to_le_bytes());
    out.extend_from_slice(&seg.num_regions().to_le_bytes());
    for &id in seg.region_ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

/// Decodes SEG1 bytes. Sparse ids are densified by first appearance;
/// already-dense ids are kept verbatim.
pub fn read_segmentation(bytes: &[u8], expected: Option<(u32, u32)>) -> Result<Segmentation> {
    let (w, h, declared) = parse_header(bytes, SEG_MAGIC, "SEG1")?;
    if let Some((ew, eh)) = expected {
        if (ew, eh) != (w, h) {
            return Err(Error::DimensionMismatch {
                expected_width: ew,
                expected_height: eh,
                width: w,
                height: h,
            });
        }
    }
    let n = w as usize * h as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != n * 4 {
        return Err(Error::malformed(
            "SEG1",
            format!("expected {} payload bytes, found {}", n * 4, payload.len()),
        ));
    }
    if n == 0 {
        return Err(Error::EmptyRegion(0));
    }
    let ids: Vec<u32> = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    match Segmentation::new(w, h, ids.clone()) {
        Ok(seg) => {
            if seg.num_regions() != declared {
                return Err(Error::malformed(
                    "SEG1",
                    format!(
                        "header declares {declared} regions, payload has {}",
                        seg.num_regions()
                    ),
                ));
            }
            Ok(seg)
        }
        Err(Error::EmptyRegion(_)) => Segmentation::from_sparse(w, h, &ids),
        Err(e) => Err(e),
    }
}

pub fn load_segmentation(path: &Path, expected: Option<(u32, u32)>) -> Result<Segmentation> {
    read_segmentation(&read_file(path)?, expected)
}

pub fn save_segmentation(seg: &Segmentation, path: &Path) -> Result<()> {
    write_file(path, &write_segmentation(seg))
}

pub fn write_prob_map(map: &ProbMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + map.planes().len() * 4);
    out.extend_from_slice(PPF_MAGIC);
    out.extend_from_slice(&map.width().to_le_bytes());
    out.extend_from_slice(&map.height().to_le_bytes());
    out.extend_from_slice(&map.num_classes().to_le_bytes());
    for &v in map.planes() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_prob_map(bytes: &[u8]) -> Result<ProbMap> {
    let (w, h, c) = parse_header(bytes, PPF_MAGIC, "PPF1")?;
    let expected = w as usize * h as usize * c as usize * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::malformed(
            "PPF1",
            format!("expected {expected} payload bytes, found {}", payload.len()),
        ));
    }
    let planes = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ProbMap::new(w, h, c, planes)
}

pub fn load_prob_map(path: &Path) -> Result<ProbMap> {
    read_prob_map(&read_file(path)?)
}

pub fn save_prob_map(map: &ProbMap, path: &Path) -> Result<()> {
    write_file(path, &write_prob_map(map))
}
