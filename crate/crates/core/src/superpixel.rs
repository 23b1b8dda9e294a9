//! Base over-segmentation: SLIC, regular grids and connectivity repair.

use serde::{Deserialize, Serialize};

use crate::components::label_components;
use crate::error::{Error, Result};
use crate::raster::{neighbors, RgbImage, Segmentation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicConfig {
    /// Desired average pixels per superpixel.
    pub target_region_size: u32,
    /// Weight of spatial distance relative to color distance.
    pub compactness: f64,
    pub iterations: u32,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            target_region_size: 64,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

/// Axis-aligned tiles of `cell` x `cell` pixels; border tiles may be partial.
pub fn grid_segmentation(width: u32, height: u32, cell: u32) -> Result<Segmentation> {
    if cell == 0 {
        return Err(Error::InvalidArgument("grid cell must be >= 1".into()));
    }
    let cols = width.div_ceil(cell);
    let ids = (0..height)
        .flat_map(|y| (0..width).map(move |x| (y / cell) * cols + x / cell))
        .collect();
    Ok(Segmentation::from_dense_unchecked(
        width,
        height,
        ids,
        cols * height.div_ceil(cell),
    ))
}

/// Splits every region into its connected components. The first component
/// (in row-major order) of each region keeps its id; further components get
/// fresh ids after the existing ones, so connected inputs come back unchanged.
pub fn enforce_connectivity(seg: &Segmentation) -> Segmentation {
    let ids = seg.region_ids();
    let (components, count) = label_components(seg.width(), seg.height(), |a, b| ids[a] == ids[b]);
    let mut claimed = vec![false; seg.num_regions() as usize];
    let mut remap = vec![0u32; count as usize];
    let mut assigned = vec![false; count as usize];
    let mut next = seg.num_regions();
    for (p, &comp) in components.iter().enumerate() {
        let comp = comp as usize;
        if assigned[comp] {
            continue;
        }
        assigned[comp] = true;
        let orig = ids[p] as usize;
        if claimed[orig] {
            remap[comp] = next;
            next += 1;
        } else {
            claimed[orig] = true;
            remap[comp] = orig as u32;
        }
    }
    let out = components.iter().map(|&c| remap[c as usize]).collect();
    Segmentation::from_dense_unchecked(seg.width(), seg.height(), out, next)
}

#[derive(Clone, Copy, Debug, Default)]
struct Lab {
    l: f64,
    a: f64,
    b: f64,
}

fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn rgb_to_lab([r, g, b]: [u8; 3]) -> Lab {
    let (r, g, b) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    // D65 reference white
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    let (fx, fy, fz) = (lab_f(x), lab_f(y), lab_f(z));
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// 3x3 box filter clamped at the border; suppresses pixel noise that would
/// otherwise fragment clusters.
fn smooth(lab: &[Lab], w: u32, h: u32) -> Vec<Lab> {
    let (w, h) = (w as i64, h as i64);
    let mut out = Vec::with_capacity(lab.len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = Lab::default();
            let mut n = 0.0;
            for yy in (y - 1).max(0)..=(y + 1).min(h - 1) {
                for xx in (x - 1).max(0)..=(x + 1).min(w - 1) {
                    let v = lab[(yy * w + xx) as usize];
                    acc.l += v.l;
                    acc.a += v.a;
                    acc.b += v.b;
                    n += 1.0;
                }
            }
            out.push(Lab {
                l: acc.l / n,
                a: acc.a / n,
                b: acc.b / n,
            });
        }
    }
    out
}

fn lab_dist2(a: Lab, b: Lab) -> f64 {
    (a.l - b.l).powi(2) + (a.a - b.a).powi(2) + (a.b - b.b).powi(2)
}

/// Squared central-difference gradient; border pixels use the pixel itself
/// for the missing side.
fn gradient(lab: &[Lab], w: u32, h: u32, x: u32, y: u32) -> f64 {
    let at = |x: u32, y: u32| lab[(y * w + x) as usize];
    let gx = lab_dist2(at((x + 1).min(w - 1), y), at(x.saturating_sub(1), y));
    let gy = lab_dist2(at(x, (y + 1).min(h - 1)), at(x, y.saturating_sub(1)));
    gx + gy
}

/// Moves a seed to the lowest-gradient pixel of its 3x3 neighborhood so it
/// does not start on an edge. The seed stays put unless a neighbor is
/// strictly smoother; among equal neighbors the first in scan order wins.
fn lowest_gradient(lab: &[Lab], w: u32, h: u32, x: u32, y: u32) -> (u32, u32) {
    let mut best = (gradient(lab, w, h, x, y), x, y);
    for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
        for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
            let g = gradient(lab, w, h, xx, yy);
            if g < best.0 {
                best = (g, xx, yy);
            }
        }
    }
    (best.1, best.2)
}

#[derive(Clone, Copy, Debug)]
struct Center {
    color: Lab,
    x: f64,
    y: f64,
}

/// SLIC superpixels: local k-means in CIELAB + position space seeded on a
/// regular grid, followed by connectivity enforcement that folds fragments
/// smaller than a quarter of the target size into the most similar neighbor.
pub fn slic(image: &RgbImage, cfg: &SlicConfig) -> Result<Segmentation> {
    let (w, h) = (image.width(), image.height());
    let area = image.len();
    if area == 0 {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    if cfg.target_region_size == 0 || cfg.iterations == 0 {
        return Err(Error::InvalidArgument(
            "target_region_size and iterations must be >= 1".into(),
        ));
    }
    if cfg.target_region_size as usize > area {
        return Err(Error::InvalidArgument(format!(
            "target region size {} exceeds image area {area}",
            cfg.target_region_size
        )));
    }

    let lab = smooth(&(0..area).map(|i| rgb_to_lab(image.pixel(i))).collect::<Vec<_>>(), w, h);
    let step = (cfg.target_region_size as f64).sqrt();
    let nx = ((w as f64 / step).round() as u32).max(1);
    let ny = ((h as f64 / step).round() as u32).max(1);
    let cell_w = w as f64 / nx as f64;
    let cell_h = h as f64 / ny as f64;

    let mut centers: Vec<Center> = Vec::with_capacity((nx * ny) as usize);
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) * cell_w;
            let y = (j as f64 + 0.5) * cell_h;
            let px = (x.floor() as u32).min(w - 1);
            let py = (y.floor() as u32).min(h - 1);
            let (mx, my) = lowest_gradient(&lab, w, h, px, py);
            let (x, y) = if (mx, my) == (px, py) {
                (x, y)
            } else {
                (mx as f64 + 0.5, my as f64 + 0.5)
            };
            centers.push(Center {
                color: lab[(my * w + mx) as usize],
                x,
                y,
            });
        }
    }

    // Start from the grid cell so pixels outside every search window stay labeled.
    let mut labels: Vec<u32> = (0..area)
        .map(|p| {
            let x = (p as u32 % w) as f64 + 0.5;
            let y = (p as u32 / w) as f64 + 0.5;
            let i = ((x / cell_w) as u32).min(nx - 1);
            let j = ((y / cell_h) as u32).min(ny - 1);
            j * nx + i
        })
        .collect();
    let mut dist = vec![f64::INFINITY; area];
    let spatial_weight = (cfg.compactness / step).powi(2);
    let radius = step.max(cell_w.max(cell_h));

    for _ in 0..cfg.iterations {
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = ((c.x - radius).floor().max(0.0)) as u32;
            let x1 = ((c.x + radius).ceil() as u32).min(w);
            let y0 = ((c.y - radius).floor().max(0.0)) as u32;
            let y1 = ((c.y + radius).ceil() as u32).min(h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = (y * w + x) as usize;
                    let col = lab[p];
                    let dc = lab_dist2(col, c.color);
                    let ds = (x as f64 + 0.5 - c.x).powi(2) + (y as f64 + 0.5 - c.y).powi(2);
                    let d = dc + spatial_weight * ds;
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k as u32;
                    }
                }
            }
        }

        let mut sums = vec![(0.0, 0.0, 0.0, 0.0, 0.0, 0usize); centers.len()];
        for (p, &k) in labels.iter().enumerate() {
            let s = &mut sums[k as usize];
            let col = lab[p];
            s.0 += col.l;
            s.1 += col.a;
            s.2 += col.b;
            s.3 += (p as u32 % w) as f64 + 0.5;
            s.4 += (p as u32 / w) as f64 + 0.5;
            s.5 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.5 > 0 {
                let n = s.5 as f64;
                *c = Center {
                    color: Lab {
                        l: s.0 / n,
                        a: s.1 / n,
                        b: s.2 / n,
                    },
                    x: s.3 / n,
                    y: s.4 / n,
                };
            }
        }
    }

    let min_size = (cfg.target_region_size / 4).max(1);
    Ok(absorb_small_components(w, h, &labels, &lab, min_size))
}

/// Connected components of `labels`, with each component under `min_size`
/// pixels folded into the adjacent component closest in mean color. Fragments
/// are visited in scan order; sizes and means are updated as they merge.
/// Output ids are dense by first appearance.
fn absorb_small_components(width: u32, height: u32, labels: &[u32], lab: &[Lab], min_size: u32) -> Segmentation {
    let (components, count) = label_components(width, height, |a, b| labels[a] == labels[b]);
    let count = count as usize;
    let mut sizes = vec![0u32; count];
    let mut sums = vec![Lab::default(); count];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (p, &c) in components.iter().enumerate() {
        let c = c as usize;
        sizes[c] += 1;
        sums[c].l += lab[p].l;
        sums[c].a += lab[p].a;
        sums[c].b += lab[p].b;
        members[c].push(p);
    }
    let mean = |sums: &[Lab], sizes: &[u32], c: usize| {
        let n = sizes[c] as f64;
        Lab {
            l: sums[c].l / n,
            a: sums[c].a / n,
            b: sums[c].b / n,
        }
    };
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for c in 0..count {
        let root = find(&mut parent, c);
        if sizes[root] >= min_size {
            continue;
        }
        let own = mean(&sums, &sizes, root);
        let mut best: Option<(f64, usize)> = None;
        for &p in &members[c] {
            for q in neighbors(p, width, height) {
                let other = find(&mut parent, components[q] as usize);
                if other == root {
                    continue;
                }
                let m = mean(&sums, &sizes, other);
                let d = lab_dist2(m, own);
                if best.is_none_or(|(bd, bo)| d < bd || (d == bd && other < bo)) {
                    best = Some((d, other));
                }
            }
        }
        if let Some((_, b)) = best {
            parent[root] = b;
            sizes[b] += sizes[root];
            sums[b].l += sums[root].l;
            sums[b].a += sums[root].a;
            sums[b].b += sums[root].b;
        }
    }
    let merged: Vec<u32> = (0..components.len())
        .map(|p| find(&mut parent, components[p] as usize) as u32)
        .collect();
    Segmentation::from_sparse(width, height, &merged).expect("dimensions match")
}
