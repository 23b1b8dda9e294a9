//! Connected-component labeling over the raster neighborhood.

use crate::raster::neighbors;

/// Labels maximal connected groups of pixels for which `same(a, b)` holds
/// between neighbors. Component ids are assigned in row-major order of each
/// component's first pixel. Returns the per-pixel component id and the count.
pub fn label_components<F>(width: u32, height: u32, same: F) -> (Vec<u32>, u32)
where
    F: Fn(usize, usize) -> bool,
{
    const UNSET: u32 = u32::MAX;
    let n = width as usize * height as usize;
    let mut labels = vec![UNSET; n];
    let mut stack = Vec::new();
    let mut next = 0u32;
    for start in 0..n {
        if labels[start] != UNSET {
            continue;
        }
        labels[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            for q in neighbors(p, width, height) {
                if labels[q] == UNSET && same(p, q) {
                    labels[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    (labels, next)
}
