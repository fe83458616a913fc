use super::segmentation::{SegmentationMap, BACKGROUND, BODY, HAIR};
use crate::error::{Error, Result};
use crate::raster::Mask;

/// Upper-body pixels with a 4-neighbour labelled background or hair.
pub fn semantic_boundary(seg: &SegmentationMap) -> Result<Mask> {
    let (h, w) = (seg.height, seg.width);
    if !seg.labels.contains(&BODY) {
        return Err(Error::NoBody);
    }
    let mut out = Mask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            if seg.get(y, x) != BODY {
                continue;
            }
            let mut nbrs = Vec::with_capacity(4);
            if y > 0 {
                nbrs.push(seg.get(y - 1, x));
            }
            if y + 1 < h {
                nbrs.push(seg.get(y + 1, x));
            }
            if x > 0 {
                nbrs.push(seg.get(y, x - 1));
            }
            if x + 1 < w {
                nbrs.push(seg.get(y, x + 1));
            }
            if nbrs.iter().any(|&l| l == BACKGROUND || l == HAIR) {
                out.set(y, x, true);
            }
        }
    }
    Ok(out)
}

const DIRS: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

/// Clockwise Moore-neighbour trace of the outer contour of the region containing the
/// first set pixel in raster order. Returns `(x, y)` pixel indices.
pub fn trace_contour(mask: &Mask) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height as isize, mask.width as isize);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && mask.get(y as usize, x as usize);
    let Some(first) = mask.data.iter().position(|&b| b) else {
        return Vec::new();
    };
    let start = ((first % mask.width) as isize, (first / mask.width) as isize);
    let mut contour = vec![(start.0 as usize, start.1 as usize)];
    let (mut p, mut back) = (start, 0usize);
    let start_back = back;
    let limit = 4 * mask.data.len() + 8;
    for _ in 0..limit {
        let mut moved = false;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let n = (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
            if inside(n.0, n.1) {
                let prev = (p.0 + DIRS[(d + 7) % 8].0, p.1 + DIRS[(d + 7) % 8].1);
                let off = (prev.0 - n.0, prev.1 - n.1);
                back = DIRS.iter().position(|&o| o == off).expect("neighbour offset");
                p = n;
                moved = true;
                break;
            }
        }
        if !moved || (p == start && back == start_back) {
            break;
        }
        contour.push((p.0 as usize, p.1 as usize));
    }
    if contour.len() > 1 && contour.last() == contour.first() {
        contour.pop();
    }
    contour
}
