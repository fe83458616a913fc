use serde::{Deserialize, Serialize};

use super::boundary::{semantic_boundary, trace_contour};
use super::polygon::{densify, point_at, polygon_fit, polyline_length};
use super::segmentation::{SegmentationMap, BODY, FACE};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3, TorsoPoints, TORSO_PER_SIDE};
use crate::raster::Mask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TorsoConfig {
    /// Square dilation radius (1 gives a 3x3 element).
    pub dilation_radius: usize,
    pub dilation_iterations: usize,
    /// Douglas–Peucker tolerance in pixels.
    pub epsilon: f64,
    /// Resampling step along the fitted polyline, in pixels.
    pub spacing: f64,
}

impl Default for TorsoConfig {
    fn default() -> Self {
        TorsoConfig { dilation_radius: 1, dilation_iterations: 2, epsilon: 2.0, spacing: 1.0 }
    }
}

/// Horizontal centre of the face-label bounding box, or the image centre without one.
pub fn face_center_x(seg: &SegmentationMap) -> f64 {
    let (mut lo, mut hi) = (usize::MAX, 0usize);
    for y in 0..seg.height {
        for x in 0..seg.width {
            if seg.get(y, x) == FACE {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    if lo == usize::MAX {
        seg.width as f64 / 2.0
    } else {
        (lo + hi) as f64 / 2.0 + 0.5
    }
}

/// Nine shoulder points per side in pixel coordinates, `z` set to `face_depth`.
///
/// Rows `0..9` lie left of the face centre, `9..18` right of it; each side is
/// ordered from the centre outward.
pub fn extract_torso_points(seg: &SegmentationMap, face_depth: f64, cfg: &TorsoConfig) -> Result<TorsoPoints> {
    if !face_depth.is_finite() {
        return Err(Error::Data(format!("face depth {face_depth} is not finite")));
    }
    let boundary = semantic_boundary(seg)?;
    let band = boundary.dilate(cfg.dilation_radius, cfg.dilation_iterations);
    let mut body = Mask::new(seg.height, seg.width);
    for (b, &l) in body.data.iter_mut().zip(&seg.labels) {
        *b = l == BODY;
    }
    let contour = trace_contour(&body);
    let cx = face_center_x(seg);
    let mut out: Vec<Point3> = Vec::with_capacity(2 * TORSO_PER_SIDE);
    for side in [-1.0, 1.0] {
        let arc = longest_side_arc(&contour, &band, cx, side);
        let pts = side_points(&arc, cx, cfg)?;
        out.extend(pts.into_iter().map(|p| [p[0], p[1], face_depth]));
    }
    TorsoPoints::new(out)
}

/// Longest cyclic run of contour pixels inside `band` and on the given side of `cx`.
fn longest_side_arc(contour: &[(usize, usize)], band: &Mask, cx: f64, side: f64) -> Vec<Point2> {
    let n = contour.len();
    let keep: Vec<bool> = contour
        .iter()
        .map(|&(x, y)| band.get(y, x) && (x as f64 + 0.5 - cx) * side > 0.0)
        .collect();
    if n == 0 || !keep.iter().any(|&k| k) {
        return Vec::new();
    }
    if keep.iter().all(|&k| k) {
        return contour.iter().map(|&(x, y)| [x as f64 + 0.5, y as f64 + 0.5]).collect();
    }
    // rotate so the cycle starts just after a gap
    let start = (0..n).find(|&i| !keep[i]).unwrap() + 1;
    let (mut best, mut cur): (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
    for k in 0..n {
        let i = (start + k) % n;
        if keep[i] {
            cur.push(i);
        } else {
            if cur.len() > best.len() {
                best = std::mem::take(&mut cur);
            }
            cur.clear();
        }
    }
    if cur.len() > best.len() {
        best = cur;
    }
    best.iter().map(|&i| [contour[i].0 as f64 + 0.5, contour[i].1 as f64 + 0.5]).collect()
}

fn side_points(arc: &[Point2], cx: f64, cfg: &TorsoConfig) -> Result<Vec<Point2>> {
    if arc.len() < 3 {
        return Err(Error::DegenerateContour(format!("shoulder arc has {} pixels", arc.len())));
    }
    let mut arc = arc.to_vec();
    let d0 = (arc[0][0] - cx).abs();
    let d1 = (arc[arc.len() - 1][0] - cx).abs();
    if d1 < d0 {
        arc.reverse();
    }
    let fitted = polygon_fit(&arc, cfg.epsilon)?;
    let candidates = densify(&fitted, cfg.spacing);
    if candidates.len() < TORSO_PER_SIDE {
        return Err(Error::DegenerateContour(format!(
            "{} candidates on one side, need {TORSO_PER_SIDE}",
            candidates.len()
        )));
    }
    let length = polyline_length(&fitted);
    let mut used = vec![false; candidates.len()];
    let mut chosen = Vec::with_capacity(TORSO_PER_SIDE);
    for k in 0..TORSO_PER_SIDE {
        let anchor = point_at(&fitted, length * k as f64 / (TORSO_PER_SIDE - 1) as f64);
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = (c[0] - anchor[0]).powi(2) + (c[1] - anchor[1]).powi(2);
            let better = match best {
                None => true,
                Some((j, bd)) => {
                    d < bd - 1e-12
                        || ((d - bd).abs() <= 1e-12
                            && (c[0] < candidates[j][0] || (c[0] == candidates[j][0] && c[1] < candidates[j][1])))
                }
            };
            if better {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("enough candidates");
        used[i] = true;
        chosen.push(candidates[i]);
    }
    Ok(chosen)
}
