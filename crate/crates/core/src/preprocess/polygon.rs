use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Distance from `p` to the segment `ab`.
pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

/// Douglas–Peucker simplification of an open polyline. Keeps both endpoints.
pub fn polygon_fit(points: &[Point2], epsilon: f64) -> Result<Vec<Point2>> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0usize, points.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (mut best, mut best_d) = (lo, -1.0);
        for i in lo + 1..hi {
            let d = segment_distance(points[i], points[lo], points[hi]);
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        if best_d > epsilon {
            keep[best] = true;
            stack.push((lo, best));
            stack.push((best, hi));
        }
    }
    Ok(points.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect())
}

/// Resamples a polyline at fixed arc-length spacing, endpoints included.
pub fn densify(poly: &[Point2], spacing: f64) -> Vec<Point2> {
    if poly.len() < 2 {
        return poly.to_vec();
    }
    let total = polyline_length(poly);
    let n = (total / spacing).floor() as usize;
    let mut out: Vec<Point2> = (0..=n).map(|k| point_at(poly, k as f64 * spacing)).collect();
    if total - n as f64 * spacing > 1e-9 {
        out.push(*poly.last().unwrap());
    }
    out
}

pub fn polyline_length(poly: &[Point2]) -> f64 {
    poly.windows(2).map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt()).sum()
}

/// Point at arc length `s` along the polyline (clamped to its ends).
pub fn point_at(poly: &[Point2], s: f64) -> Point2 {
    let mut left = s.max(0.0);
    for w in poly.windows(2) {
        let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        if left <= len && len > 0.0 {
            let t = left / len;
            return [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
        }
        left -= len;
    }
    *poly.last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_collapses_to_endpoints() {
        let pts: Vec<Point2> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert_eq!(polygon_fit(&pts, 0.1).unwrap(), vec![[0.0, 0.0], [9.0, 18.0]]);
    }

    #[test]
    fn l_shape_keeps_corner() {
        let mut pts: Vec<Point2> = (0..6).map(|i| [i as f64, 0.0]).collect();
        pts.extend((1..6).map(|i| [5.0, i as f64]));
        assert_eq!(polygon_fit(&pts, 0.5).unwrap(), vec![[0.0, 0.0], [5.0, 0.0], [5.0, 5.0]]);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(polygon_fit(&[[0.0, 0.0], [1.0, 1.0]], 1.0), Err(Error::TooFewPoints(2))));
    }

    #[test]
    fn densify_spacing() {
        let d = densify(&[[0.0, 0.0], [3.0, 0.0], [3.0, 2.5]], 1.0);
        assert_eq!(d.len(), 7);
        assert_eq!(d[4], [3.0, 1.0]);
        assert_eq!(*d.last().unwrap(), [3.0, 2.5]);
    }
}
