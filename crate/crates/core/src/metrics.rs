//! Evaluation metrics: mouth landmark distance and its velocity variant, mouth-area
//! IoU, temporal consistency, sample diversity and PSNR.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point2, Point3};
use crate::io::{read_f32_array, FlowManifest, Raster};
use crate::raster::{point_in_polygon, polygon_area};

fn check_same_shape(pred: &[Vec<Point3>], gt: &[Vec<Point3>]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!("{} frames", gt.len()), format!("{} frames", pred.len())));
    }
    for (t, (a, b)) in pred.iter().zip(gt).enumerate() {
        if a.len() != b.len() {
            return Err(Error::shape(format!("{} points at frame {t}", b.len()), a.len()));
        }
    }
    Ok(())
}

/// Mean Euclidean distance over frames and points.
pub fn lmd(pred: &[Vec<Point3>], gt: &[Vec<Point3>]) -> Result<f64> {
    check_same_shape(pred, gt)?;
    let n: usize = gt.iter().map(Vec::len).sum();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = pred.iter().zip(gt).flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| distance(p, q))).sum();
    Ok(total / n as f64)
}

fn velocity(seq: &[Vec<Point3>]) -> Vec<Vec<Point3>> {
    seq.windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]]).collect())
        .collect()
}

/// [`lmd`] on first-order temporal differences.
pub fn lmd_v(pred: &[Vec<Point3>], gt: &[Vec<Point3>]) -> Result<f64> {
    if pred.len() < 2 || gt.len() < 2 {
        return Err(Error::TooShort(format!("velocity needs two frames, got {} and {}", pred.len(), gt.len())));
    }
    check_same_shape(pred, gt)?;
    lmd(&velocity(pred), &velocity(gt))
}

/// Cells along the longer side of each frame's common grid.
pub const IOU_GRID: usize = 256;

fn check_polygon(poly: &[Point2]) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::DegeneratePolygon(format!("{} vertices", poly.len())));
    }
    if poly.iter().flatten().any(|v| !v.is_finite()) || polygon_area(poly).abs() < 1e-12 {
        return Err(Error::DegeneratePolygon("zero area or non-finite vertices".into()));
    }
    Ok(())
}

/// IoU of two polygons rasterised at cell centres on a grid over their joint bounds.
pub fn polygon_iou(a: &[Point2], b: &[Point2], grid: usize) -> Result<f64> {
    check_polygon(a)?;
    check_polygon(b)?;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in a.iter().chain(b) {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let cell = (x1 - x0).max(y1 - y0) / grid as f64;
    let nx = ((x1 - x0) / cell).ceil().max(1.0) as usize;
    let ny = ((y1 - y0) / cell).ceil().max(1.0) as usize;
    let (mut inter, mut union) = (0usize, 0usize);
    for j in 0..ny {
        for i in 0..nx {
            let p = [x0 + (i as f64 + 0.5) * cell, y0 + (j as f64 + 0.5) * cell];
            let (ia, ib) = (point_in_polygon(p, a), point_in_polygon(p, b));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Mean per-frame IoU of predicted and reference outer-mouth polygons.
pub fn mouth_iou(pred: &[Vec<Point2>], gt: &[Vec<Point2>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!("{} frames", gt.len()), format!("{} frames", pred.len())));
    }
    if pred.is_empty() {
        return Err(Error::TooShort("no frames".into()));
    }
    let mut total = 0.0;
    for (a, b) in pred.iter().zip(gt) {
        total += polygon_iou(a, b, IOU_GRID)?;
    }
    Ok(total / pred.len() as f64)
}

/// Per-pixel displacement `[H, W, 2]` as `(dx, dy)` from frame `t-1` toward `t`.
pub type FlowField = Array3<f64>;

pub fn zero_flow(height: usize, width: usize) -> FlowField {
    FlowField::zeros((height, width, 2))
}

/// Reads a flow file holding `frames` fields of `[H, W, 2]` float32 values.
pub fn read_flows(bin: &Path) -> Result<Vec<FlowField>> {
    let (values, m) = read_f32_array::<FlowManifest>(bin, |m| m.frames * m.height * m.width * m.channels)?;
    if m.channels != 2 {
        return Err(Error::Data(format!("flow needs 2 channels, manifest says {}", m.channels)));
    }
    let per = m.height * m.width * 2;
    Ok(values
        .chunks_exact(per.max(1))
        .take(m.frames)
        .map(|c| FlowField::from_shape_vec((m.height, m.width, 2), c.iter().map(|&v| v as f64).collect()).unwrap())
        .collect())
}

/// Bilinear sample of channel `c` at continuous pixel-index coordinates, clamped at the border.
fn sample(img: &Raster, c: usize, x: f64, y: f64) -> f64 {
    let (_, h, w) = img.dim();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (xi, yi) = (x.floor() as usize, y.floor() as usize);
    let (x2, y2) = ((xi + 1).min(w - 1), (yi + 1).min(h - 1));
    let (fx, fy) = (x - xi as f64, y - yi as f64);
    let top = img[[c, yi, xi]] * (1.0 - fx) + img[[c, yi, x2]] * fx;
    let bottom = img[[c, y2, xi]] * (1.0 - fx) + img[[c, y2, x2]] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Backward warp: output pixel `p` reads `prev` at `p - flow(p)`.
pub fn warp(prev: &Raster, flow: &FlowField) -> Result<Raster> {
    let (ch, h, w) = prev.dim();
    if flow.dim() != (h, w, 2) {
        return Err(Error::shape(format!("[{h}, {w}, 2]"), format!("{:?}", flow.dim())));
    }
    Ok(Raster::from_shape_fn((ch, h, w), |(c, y, x)| {
        sample(prev, c, x as f64 - flow[[y, x, 0]], y as f64 - flow[[y, x, 1]])
    }))
}

pub const TCM_EPS: f64 = 1e-8;

/// Per-frame temporal consistency term `exp(-(ratio - 1))` with
/// `ratio = (|O_t - warp(O_{t-1})|² + ε) / (|V_t - warp(V_{t-1})|² + ε)`.
pub fn tcm_term(o_residual: f64, v_residual: f64) -> f64 {
    let ratio = (o_residual + TCM_EPS) / (v_residual + TCM_EPS);
    (-(ratio - 1.0)).exp()
}

fn residual(cur: &Raster, prev: &Raster, flow: &FlowField) -> Result<f64> {
    let warped = warp(prev, flow)?;
    if warped.dim() != cur.dim() {
        return Err(Error::shape(format!("{:?}", warped.dim()), format!("{:?}", cur.dim())));
    }
    Ok(cur.iter().zip(warped.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Mean of [`tcm_term`] over `t = 1..T`. `flows_*[t - 1]` maps frame `t - 1` to `t`.
pub fn tcm(reference: &[Raster], generated: &[Raster], flows_ref: &[FlowField], flows_gen: &[FlowField]) -> Result<f64> {
    let t = reference.len();
    if generated.len() != t || t < 2 {
        return Err(Error::LengthMismatch(format!("{t} reference and {} generated frames (need equal, >= 2)", generated.len())));
    }
    if flows_ref.len() != t - 1 || flows_gen.len() != t - 1 {
        return Err(Error::LengthMismatch(format!(
            "{} and {} flows for {t} frames, need {}",
            flows_ref.len(),
            flows_gen.len(),
            t - 1
        )));
    }
    let mut total = 0.0;
    for k in 1..t {
        let o = residual(&reference[k], &reference[k - 1], &flows_ref[k - 1])?;
        let v = residual(&generated[k], &generated[k - 1], &flows_gen[k - 1])?;
        total += tcm_term(o, v);
    }
    Ok(total / (t - 1) as f64)
}

/// Mean over every (frame, point, coordinate) of the population variance across samples.
pub fn diversity(samples: &[Vec<Vec<Point3>>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    let first = &samples[0];
    for s in samples {
        check_same_shape(s, first)?;
    }
    let n = samples.len() as f64;
    let (mut total, mut count) = (0.0, 0usize);
    for t in 0..first.len() {
        for p in 0..first[t].len() {
            for c in 0..3 {
                let shift = first[t][p][c];
                let (sum, sq) = samples.iter().fold((0.0, 0.0), |(a, b), s| {
                    let d = s[t][p][c] - shift;
                    (a + d, b + d * d)
                });
                total += (sq / n - (sum / n).powi(2)).max(0.0);
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// PSNR in dB for images in `[-1, 1]`, measured on the `[0, 1]` scale.
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", b.dim()), format!("{:?}", a.dim())));
    }
    let mse = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64;
    Ok(10.0 * (4.0 / mse).log10())
}

/// Metric values plus any externally computed scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    /// Canonical face units.
    pub lmd: Option<f64>,
    pub lmd_v: Option<f64>,
    pub mouth_iou: Option<f64>,
    pub tcm: Option<f64>,
    pub diversity: Option<f64>,
    pub psnr: Option<f64>,
    pub external: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, Option<f64>)> = vec![
            ("LMD (canonical units)".into(), self.lmd),
            ("LMD-v (canonical units)".into(), self.lmd_v),
            ("MA (mouth IoU)".into(), self.mouth_iou),
            ("TCM".into(), self.tcm),
            ("Diversity".into(), self.diversity),
            ("PSNR (dB)".into(), self.psnr),
        ];
        rows.extend(self.external.iter().map(|(k, v)| (k.clone(), Some(*v))));
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = format!("{:<width$}  value\n", "metric");
        out.push_str(&format!("{}  -----\n", "-".repeat(width)));
        for (k, v) in rows {
            let v = v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_have_zero_diversity() {
        let run = vec![vec![[0.1, 1.0 / 3.0, -7.3], [2.9, 0.7, 1e-3]]; 2];
        assert_eq!(diversity(&vec![run; 16]).unwrap(), 0.0);
    }

    #[test]
    fn lmd_pythagorean_offset() {
        let gt = vec![vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]; 3];
        let pred: Vec<Vec<Point3>> = gt.iter().map(|f| f.iter().map(|p| [p[0] + 0.3, p[1], p[2] + 0.4]).collect()).collect();
        assert!((lmd(&pred, &gt).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(lmd(&gt, &gt).unwrap(), 0.0);
        assert_eq!(lmd_v(&pred, &gt).unwrap(), 0.0);
        assert!(matches!(lmd_v(&gt[..1], &gt[..1]), Err(Error::TooShort(_))));
    }

    #[test]
    fn iou_cases() {
        let sq = |x: f64| vec![[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0]];
        assert_eq!(polygon_iou(&sq(0.0), &sq(0.0), 64).unwrap(), 1.0);
        assert_eq!(polygon_iou(&sq(0.0), &sq(3.0), 64).unwrap(), 0.0);
        assert!((polygon_iou(&sq(0.0), &sq(0.5), 300).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert!(matches!(polygon_iou(&sq(0.0)[..2], &sq(0.0), 8), Err(Error::DegeneratePolygon(_))));
    }

    #[test]
    fn diversity_two_point_variance() {
        let a = vec![vec![[0.2, -0.2, 0.2]]];
        let b = vec![vec![[-0.2, 0.2, -0.2]]];
        assert!((diversity(&[a.clone(), b]).unwrap() - 0.04).abs() < 1e-12);
        assert_eq!(diversity(&[a.clone(), a.clone()]).unwrap(), 0.0);
        assert!(matches!(diversity(&[a]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn psnr_of_uniform_error() {
        let a = Raster::zeros((3, 4, 4));
        let b = Raster::from_elem((3, 4, 4), 0.2);
        // 0.1 on the [0, 1] scale
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }
}
