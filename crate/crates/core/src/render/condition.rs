use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use super::tpe::{tpe, TPE_DIM};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3, TORSO_PER_SIDE};
use crate::io::Raster;
use crate::landmarks::IndexMaps;
use crate::raster::{fill_polygon, wu_line};

/// Undirected edges drawn between projected face points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshTopology {
    pub edges: Vec<(usize, usize)>,
}

impl MeshTopology {
    /// Connects every point to its `k` nearest neighbours (ties by index).
    pub fn knn(points: &[Point3], k: usize) -> Self {
        let mut edges = std::collections::BTreeSet::new();
        for (i, p) in points.iter().enumerate() {
            let mut d: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in d.iter().take(k) {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        MeshTopology { edges: edges.into_iter().collect() }
    }
}

/// Inputs to the frame generator for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionFrame {
    /// Stroke drawing `[1, H, W]` in `[-1, 1]`.
    pub drawing: Raster,
    pub reference: Raster,
    pub tpe: [f64; TPE_DIM],
    pub t: u64,
}

impl ConditionFrame {
    pub fn channels(&self) -> usize {
        self.drawing.dim().0 + self.reference.dim().0 + TPE_DIM
    }

    /// Drawing, reference and constant TPE planes stacked along channels.
    pub fn to_tensor(&self) -> Array3<f64> {
        let (cd, h, w) = self.drawing.dim();
        let cr = self.reference.dim().0;
        let mut out = Array3::zeros((cd + cr + TPE_DIM, h, w));
        out.slice_mut(s![0..cd, .., ..]).assign(&self.drawing);
        out.slice_mut(s![cd..cd + cr, .., ..]).assign(&self.reference);
        for (i, v) in self.tpe.iter().enumerate() {
            out.slice_mut(s![cd + cr + i, .., ..]).fill(*v);
        }
        out
    }
}

fn clip_point(p: Point2, w: f64, h: f64) -> Point2 {
    [p[0].clamp(-w, 2.0 * w), p[1].clamp(-h, 2.0 * h)]
}

/// Draws face edges and the two shoulder polylines as anti-aliased strokes.
pub fn draw_condition(face_2d: &[Point2], torso_2d: &[Point2], topology: &MeshTopology, height: usize, width: usize) -> Raster {
    let mut cover = Array2::<f64>::zeros((height, width));
    let (wf, hf) = (width as f64, height as f64);
    let mut stroke = |a: Point2, b: Point2| {
        let (a, b) = (clip_point(a, wf, hf), clip_point(b, wf, hf));
        wu_line(a, b, |x, y, c| {
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                let v = &mut cover[[y as usize, x as usize]];
                *v = v.max(c.min(1.0));
            }
        });
    };
    for &(i, j) in &topology.edges {
        if i < face_2d.len() && j < face_2d.len() {
            stroke(face_2d[i], face_2d[j]);
        }
    }
    for side in torso_2d.chunks(TORSO_PER_SIDE) {
        for w in side.windows(2) {
            stroke(w[0], w[1]);
        }
    }
    let mut out = Raster::zeros((1, height, width));
    for ((y, x), c) in cover.indexed_iter() {
        out[[0, y, x]] = 2.0 * c - 1.0;
    }
    out
}

/// Builds the generator input for frame `t`.
pub fn assemble_condition(
    face_2d: &[Point2],
    torso_2d: &[Point2],
    reference: Option<&Raster>,
    t: u64,
    topology: &MeshTopology,
) -> Result<ConditionFrame> {
    let reference = reference.ok_or(Error::EmptyReference)?;
    let (c, h, w) = reference.dim();
    if c != 3 || h == 0 || w == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(ConditionFrame {
        drawing: draw_condition(face_2d, torso_2d, topology, h, w),
        reference: reference.clone(),
        tpe: tpe(t),
        t,
    })
}

/// Outer-lip polygon filled and grown by `dilation_px`, as a `{0, 1}` mask.
pub fn mouth_mask(face_2d: &[Point2], maps: &IndexMaps, height: usize, width: usize, dilation_px: f64) -> Array2<f64> {
    let ring: Vec<Point2> = maps.mouth_outer_ring.iter().map(|&k| face_2d[maps.mouth[k]]).collect();
    let mut m = fill_polygon(height, width, &ring);
    if dilation_px > 0.0 {
        m = m.dilate_disk(dilation_px);
    }
    Array2::from_shape_fn((height, width), |(y, x)| if m.get(y, x) { 1.0 } else { 0.0 })
}
