//! Scores an inference output directory against a processed dataset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::infer::{MotionDump, FACES_FILE, FRAMES_DIR, MOTION_FILE};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3};
use crate::io::{self, Raster};
use crate::landmarks::IndexMaps;
use crate::metrics::{self, zero_flow, FlowField, MetricsReport};
use crate::preprocess::dataset::Dataset;

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Compute TCM from the rendered frames.
    pub tcm: bool,
    /// Flow files for the reference and generated videos; zero flow when absent.
    pub flow_ref: Option<PathBuf>,
    pub flow_gen: Option<PathBuf>,
    /// Further inference outputs of the same audio, for the diversity score.
    pub samples: Vec<PathBuf>,
    /// JSON object of externally computed scores to include.
    pub external: Option<PathBuf>,
}

fn outer_rings(mouths: &[Vec<Point3>], maps: &IndexMaps) -> Vec<Vec<Point2>> {
    mouths.iter().map(|m| maps.mouth_outer_ring.iter().map(|&k| [m[k][0], m[k][1]]).collect()).collect()
}

fn load_dump(dir: &Path) -> Result<MotionDump> {
    let p = dir.join(MOTION_FILE);
    if !p.exists() {
        return Err(Error::MissingStream(p.display().to_string()));
    }
    io::read_json(&p)
}

fn load_frames(paths: impl Iterator<Item = PathBuf>) -> Result<Vec<Raster>> {
    paths
        .map(|p| if p.exists() { io::read_png(&p) } else { Err(Error::MissingStream(p.display().to_string())) })
        .collect()
}

fn load_flows(path: &Option<PathBuf>, n: usize, h: usize, w: usize) -> Result<Vec<FlowField>> {
    match path {
        Some(p) => metrics::read_flows(p),
        None => Ok(vec![zero_flow(h, w); n]),
    }
}

pub fn evaluate(pred: &Path, gt: &Path, opts: &EvalOptions) -> Result<MetricsReport> {
    let dump = load_dump(pred)?;
    let ds = Dataset::load(gt)?;
    let maps = IndexMaps::bundled();
    let gt_mouth: Vec<Vec<Point3>> = ds.manifest.records.iter().map(|r| r.motion.mouth.points().to_vec()).collect();
    let mut report = MetricsReport { frames: dump.frames(), ..Default::default() };
    report.lmd = Some(metrics::lmd(&dump.mouth, &gt_mouth)?);
    if dump.frames() >= 2 {
        report.lmd_v = Some(metrics::lmd_v(&dump.mouth, &gt_mouth)?);
    }
    report.mouth_iou = Some(metrics::mouth_iou(&outer_rings(&dump.mouth, maps), &outer_rings(&gt_mouth, maps))?);

    if opts.tcm {
        let n = dump.frames();
        let generated = load_frames((0..n).map(|t| pred.join(FRAMES_DIR).join(format!("{t:06}.png"))))?;
        let reference = load_frames(ds.manifest.records.iter().map(|r| r.frame_path.clone()))?;
        let (_, h, w) = reference.first().map(|r| r.dim()).unwrap_or((3, 0, 0));
        let fr = load_flows(&opts.flow_ref, n.saturating_sub(1), h, w)?;
        let fg = load_flows(&opts.flow_gen, n.saturating_sub(1), h, w)?;
        report.tcm = Some(metrics::tcm(&reference, &generated, &fr, &fg)?);
        if reference.len() == generated.len() {
            let total = reference.iter().zip(&generated).map(|(a, b)| metrics::psnr(b, a)).sum::<Result<f64>>()?;
            report.psnr = Some(total / n.max(1) as f64);
        }
    }

    if !opts.samples.is_empty() {
        let mut runs = vec![io::read_landmarks(&pred.join(FACES_FILE)).map_err(|_| Error::MissingStream(pred.join(FACES_FILE).display().to_string()))?];
        for s in &opts.samples {
            let p = s.join(FACES_FILE);
            runs.push(io::read_landmarks(&p).map_err(|_| Error::MissingStream(p.display().to_string()))?);
        }
        report.diversity = Some(metrics::diversity(&runs)?);
    }

    if let Some(p) = &opts.external {
        let scores: BTreeMap<String, f64> = io::read_json(p)?;
        report.external = scores;
    }
    Ok(report)
}

/// Writes `report.json` and `report.txt` into `out`.
pub fn write_report(report: &MetricsReport, out: &Path) -> Result<()> {
    io::write_json(&out.join("report.json"), report)?;
    io::atomic_write(&out.join("report.txt"), report.to_table().as_bytes())
}
