//! Procedural talking-portrait clips with known ground truth, used for smoke runs,
//! overfit checks and the end-to-end example.
//!
//! A syllable-like amplitude envelope drives both the waveform and the mouth opening,
//! so the audio features carry the information the motion network has to recover.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::Result;
use crate::geometry::{
    project, to_camera, CameraModel, FacePoints, HeadPose, MotionRepresentation, Point2, Point3, TorsoPoints,
    FACE_POINTS, TORSO_PER_SIDE,
};
use crate::io::{self, PcmAudio, Raster};
use crate::landmarks::{EyeGroups, IndexMaps};
use crate::preprocess::segmentation::{SegmentationMap, BACKGROUND, BODY, FACE, HAIR};
use crate::raster::{fill_polygon, point_in_polygon};
use crate::subject::SubjectTemplate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub frames: usize,
    pub fps: f64,
    pub sample_rate: u32,
    pub resolution: usize,
    pub seed: u64,
    /// Scale of head rotation and translation (0 freezes the head).
    pub motion_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { frames: 50, fps: 25.0, sample_rate: 16000, resolution: 64, seed: 0, motion_scale: 1.0 }
    }
}

/// A generated clip. `motion` holds canonical face, mouth and eye points, the head
/// pose and camera-space shoulder points.
#[derive(Debug, Clone)]
pub struct SynthClip {
    pub config: SynthConfig,
    pub waveform: Waveform,
    pub camera: CameraModel,
    pub motion: Vec<MotionRepresentation>,
    pub camera_landmarks: Vec<Vec<Point3>>,
    pub segmentation: Vec<SegmentationMap>,
    pub frames: Vec<Raster>,
    pub mouth_open: Vec<f64>,
}

const MOUTH_CENTER: [f64; 2] = [0.0, 1.1];
const FACE_CENTER: [f64; 2] = [0.0, 0.55];
const FACE_AXES: [f64; 2] = [1.25, 1.6];
const DEPTH: f64 = 10.0;

fn bulge(x: f64, y: f64) -> f64 {
    let u = (x - FACE_CENTER[0]) / FACE_AXES[0];
    let v = (y - FACE_CENTER[1]) / FACE_AXES[1];
    -0.6 * (1.0 - u * u - v * v).max(0.0).sqrt()
}

fn with_depth(x: f64, y: f64) -> Point3 {
    [x, y, bulge(x, y)]
}

/// Neutral canonical face: eyes at `x = ±0.5`, mouth below, `y` pointing down.
pub fn template_face() -> FacePoints {
    let maps = IndexMaps::bundled();
    let mut pts: Vec<Option<Point3>> = vec![None; FACE_POINTS];
    for (k, &idx) in maps.mouth.iter().enumerate() {
        pts[idx] = Some(mouth_point(k, 0.0));
    }
    for (k, &idx) in maps.eyes.iter().enumerate() {
        pts[idx] = Some(eye_point(&maps.eye_groups, k, 0.0));
    }
    // remaining rows: an oval contour, a nose ridge and a golden-angle fill
    let free: Vec<usize> = (0..FACE_POINTS).filter(|&i| pts[i].is_none()).collect();
    let n_contour = 36;
    let n_nose = 12;
    for (j, &idx) in free.iter().enumerate() {
        let p = if j < n_contour {
            let a = 2.0 * PI * j as f64 / n_contour as f64;
            let (x, y) = (FACE_CENTER[0] + FACE_AXES[0] * a.cos(), FACE_CENTER[1] + FACE_AXES[1] * a.sin());
            [x, y, 0.0]
        } else if j < n_contour + n_nose {
            let s = (j - n_contour) as f64 / (n_nose - 1) as f64;
            let y = 0.05 + 0.75 * s;
            [0.0, y, bulge(0.0, y) - 0.25 * (PI * s).sin()]
        } else {
            let k = (j - n_contour - n_nose) as f64 + 0.5;
            let total = (free.len() - n_contour - n_nose) as f64;
            let r = (k / total).sqrt() * 0.92;
            let a = k * PI * (3.0 - 5f64.sqrt());
            with_depth(FACE_CENTER[0] + FACE_AXES[0] * r * a.cos(), FACE_CENTER[1] + FACE_AXES[1] * r * a.sin())
        };
        pts[idx] = Some(p);
    }
    FacePoints::new(pts.into_iter().map(|p| p.unwrap()).collect()).unwrap()
}

/// Mouth point `k` (position within the 40-point subset) for opening `o` in `[0, 1]`.
fn mouth_point(k: usize, o: f64) -> Point3 {
    let (cx, cy) = (MOUTH_CENTER[0], MOUTH_CENTER[1]);
    let narrow = 1.0 - 0.12 * o;
    let (x, y) = match k {
        0..=10 => {
            let th = PI - k as f64 * PI / 10.0;
            (0.42 * narrow * th.cos(), cy + (0.17 + 0.22 * o) * th.sin())
        }
        11..=19 => {
            let th = PI - (k - 10) as f64 * PI / 10.0;
            (0.42 * narrow * th.cos(), cy - (0.15 + 0.03 * o) * th.sin())
        }
        20..=30 => {
            let th = PI - (k - 20) as f64 * PI / 10.0;
            (0.32 * narrow * th.cos(), cy + (0.02 + 0.2 * o) * th.sin())
        }
        _ => {
            let th = PI - (k - 30) as f64 * PI / 10.0;
            (0.32 * narrow * th.cos(), cy - (0.02 + 0.04 * o) * th.sin())
        }
    };
    with_depth(cx + x, y)
}

/// Eye-subset point `k` for blink amount `b` in `[0, 1]` (1 closes the lids).
fn eye_point(g: &EyeGroups, k: usize, b: f64) -> Point3 {
    let inside = |r: [usize; 2]| EyeGroups::range(r).contains(&k);
    let lid = |side: f64, j: usize| -> (f64, f64) {
        let cx = 0.5 * side;
        // 0 outer corner, 1..8 lower lid, 8 inner corner, 9..16 upper lid
        let (th, upper) = match j {
            0 => (0.0, false),
            1..=7 => (j as f64 * PI / 8.0, false),
            8 => (PI, false),
            _ => ((j - 8) as f64 * PI / 8.0, true),
        };
        let open = if upper { 0.1 * (1.0 - 0.9 * b) } else { 0.07 * (1.0 - 0.3 * b) };
        let y = if upper { -open * th.sin() } else { open * th.sin() };
        (cx + side * 0.22 * th.cos(), y)
    };
    let (x, y) = if inside(g.left_eye) {
        lid(1.0, k - g.left_eye[0])
    } else if inside(g.right_eye) {
        lid(-1.0, k - g.right_eye[0])
    } else if inside(g.left_brow) || inside(g.right_brow) {
        let (side, j) = if inside(g.left_brow) { (1.0, k - g.left_brow[0]) } else { (-1.0, k - g.right_brow[0]) };
        let s = (j % 5) as f64 / 4.0;
        let row = if j < 5 { 0.0 } else { -0.05 };
        (side * (0.78 - 0.5 * s), -0.32 - 0.06 * (PI * s).sin() + row - 0.03 * b)
    } else {
        let (side, j) = if inside(g.left_iris) { (1.0, k - g.left_iris[0]) } else { (-1.0, k - g.right_iris[0]) };
        let a = PI / 2.0 * j as f64;
        (0.5 * side + 0.07 * a.cos(), 0.07 * (1.0 - 0.8 * b) * a.sin())
    };
    with_depth(x, y)
}

/// Smooth syllable-like envelope in `[0, 1]`.
fn envelope(tau: f64, phase: f64) -> f64 {
    let syll = (2.0 * PI * 3.1 * tau + phase).sin().max(0.0).powf(0.7);
    let phrase = 0.65 + 0.35 * (2.0 * PI * 0.7 * tau + 1.3 * phase).sin();
    (syll * phrase).clamp(0.0, 1.0)
}

fn blink(t: f64, offset: f64) -> f64 {
    let period = 2.2;
    let u = ((t + offset) % period) / period;
    let w = 0.07;
    if u < w {
        (PI * u / w).sin()
    } else {
        0.0
    }
}

/// Posed face with the given mouth opening and blink applied to the template.
pub fn face_at(o: f64, b: f64) -> FacePoints {
    let maps = IndexMaps::bundled();
    let base = template_face();
    let mut pts = base.points().to_vec();
    for p in pts.iter_mut() {
        // jaw follows the mouth
        if p[1] > MOUTH_CENTER[1] + 0.1 {
            let w = ((p[1] - MOUTH_CENTER[1] - 0.1) / 0.6).min(1.0);
            p[1] += 0.2 * o * w;
        }
    }
    for (k, &idx) in maps.mouth.iter().enumerate() {
        pts[idx] = mouth_point(k, o);
    }
    for (k, &idx) in maps.eyes.iter().enumerate() {
        pts[idx] = eye_point(&maps.eye_groups, k, b);
    }
    FacePoints::new(pts).unwrap()
}

fn shoulder_curve(x: f64, cx: f64, res: f64, sy: f64) -> f64 {
    let neck = 0.1 * res;
    let d = ((x - cx).abs() - neck).max(0.0) / (0.5 * res);
    if (x - cx).abs() <= neck {
        sy - 0.12 * res
    } else {
        sy + 0.35 * res * d * d - 0.12 * res * (1.0 - ((x - cx).abs() - neck) / (0.04 * res)).max(0.0)
    }
}

fn face_outline(face2d: &[Point2], contour: &[usize]) -> Vec<Point2> {
    contour.iter().map(|&i| face2d[i]).collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let res = cfg.resolution;
    let rf = res as f64;
    let camera = CameraModel::orthographic(0.16 * rf, [0.5 * rf, 0.36 * rf], [res as u32, res as u32])?;
    let phases: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let duration = cfg.frames as f64 / cfg.fps;
    let n = (duration * cfg.sample_rate as f64).round() as usize;
    let f0 = 130.0 + rng.random_range(0.0..40.0);
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let tau = i as f64 / cfg.sample_rate as f64;
            let pitch = f0 * (1.0 + 0.08 * (2.0 * PI * 0.5 * tau).sin());
            let mut v = 0.0;
            for h in 1..=6 {
                v += (2.0 * PI * pitch * h as f64 * tau).sin() / h as f64;
            }
            let noise = rng.random_range(-1.0..1.0) * 0.02;
            0.45 * envelope(tau, phases[0]) * v / 2.5 + noise * envelope(tau, phases[0])
        })
        .collect();
    let waveform = Waveform::new(samples, cfg.sample_rate)?;

    let maps = IndexMaps::bundled();
    let template = template_face();
    let contour: Vec<usize> = (0..FACE_POINTS).filter(|&i| {
        let p = template.points()[i];
        let u = (p[0] - FACE_CENTER[0]) / FACE_AXES[0];
        let v = (p[1] - FACE_CENTER[1]) / FACE_AXES[1];
        (u * u + v * v - 1.0).abs() < 1e-9
    }).collect();

    let mut motion = Vec::with_capacity(cfg.frames);
    let mut camera_landmarks = Vec::with_capacity(cfg.frames);
    let mut segmentation = Vec::with_capacity(cfg.frames);
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut mouth_open = Vec::with_capacity(cfg.frames);
    let palette = Palette::new(&mut rng);
    for t in 0..cfg.frames {
        let time = (t as f64 + 0.5) / cfg.fps;
        let o = envelope(time, phases[0]);
        let b = blink(time, phases[1]);
        let m = cfg.motion_scale;
        let pose = HeadPose {
            rotation: [
                m * 0.06 * (2.0 * PI * 0.23 * time + phases[2]).sin(),
                m * 0.1 * (2.0 * PI * 0.17 * time + phases[3]).sin(),
                m * 0.04 * (2.0 * PI * 0.31 * time + phases[4]).sin(),
            ],
            translation: [
                m * 0.08 * (2.0 * PI * 0.13 * time + phases[5]).sin(),
                m * 0.04 * (2.0 * PI * 0.29 * time + phases[6]).sin(),
                DEPTH,
            ],
        };
        let face = face_at(o, b);
        let cam = to_camera(face.points(), &pose);
        let face2d = project(&cam, &camera)?;
        // shoulders follow the head translation at half amplitude
        let shift_px = 0.5 * pose.translation[0] * camera.focal;
        let bob_px = 0.3 * pose.translation[1] * camera.focal;
        let cx = 0.5 * rf + shift_px;
        let sy = 0.86 * rf + bob_px;
        let torso = torso_points(&camera, cx, rf, sy);
        let seg = segment(res, &face_outline(&face2d, &contour), cx, sy);
        let img = paint(&seg, &face2d, maps, &palette, o, res);
        motion.push(MotionRepresentation {
            mouth: maps.extract_mouth(&face),
            eyes: maps.extract_eyes(&face),
            face,
            pose,
            torso,
        });
        camera_landmarks.push(cam);
        segmentation.push(seg);
        frames.push(img);
        mouth_open.push(o);
    }
    Ok(SynthClip { config: cfg.clone(), waveform, camera, motion, camera_landmarks, segmentation, frames, mouth_open })
}

fn torso_points(camera: &CameraModel, cx: f64, rf: f64, sy: f64) -> TorsoPoints {
    let mut pts = Vec::with_capacity(2 * TORSO_PER_SIDE);
    for side in [-1.0, 1.0] {
        for k in 0..TORSO_PER_SIDE {
            let s = k as f64 / (TORSO_PER_SIDE - 1) as f64;
            let x = cx + side * (0.16 + 0.3 * s) * rf;
            let y = shoulder_curve(x, cx, rf, sy);
            pts.push(camera.unproject([x, y], DEPTH));
        }
    }
    TorsoPoints::new(pts).unwrap()
}

fn segment(res: usize, outline: &[Point2], cx: f64, sy: f64) -> SegmentationMap {
    let rf = res as f64;
    let (mut fx0, mut fx1, mut fy0, mut fy1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in outline {
        fx0 = fx0.min(p[0]);
        fx1 = fx1.max(p[0]);
        fy0 = fy0.min(p[1]);
        fy1 = fy1.max(p[1]);
    }
    let (hcx, hcy) = (0.5 * (fx0 + fx1), 0.5 * (fy0 + fy1));
    let (hrx, hry) = (0.62 * (fx1 - fx0), 0.6 * (fy1 - fy0));
    let mut labels = vec![BACKGROUND; res * res];
    for y in 0..res {
        for x in 0..res {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let l = if point_in_polygon(p, outline) {
                FACE
            } else if p[1] < hcy && ((p[0] - hcx) / hrx).powi(2) + ((p[1] - hcy) / hry).powi(2) <= 1.0 {
                HAIR
            } else if p[1] >= shoulder_curve(p[0], cx, rf, sy) {
                BODY
            } else {
                BACKGROUND
            };
            labels[y * res + x] = l;
        }
    }
    SegmentationMap::new(res, res, labels).unwrap()
}

struct Palette {
    background: [f64; 3],
    skin: [f64; 3],
    hair: [f64; 3],
    body: [f64; 3],
}

impl Palette {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut c = |lo: f64, hi: f64| [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)];
        Palette { background: c(-0.2, 0.4), skin: [0.7, 0.35, 0.15], hair: c(-0.9, -0.5), body: c(-0.6, 0.3) }
    }
}

fn paint(seg: &SegmentationMap, face2d: &[Point2], maps: &IndexMaps, pal: &Palette, o: f64, res: usize) -> Raster {
    let ring = |idx: &[usize]| -> Vec<Point2> { idx.iter().map(|&i| face2d[i]).collect() };
    let mouth_idx: Vec<usize> = maps.mouth_outer_ring.iter().map(|&k| maps.mouth[k]).collect();
    let lips = fill_polygon(res, res, &ring(&mouth_idx));
    let inner_idx: Vec<usize> = (20..31).chain((31..40).rev()).map(|k| maps.mouth[k]).collect();
    let inner = fill_polygon(res, res, &ring(&inner_idx));
    let g = &maps.eye_groups;
    let eye_mask = |r: [usize; 2]| {
        let idx: Vec<usize> = EyeGroups::range(r).map(|k| maps.eyes[k]).collect();
        let order: Vec<usize> = (0..9).chain((9..16).rev()).map(|j| idx[j]).collect();
        fill_polygon(res, res, &ring(&order))
    };
    let (le, re) = (eye_mask(g.left_eye), eye_mask(g.right_eye));
    let iris_center = |r: [usize; 2]| {
        let idx: Vec<usize> = EyeGroups::range(r).map(|k| maps.eyes[k]).collect();
        let c = idx.iter().fold([0.0, 0.0], |a, &i| [a[0] + face2d[i][0] / 4.0, a[1] + face2d[i][1] / 4.0]);
        c
    };
    let (lc, rc) = (iris_center(g.left_iris), iris_center(g.right_iris));
    let brow_pts: Vec<Point2> = EyeGroups::range(g.left_brow).chain(EyeGroups::range(g.right_brow)).map(|k| face2d[maps.eyes[k]]).collect();
    let mut img = Array3::zeros((3, res, res));
    for y in 0..res {
        for x in 0..res {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let label = seg.labels[y * res + x];
            let mut col = match label {
                FACE => pal.skin,
                HAIR => pal.hair,
                BODY => pal.body,
                _ => {
                    let s = 0.2 * (y as f64 / res as f64 - 0.5);
                    [pal.background[0] + s, pal.background[1] + s, pal.background[2] + s]
                }
            };
            if label == FACE {
                if lips.get(y, x) {
                    col = [0.55, -0.2, -0.2];
                }
                if inner.get(y, x) && o > 0.05 {
                    col = [-0.7, -0.8, -0.8];
                }
                if le.get(y, x) || re.get(y, x) {
                    col = [0.9, 0.9, 0.9];
                    let near = |c: Point2| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) < (0.012 * res as f64 + 0.6).powi(2);
                    if near(lc) || near(rc) {
                        col = [-0.8, -0.6, -0.5];
                    }
                }
                if brow_pts.iter().any(|b| (p[0] - b[0]).abs() < 0.9 && (p[1] - b[1]).abs() < 0.7) {
                    col = pal.hair;
                }
            }
            for c in 0..3 {
                img[[c, y, x]] = col[c].clamp(-1.0, 1.0);
            }
        }
    }
    img
}

impl SynthClip {
    /// The first frame as the conditioning reference.
    pub fn template(&self) -> SubjectTemplate {
        SubjectTemplate::from_reference(&self.motion[0])
    }

    /// Writes the clip in the on-disk layout the dataset builder reads.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        for (t, img) in self.frames.iter().enumerate() {
            io::write_png(&dir.join("frames").join(format!("{t:06}.png")), img)?;
        }
        for (t, seg) in self.segmentation.iter().enumerate() {
            seg.save(&dir.join("seg").join(format!("{t:06}.png")))?;
        }
        let lm: Vec<Vec<Point3>> = self.camera_landmarks.clone();
        io::write_landmarks(&dir.join("landmarks.bin"), &lm)?;
        let poses: Vec<[f64; 6]> = self.motion.iter().map(|m| m.pose.to_array()).collect();
        io::write_poses(&dir.join("poses.bin"), &poses)?;
        io::write_wav(&dir.join("audio.wav"), &PcmAudio { samples: self.waveform.samples.clone(), sample_rate: self.waveform.sample_rate })?;
        io::write_json(&dir.join("camera.json"), &self.camera)?;
        SegmentationMap::write_palette(&dir.join("seg").join("palette.json"))?;
        Ok(())
    }
}
