//! Clip directory to training records.
//!
//! Input layout: `frames/%06d.png`, `seg/%06d.png`, `landmarks.bin`, `poses.bin`,
//! `audio.wav` and an optional `camera.json`. Output layout: `dataset.json`
//! (manifest and records), `features.bin`, `template.json`, `reference.png` and
//! `conditions/%06d.bin` holding the stroke drawing and mouth mask as float16.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::segmentation::SegmentationMap;
use super::torso::{extract_torso_points, TorsoConfig};
use super::canonicalize;
use crate::audio::{extract_features, AudioFeatureSequence, FeatureSource, Waveform};
use crate::error::{Error, Result};
use crate::faco::FacoSample;
use crate::geometry::{project, to_camera, CameraModel, HeadPose, MotionRepresentation, Point2, TorsoPoints};
use crate::io::{self, Raster};
use crate::landmarks::IndexMaps;
use crate::moda::{FrameMotion, ModaSample, MotionOutput};
use crate::render::{draw_condition, mouth_mask, tpe, ConditionFrame, MeshTopology, RenderSample};
use crate::subject::SubjectTemplate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub fps: f64,
    pub features: FeatureSource,
    pub torso: TorsoConfig,
    pub val_fraction: f64,
    /// Chooses where the validation block sits.
    pub seed: u64,
    pub reference_frame: usize,
    pub mesh_neighbors: usize,
    pub mouth_dilation_px: f64,
    /// Camera used when the clip has no `camera.json`: orthographic, this many
    /// pixels per unit, principal point at the image centre.
    pub default_scale: f64,
    /// Directory for cached audio features.
    pub cache_dir: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            fps: 25.0,
            features: FeatureSource::default(),
            torso: TorsoConfig::default(),
            val_fraction: 0.2,
            seed: 0,
            reference_frame: 0,
            mesh_neighbors: 3,
            mouth_dilation_px: 8.0,
            default_scale: 1.0,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One frame of a processed clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub frame: usize,
    pub split: Split,
    /// Row of `features.bin`.
    pub audio_row: usize,
    /// Canonical face, mouth and eyes; head pose; camera-space torso.
    pub motion: MotionRepresentation,
    pub frame_path: PathBuf,
    /// Relative to the dataset directory.
    pub condition_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub clip: PathBuf,
    pub frames: usize,
    pub fps: f64,
    pub height: usize,
    pub width: usize,
    pub camera: CameraModel,
    pub feature_dim: usize,
    pub val_range: (usize, usize),
    pub reference_frame: usize,
    pub mesh_neighbors: usize,
    pub mouth_dilation_px: f64,
    pub records: Vec<TrainingRecord>,
}

/// A loaded dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub features: AudioFeatureSequence,
    pub template: SubjectTemplate,
    pub reference: Raster,
}

fn numbered_files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == ext))
                .filter(|p| p.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s.chars().all(|c| c.is_ascii_digit())))
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

/// Validation block of `round(n * fraction)` frames starting on a seeded multiple of its length.
pub fn split_range(n: usize, fraction: f64, seed: u64) -> (usize, usize) {
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return (n, n);
    }
    let slots = n / n_val;
    let k = ChaCha8Rng::seed_from_u64(seed).random_range(0..slots);
    let start = (k * n_val).min(n - n_val);
    (start, start + n_val)
}

/// Features for `wav`, read from or stored in `cache_dir` when given.
pub fn cached_features(wav: &Path, source: &FeatureSource, fps: f64, cache_dir: Option<&Path>) -> Result<AudioFeatureSequence> {
    let wave = Waveform::from_wav(wav)?;
    let Some(cache) = cache_dir else {
        return extract_features(&wave, fps, source.build()?.as_ref());
    };
    let bytes = std::fs::read(wav).map_err(|e| Error::io(wav, e))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    h.update(serde_json::to_vec(source)?);
    h.update(fps.to_le_bytes());
    let key: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let path = cache.join(format!("{key}.bin"));
    if path.exists() {
        return AudioFeatureSequence::load(&path);
    }
    let seq = extract_features(&wave, fps, source.build()?.as_ref())?;
    std::fs::create_dir_all(cache).map_err(|e| Error::io(cache, e))?;
    seq.save(&path)?;
    Ok(seq)
}

/// Projected face and torso points of one frame.
pub fn project_frame(m: &MotionRepresentation, camera: &CameraModel) -> Result<(Vec<Point2>, Vec<Point2>)> {
    let face = project(&to_camera(m.face.points(), &m.pose), camera)?;
    let torso = project(m.torso.points(), camera)?;
    Ok((face, torso))
}

/// Processes one clip directory into `out`.
pub fn build_dataset(clip: &Path, out: &Path, cfg: &DatasetConfig) -> Result<Dataset> {
    let maps = IndexMaps::bundled();
    let frames = numbered_files(&clip.join("frames"), "png");
    let segs = numbered_files(&clip.join("seg"), "png");
    let landmarks = io::read_landmarks(&clip.join("landmarks.bin")).unwrap_or_default();
    let poses = io::read_poses(&clip.join("poses.bin")).unwrap_or_default();
    let wav = clip.join("audio.wav");
    let features = if wav.exists() { Some(cached_features(&wav, &cfg.features, cfg.fps, cfg.cache_dir.as_deref())?) } else { None };
    let counts = [
        ("frames", frames.len()),
        ("seg", segs.len()),
        ("landmarks", landmarks.len()),
        ("poses", poses.len()),
        ("audio", features.as_ref().map_or(0, |f| f.frames())),
    ];
    let n = counts.iter().map(|c| c.1).max().unwrap_or(0);
    if n == 0 {
        return Err(Error::DatasetEmpty(clip.display().to_string()));
    }
    let short: Vec<String> = counts.iter().filter(|c| c.1 != n).map(|(k, v)| format!("{k}={v}")).collect();
    if !short.is_empty() {
        return Err(Error::CountMismatch(format!("expected {n} frames; offending streams: {}", short.join(", "))));
    }
    let features = features.expect("audio counted");
    if cfg.reference_frame >= n {
        return Err(Error::Config(format!("reference frame {} outside {n} frames", cfg.reference_frame)));
    }

    let reference = io::read_png(&frames[cfg.reference_frame])?;
    let (_, height, width) = reference.dim();
    let camera_path = clip.join("camera.json");
    let camera: CameraModel = if camera_path.exists() {
        io::read_json(&camera_path)?
    } else {
        CameraModel::orthographic(cfg.default_scale, [width as f64 / 2.0, height as f64 / 2.0], [width as u32, height as u32])?
    };

    let mut motions = Vec::with_capacity(n);
    for t in 0..n {
        let pose = HeadPose::from_array(poses[t]);
        let (face, mouth, eyes) = canonicalize(&landmarks[t], &pose, maps)?;
        let seg = SegmentationMap::load(&segs[t])?;
        let depth = landmarks[t].iter().map(|p| p[2]).sum::<f64>() / landmarks[t].len() as f64;
        let px = extract_torso_points(&seg, depth, &cfg.torso)?;
        let torso = TorsoPoints::new(px.points().iter().map(|p| camera.unproject([p[0], p[1]], p[2])).collect())?;
        motions.push(MotionRepresentation { mouth, eyes, face, pose, torso });
    }
    let template = SubjectTemplate::from_reference(&motions[cfg.reference_frame]);
    let topology = MeshTopology::knn(template.face.points(), cfg.mesh_neighbors);

    std::fs::create_dir_all(out.join("conditions")).map_err(|e| Error::io(out, e))?;
    let val_range = split_range(n, cfg.val_fraction, cfg.seed);
    let mut records = Vec::with_capacity(n);
    for (t, motion) in motions.into_iter().enumerate() {
        let (face_2d, torso_2d) = project_frame(&motion, &camera)?;
        let drawing = draw_condition(&face_2d, &torso_2d, &topology, height, width);
        let mask = mouth_mask(&face_2d, maps, height, width, cfg.mouth_dilation_px);
        let mut cached = Array3::zeros((2, height, width));
        cached.slice_mut(s![0..1, .., ..]).assign(&drawing);
        cached.slice_mut(s![1, .., ..]).assign(&mask);
        let condition_path = PathBuf::from("conditions").join(format!("{t:06}.bin"));
        io::write_f16_raster(&out.join(&condition_path), &cached)?;
        let split = if (val_range.0..val_range.1).contains(&t) { Split::Val } else { Split::Train };
        let frame_path = std::path::absolute(&frames[t]).map_err(|e| Error::io(&frames[t], e))?;
        records.push(TrainingRecord { frame: t, split, audio_row: t, motion, frame_path, condition_path });
    }
    let manifest = DatasetManifest {
        clip: std::path::absolute(clip).map_err(|e| Error::io(clip, e))?,
        frames: n,
        fps: cfg.fps,
        height,
        width,
        camera,
        feature_dim: features.dim(),
        val_range,
        reference_frame: cfg.reference_frame,
        mesh_neighbors: cfg.mesh_neighbors,
        mouth_dilation_px: cfg.mouth_dilation_px,
        records,
    };
    features.save(&out.join("features.bin"))?;
    template.save(&out.join("template.json"))?;
    io::write_png(&out.join("reference.png"), &reference)?;
    io::write_json(&out.join("dataset.json"), &manifest)?;
    Ok(Dataset { dir: out.to_path_buf(), manifest, features, template, reference })
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("dataset.json");
        if !manifest_path.exists() {
            return Err(Error::DatasetEmpty(format!("{} has no dataset.json", dir.display())));
        }
        let manifest: DatasetManifest = io::read_json(&manifest_path)?;
        if manifest.records.is_empty() {
            return Err(Error::DatasetEmpty(dir.display().to_string()));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            features: AudioFeatureSequence::load(&dir.join("features.bin"))?,
            template: SubjectTemplate::load(&dir.join("template.json"))?,
            reference: io::read_png(&dir.join("reference.png"))?,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    pub fn records(&self, split: Split) -> impl Iterator<Item = &TrainingRecord> {
        self.manifest.records.iter().filter(move |r| r.split == split)
    }

    pub fn topology(&self) -> MeshTopology {
        MeshTopology::knn(self.template.face.points(), self.manifest.mesh_neighbors)
    }

    /// Maximal runs of consecutive frames in `split`.
    fn runs(&self, split: Split) -> Vec<Vec<&TrainingRecord>> {
        let mut runs: Vec<Vec<&TrainingRecord>> = Vec::new();
        for r in self.records(split) {
            match runs.last_mut() {
                Some(run) if run.last().is_some_and(|p| p.frame + 1 == r.frame) => run.push(r),
                _ => runs.push(vec![r]),
            }
        }
        runs
    }

    /// Clips of at most `window` consecutive frames.
    pub fn moda_samples(&self, split: Split, window: usize) -> Vec<ModaSample> {
        let window = window.max(1);
        let mut out = Vec::new();
        for run in self.runs(split) {
            for chunk in run.chunks(window) {
                let rows: Vec<usize> = chunk.iter().map(|r| r.audio_row).collect();
                let audio = Array2::from_shape_fn((rows.len(), self.features.dim()), |(i, j)| self.features.features[[rows[i], j]]);
                let frames: Vec<FrameMotion> = chunk
                    .iter()
                    .map(|r| FrameMotion {
                        mouth: r.motion.mouth.clone(),
                        pose: r.motion.pose,
                        eyes: r.motion.eyes.clone(),
                        torso: r.motion.torso.clone(),
                    })
                    .collect();
                let target = MotionOutput::from_frames(&frames, &self.template);
                out.push(ModaSample { audio, target, face: self.template.face.clone() });
            }
        }
        out
    }

    pub fn faco_samples(&self, split: Split) -> Vec<FacoSample> {
        self.records(split)
            .map(|r| FacoSample {
                subject: self.template.face.clone(),
                mouth: r.motion.mouth.clone(),
                eyes: r.motion.eyes.clone(),
                target: r.motion.face.clone(),
            })
            .collect()
    }

    pub fn render_samples(&self, split: Split) -> Result<Vec<RenderSample>> {
        self.records(split).map(|r| self.render_sample(r)).collect()
    }

    pub fn render_sample(&self, r: &TrainingRecord) -> Result<RenderSample> {
        let cached = io::read_f16_raster(&self.dir.join(&r.condition_path))?;
        let drawing = cached.slice(s![0..1, .., ..]).to_owned();
        let mouth_mask = cached.slice(s![1, .., ..]).to_owned();
        let cond = ConditionFrame { drawing, reference: self.reference.clone(), tpe: tpe(r.frame as u64), t: r.frame as u64 };
        Ok(RenderSample { condition: cond.to_tensor(), target: io::read_png(&r.frame_path)?, mouth_mask })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_determinism() {
        for seed in 0..20 {
            let (a, b) = split_range(100, 0.2, seed);
            assert_eq!(b - a, 20);
            assert_eq!(a % 20, 0);
            assert_eq!((a, b), split_range(100, 0.2, seed));
        }
        assert_eq!(split_range(2, 0.2, 0), (2, 2));
        assert_eq!(split_range(3, 0.2, 0), (1, 2));
    }
}
