//! Audio to frames with trained checkpoints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::{find_checkpoint, CheckpointArchive};
use super::config::{PipelineConfig, Stage};
use super::windows::{blend_windows, sliding_windows};
use crate::error::{Error, Result};
use crate::faco::{FacoConfig, FacoNet};
use crate::geometry::{project, to_camera, CameraModel, Point3};
use crate::io::{self, Raster};
use crate::moda::{ModaConfig, ModaNet, MotionOutput, ProbMode};
use crate::preprocess::dataset::{cached_features, Dataset};
use crate::render::{assemble_condition, MeshTopology, RendererConfig, RendererModel, CONDITION_CHANNELS};
use crate::subject::SubjectTemplate;

/// Everything about the depicted person that inference needs.
#[derive(Debug, Clone)]
pub struct Subject {
    pub template: SubjectTemplate,
    pub reference: Raster,
    pub camera: CameraModel,
    pub topology: MeshTopology,
}

impl Subject {
    /// Reads template, reference frame, camera and mesh from a dataset directory.
    pub fn from_dataset(dir: &Path) -> Result<Self> {
        let ds = Dataset::load(dir)?;
        Ok(Subject { topology: ds.topology(), template: ds.template, reference: ds.reference, camera: ds.manifest.camera })
    }
}

/// Generated motion, written as `motion.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionDump {
    pub fps: f64,
    pub seed: u64,
    pub windows: Vec<(usize, usize)>,
    /// Displacements from the template.
    pub displacements: MotionOutput,
    /// Canonical mouth points per frame.
    pub mouth: Vec<Vec<Point3>>,
    pub eyes: Vec<Vec<Point3>>,
    pub pose: Vec<[f64; 6]>,
    /// Camera-space torso points per frame.
    pub torso: Vec<Vec<Point3>>,
}

impl MotionDump {
    pub fn frames(&self) -> usize {
        self.pose.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceManifest {
    pub audio: PathBuf,
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
    pub checkpoints: Vec<(Stage, PathBuf, u64)>,
    pub rendered: bool,
}

pub const MOTION_FILE: &str = "motion.json";
/// Composed canonical dense landmarks, `T x 478 x 3`.
pub const FACES_FILE: &str = "faces.bin";
pub const FRAMES_DIR: &str = "frames";

/// Loaded networks of all three stages.
pub struct Models {
    pub moda: (ModaNet, moda_autograd::nn::Params, u64, PathBuf),
    pub faco: (FacoNet, moda_autograd::nn::Params, u64, PathBuf),
    pub renderer: (RendererModel, moda_autograd::nn::Params, u64, PathBuf),
}

impl Models {
    /// Loads the best (else last) checkpoint of each stage under `root`.
    pub fn load(root: &Path) -> Result<Self> {
        let dirs = Stage::ALL.map(|s| find_checkpoint(root, s));
        let [m, f, r] = dirs;
        let (m, f, r) = (m?, f?, r?);
        let mk = CheckpointArchive::load(&m)?;
        let fk = CheckpointArchive::load(&f)?;
        let rk = CheckpointArchive::load(&r)?;
        let (moda, _) = ModaNet::new(mk.config_as::<ModaConfig>()?, 0)?;
        let (faco, _, _, _) = FacoNet::new(fk.config_as::<FacoConfig>()?, 0)?;
        let (renderer, _, _) = RendererModel::new(rk.config_as::<RendererConfig>()?, CONDITION_CHANNELS, 0)?;
        Ok(Models {
            moda: (moda, mk.group("gen")?.clone(), mk.manifest.step, m),
            faco: (faco, fk.group("gen")?.clone(), fk.manifest.step, f),
            renderer: (renderer, rk.group("gen")?.clone(), rk.manifest.step, r),
        })
    }
}

/// Windowed motion generation for a whole feature sequence.
pub fn generate_motion(net: &ModaNet, params: &moda_autograd::nn::Params, audio: &ndarray::Array2<f64>, subject: &SubjectTemplate, window: usize, stride: usize, seed: u64) -> Result<(MotionOutput, Vec<(usize, usize)>)> {
    let windows = sliding_windows(audio.nrows(), window, stride);
    let parts = windows
        .iter()
        .enumerate()
        .map(|(k, &(s, e))| {
            let slice = audio.slice(ndarray::s![s..e, ..]).to_owned();
            net.infer(params, &slice, &subject.face, ProbMode::Sample, seed.wrapping_add(k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((blend_windows(&parts, &windows)?, windows))
}

/// Runs the three stages on `audio` and writes `motion.json`, `faces.bin`,
/// `frames/%06d.png` (unless `render` is off) and `manifest.json` into `out`.
pub fn infer(audio: &Path, subject: &Subject, models: &Models, cfg: &PipelineConfig, seed: u64, out: &Path, render: bool) -> Result<InferenceManifest> {
    let fps = cfg.dataset.fps;
    let features = cached_features(audio, &cfg.dataset.features, fps, cfg.dataset.cache_dir.as_deref()).map_err(|e| e.in_stage("features"))?;
    let (moda, mp, ..) = &models.moda;
    if moda.cfg.audio_dim != features.dim() {
        return Err(Error::Config(format!("checkpoint expects {} feature columns, extractor gives {}", moda.cfg.audio_dim, features.dim())));
    }
    let (motion, windows) = generate_motion(moda, mp, &features.features, &subject.template, cfg.window, cfg.stride, seed)
        .map_err(|e| e.in_stage("moda"))?;
    let frames = motion.apply_reference(&subject.template).map_err(|e| e.in_stage("moda"))?;

    let (faco, fp, ..) = &models.faco;
    let faces = frames
        .iter()
        .map(|f| faco.compose(fp, &subject.template.face, &f.mouth, &f.eyes))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("faco"))?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let dump = MotionDump {
        fps,
        seed,
        windows,
        displacements: motion,
        mouth: frames.iter().map(|f| f.mouth.points().to_vec()).collect(),
        eyes: frames.iter().map(|f| f.eyes.points().to_vec()).collect(),
        pose: frames.iter().map(|f| f.pose.to_array()).collect(),
        torso: frames.iter().map(|f| f.torso.points().to_vec()).collect(),
    };
    io::write_json(&out.join(MOTION_FILE), &dump)?;
    let face_rows: Vec<Vec<Point3>> = faces.iter().map(|f| f.points().to_vec()).collect();
    io::write_landmarks(&out.join(FACES_FILE), &face_rows)?;

    if render {
        let (renderer, rp, ..) = &models.renderer;
        let size = renderer.cfg.resolution;
        let (_, h, w) = subject.reference.dim();
        if h != size || w != size {
            return Err(Error::Config(format!("renderer resolution {size} but reference frame is {w}x{h}")).in_stage("renderer"));
        }
        let dir = out.join(FRAMES_DIR);
        for (t, (face, f)) in faces.iter().zip(&frames).enumerate() {
            let img = (|| {
                let face_2d = project(&to_camera(face.points(), &f.pose), &subject.camera)?;
                let torso_2d = project(f.torso.points(), &subject.camera)?;
                let cond = assemble_condition(&face_2d, &torso_2d, Some(&subject.reference), t as u64, &subject.topology)?;
                renderer.render_one(rp, &cond.to_tensor())
            })()
            .map_err(|e| e.in_stage("renderer"))?;
            io::write_png(&dir.join(format!("{t:06}.png")), &img)?;
        }
    }
    let manifest = InferenceManifest {
        audio: audio.to_path_buf(),
        frames: faces.len(),
        fps,
        seed,
        checkpoints: vec![
            (Stage::Moda, models.moda.3.clone(), models.moda.2),
            (Stage::Faco, models.faco.3.clone(), models.faco.2),
            (Stage::Renderer, models.renderer.3.clone(), models.renderer.2),
        ],
        rendered: render,
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
