use moda_autograd::Var;
use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EyePoints, HeadPose, MouthPoints, TorsoPoints, EYE_POINTS, MOUTH_POINTS, POSE_DIMS, TORSO_POINTS};
use crate::subject::SubjectTemplate;

pub const MOUTH_WIDTH: usize = MOUTH_POINTS * 3;
pub const EYE_WIDTH: usize = EYE_POINTS * 3;
pub const TORSO_WIDTH: usize = TORSO_POINTS * 3;

/// Stream names in loss-weight order.
pub const STREAMS: [&str; 4] = ["mouth", "pose", "eyes", "torso"];
pub const STREAM_WIDTHS: [usize; 4] = [MOUTH_WIDTH, POSE_DIMS, EYE_WIDTH, TORSO_WIDTH];

/// Per-frame displacement streams, one row per frame, points flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionOutput {
    pub mouth: Array2<f64>,
    pub pose: Array2<f64>,
    pub eyes: Array2<f64>,
    pub torso: Array2<f64>,
}

/// Absolute motion for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMotion {
    pub mouth: MouthPoints,
    pub pose: HeadPose,
    pub eyes: EyePoints,
    pub torso: TorsoPoints,
}

impl MotionOutput {
    pub fn zeros(frames: usize) -> Self {
        MotionOutput {
            mouth: Array2::zeros((frames, MOUTH_WIDTH)),
            pose: Array2::zeros((frames, POSE_DIMS)),
            eyes: Array2::zeros((frames, EYE_WIDTH)),
            torso: Array2::zeros((frames, TORSO_WIDTH)),
        }
    }

    pub fn frames(&self) -> usize {
        self.mouth.nrows()
    }

    pub fn streams(&self) -> [&Array2<f64>; 4] {
        [&self.mouth, &self.pose, &self.eyes, &self.torso]
    }

    pub fn streams_mut(&mut self) -> [&mut Array2<f64>; 4] {
        [&mut self.mouth, &mut self.pose, &mut self.eyes, &mut self.torso]
    }

    pub fn from_streams(s: [Array2<f64>; 4]) -> Result<Self> {
        let [mouth, pose, eyes, torso] = s;
        let out = MotionOutput { mouth, pose, eyes, torso };
        out.validate()?;
        Ok(out)
    }

    /// Checks widths, equal frame counts and finiteness.
    pub fn validate(&self) -> Result<()> {
        let t = self.frames();
        for ((a, name), width) in self.streams().iter().zip(STREAMS).zip(STREAM_WIDTHS) {
            if a.dim() != (t, width) {
                return Err(Error::shape(format!("{name}: {t} x {width}"), format!("{:?}", a.dim())));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("{name} stream contains non-finite values")));
            }
        }
        Ok(())
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        let cut = |a: &Array2<f64>| a.slice(s![start..start + len, ..]).to_owned();
        MotionOutput { mouth: cut(&self.mouth), pose: cut(&self.pose), eyes: cut(&self.eyes), torso: cut(&self.torso) }
    }

    pub fn concat_frames(parts: &[MotionOutput]) -> Result<Self> {
        if parts.is_empty() {
            return Ok(MotionOutput::zeros(0));
        }
        let join = |k: usize| {
            let views: Vec<_> = parts.iter().map(|p| p.streams()[k].view()).collect();
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Data(e.to_string()))
        };
        MotionOutput::from_streams([join(0)?, join(1)?, join(2)?, join(3)?])
    }

    /// Displacements of absolute per-frame motion relative to the template.
    pub fn from_frames(frames: &[FrameMotion], template: &SubjectTemplate) -> Self {
        let mut out = MotionOutput::zeros(frames.len());
        let refs = template_rows(template);
        for (t, f) in frames.iter().enumerate() {
            let rows = [f.mouth.to_flat(), f.pose.to_array().to_vec(), f.eyes.to_flat(), f.torso.to_flat()];
            for ((stream, row), r) in out.streams_mut().into_iter().zip(rows).zip(&refs) {
                for (c, (v, base)) in row.iter().zip(r).enumerate() {
                    stream[[t, c]] = v - base;
                }
            }
        }
        out
    }

    /// Adds the template reference values back to every frame.
    pub fn apply_reference(&self, template: &SubjectTemplate) -> Result<Vec<FrameMotion>> {
        self.validate()?;
        let refs = template_rows(template);
        (0..self.frames())
            .map(|t| {
                let abs = |k: usize| -> Vec<f64> {
                    self.streams()[k].row(t).iter().zip(&refs[k]).map(|(d, r)| d + r).collect()
                };
                Ok(FrameMotion {
                    mouth: MouthPoints::from_flat(&abs(0))?,
                    pose: HeadPose::from_slice(&abs(1))?,
                    eyes: EyePoints::from_flat(&abs(2))?,
                    torso: TorsoPoints::from_flat(&abs(3))?,
                })
            })
            .collect()
    }

    pub fn to_vars(&self) -> MotionVars {
        let c = |a: &Array2<f64>| Var::constant(a.clone().into_dyn());
        MotionVars { mouth: c(&self.mouth), pose: c(&self.pose), eyes: c(&self.eyes), torso: c(&self.torso) }
    }
}

fn template_rows(t: &SubjectTemplate) -> [Vec<f64>; 4] {
    [t.mouth.to_flat(), t.pose.to_array().to_vec(), t.eyes.to_flat(), t.torso.to_flat()]
}

/// Differentiable counterpart of [`MotionOutput`].
#[derive(Debug, Clone)]
pub struct MotionVars {
    pub mouth: Var,
    pub pose: Var,
    pub eyes: Var,
    pub torso: Var,
}

impl MotionVars {
    pub fn streams(&self) -> [&Var; 4] {
        [&self.mouth, &self.pose, &self.eyes, &self.torso]
    }

    pub fn to_output(&self) -> MotionOutput {
        let v = |x: &Var| x.value().clone().into_dimensionality().expect("motion streams are 2-D");
        MotionOutput { mouth: v(&self.mouth), pose: v(&self.pose), eyes: v(&self.eyes), torso: v(&self.torso) }
    }
}
