//! The conditioned subject: canonical face vertices plus reference values for every
//! generated stream.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{EyePoints, FacePoints, HeadPose, MotionRepresentation, MouthPoints, TorsoPoints};
use crate::io::{read_json, write_json};

/// Canonical face `S` and per-stream reference values `X̄` taken from one reference frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTemplate {
    pub face: FacePoints,
    pub mouth: MouthPoints,
    pub eyes: EyePoints,
    pub pose: HeadPose,
    /// Camera-space shoulder points.
    pub torso: TorsoPoints,
}

impl SubjectTemplate {
    pub fn from_reference(frame: &MotionRepresentation) -> Self {
        SubjectTemplate {
            face: frame.face.clone(),
            mouth: frame.mouth.clone(),
            eyes: frame.eyes.clone(),
            pose: frame.pose,
            torso: frame.torso.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}
