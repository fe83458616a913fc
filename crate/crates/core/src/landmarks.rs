//! Which dense-mesh rows form the mouth and eye subsets.

use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EyePoints, FacePoints, MouthPoints, Point3, EYE_POINTS, FACE_POINTS, MOUTH_POINTS};
use crate::io::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeGroups {
    pub left_eye: [usize; 2],
    pub right_eye: [usize; 2],
    pub left_brow: [usize; 2],
    pub right_brow: [usize; 2],
    pub left_iris: [usize; 2],
    pub right_iris: [usize; 2],
}

impl EyeGroups {
    pub fn range(r: [usize; 2]) -> Range<usize> {
        r[0]..r[1]
    }
}

/// Row indices into the 478-point mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMaps {
    pub mouth: Vec<usize>,
    /// Positions within `mouth` tracing the outer lip contour.
    pub mouth_outer_ring: Vec<usize>,
    pub eyes: Vec<usize>,
    pub eye_groups: EyeGroups,
}

const BUNDLED: &str = include_str!("../data/index_maps.json");

impl IndexMaps {
    /// The maps shipped with the crate.
    pub fn bundled() -> &'static IndexMaps {
        static MAPS: OnceLock<IndexMaps> = OnceLock::new();
        MAPS.get_or_init(|| {
            let maps: IndexMaps = serde_json::from_str(BUNDLED).expect("bundled index maps parse");
            maps.validate().expect("bundled index maps are valid");
            maps
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let maps: IndexMaps = read_json(path)?;
        maps.validate()?;
        Ok(maps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mouth.len() != MOUTH_POINTS || self.eyes.len() != EYE_POINTS {
            return Err(Error::shape(
                format!("{MOUTH_POINTS} mouth and {EYE_POINTS} eye indices"),
                format!("{} and {}", self.mouth.len(), self.eyes.len()),
            ));
        }
        let mut seen = vec![false; FACE_POINTS];
        for &i in self.mouth.iter().chain(&self.eyes) {
            if i >= FACE_POINTS || seen[i] {
                return Err(Error::Config(format!("index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        if self.mouth_outer_ring.len() < 3 || self.mouth_outer_ring.iter().any(|&i| i >= MOUTH_POINTS) {
            return Err(Error::Config("outer mouth ring needs at least 3 valid positions".into()));
        }
        Ok(())
    }

    pub fn extract_mouth(&self, face: &FacePoints) -> MouthPoints {
        MouthPoints::new(self.mouth.iter().map(|&i| face.points()[i]).collect()).expect("validated index count")
    }

    pub fn extract_eyes(&self, face: &FacePoints) -> EyePoints {
        EyePoints::new(self.eyes.iter().map(|&i| face.points()[i]).collect()).expect("validated index count")
    }

    /// Outer lip polygon taken from a mouth point set.
    pub fn outer_ring<'a>(&self, mouth: &'a [Point3]) -> Vec<&'a Point3> {
        self.mouth_outer_ring.iter().map(|&i| &mouth[i]).collect()
    }
}
