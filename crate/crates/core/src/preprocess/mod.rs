//! Turns detector outputs (camera-space landmarks, head poses, face parsing maps and
//! audio) into canonical-space training records.

pub mod boundary;
pub mod dataset;
pub mod polygon;
pub mod segmentation;
pub mod torso;

pub use boundary::{semantic_boundary, trace_contour};
pub use dataset::{build_dataset, Dataset, DatasetConfig, TrainingRecord};
pub use polygon::{densify, polygon_fit};
pub use segmentation::SegmentationMap;
pub use torso::{extract_torso_points, TorsoConfig};

use crate::error::Result;
use crate::geometry::{to_canonical, EyePoints, FacePoints, HeadPose, MouthPoints, Point3};
use crate::landmarks::IndexMaps;

/// Canonical dense face plus the mouth and eye subsets selected from it.
pub fn canonicalize(landmarks_camera: &[Point3], pose: &HeadPose, maps: &IndexMaps) -> Result<(FacePoints, MouthPoints, EyePoints)> {
    let face = FacePoints::new(to_canonical(landmarks_camera, pose))?;
    let mouth = maps.extract_mouth(&face);
    let eyes = maps.extract_eyes(&face);
    Ok((face, mouth, eyes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::to_camera;

    #[test]
    fn identity_pose_only_selects() {
        let pts: Vec<Point3> = (0..478).map(|i| [i as f64, -(i as f64), 0.5]).collect();
        let maps = IndexMaps::bundled();
        let (face, mouth, eyes) = canonicalize(&pts, &HeadPose::identity(), maps).unwrap();
        assert_eq!(face.points(), &pts[..]);
        for (k, &i) in maps.mouth.iter().enumerate() {
            assert_eq!(mouth.points()[k], face.points()[i]);
        }
        for (k, &i) in maps.eyes.iter().enumerate() {
            assert_eq!(eyes.points()[k], face.points()[i]);
        }
    }

    #[test]
    fn round_trip_through_camera() {
        let pts: Vec<Point3> = (0..478).map(|i| [(i as f64).sin(), (i as f64 * 0.3).cos(), 0.1 * i as f64]).collect();
        let pose = HeadPose { rotation: [0.2, -0.4, 0.1], translation: [1.0, -2.0, 8.0] };
        let (face, _, _) = canonicalize(&pts, &pose, IndexMaps::bundled()).unwrap();
        let back = to_camera(face.points(), &pose);
        for (a, b) in back.iter().zip(&pts) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn wrong_count_is_shape_error() {
        let pts = vec![[0.0; 3]; 10];
        assert!(matches!(
            canonicalize(&pts, &HeadPose::identity(), IndexMaps::bundled()),
            Err(crate::Error::ShapeMismatch { .. })
        ));
    }
}
