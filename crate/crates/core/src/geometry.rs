//! Portrait descriptors and the rigid/projective maps between canonical, camera and
//! image space.
//!
//! Canonical space is head-pose normalized: x to the subject's left in the image, y
//! down, z away from the camera, with the template scaled so the inter-ocular distance
//! is about one unit. A [`HeadPose`] maps canonical points into camera space as
//! `p_cam = R p + t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MOUTH_POINTS: usize = 40;
pub const EYE_POINTS: usize = 60;
pub const FACE_POINTS: usize = 478;
pub const TORSO_POINTS: usize = 18;
pub const TORSO_PER_SIDE: usize = 9;
pub const POSE_DIMS: usize = 6;

pub type Point3 = [f64; 3];
pub type Point2 = [f64; 2];
pub type Mat3 = [[f64; 3]; 3];

macro_rules! fixed_point_set {
    ($(#[$doc:meta])* $name:ident, $count:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = "Vec<Point3>", into = "Vec<Point3>")]
        pub struct $name(Vec<Point3>);

        impl $name {
            pub const COUNT: usize = $count;

            pub fn new(points: Vec<Point3>) -> Result<Self> {
                if points.len() != $count {
                    return Err(Error::shape(format!("{} x 3", $count), format!("{} x 3", points.len())));
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("{} contains non-finite coordinates", stringify!($name))));
                }
                Ok(Self(points))
            }

            /// Builds from a row-major `[COUNT * 3]` slice.
            pub fn from_flat(flat: &[f64]) -> Result<Self> {
                if flat.len() != $count * 3 {
                    return Err(Error::shape(format!("{} values", $count * 3), format!("{} values", flat.len())));
                }
                Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
            }

            pub fn zeros() -> Self {
                Self(vec![[0.0; 3]; $count])
            }

            pub fn points(&self) -> &[Point3] {
                &self.0
            }

            pub fn to_flat(&self) -> Vec<f64> {
                self.0.iter().flatten().copied().collect()
            }
        }

        impl TryFrom<Vec<Point3>> for $name {
            type Error = Error;
            fn try_from(points: Vec<Point3>) -> Result<Self> {
                Self::new(points)
            }
        }

        impl From<$name> for Vec<Point3> {
            fn from(p: $name) -> Vec<Point3> {
                p.0
            }
        }

        impl Displace for $name {
            fn displacement(&self, reference: &Self) -> Self {
                Self(sub_points(&self.0, &reference.0))
            }

            fn apply_displacement(&self, reference: &Self) -> Self {
                Self(add_points(&self.0, &reference.0))
            }
        }
    };
}

fixed_point_set!(
    /// Mouth points in canonical space.
    MouthPoints,
    MOUTH_POINTS
);
fixed_point_set!(
    /// Eye and eyebrow points in canonical space.
    EyePoints,
    EYE_POINTS
);
fixed_point_set!(
    /// Dense facial points in canonical space.
    FacePoints,
    FACE_POINTS
);
fixed_point_set!(
    /// Shoulder points: rows `0..9` are the image-left side, `9..18` the image-right side.
    TorsoPoints,
    TORSO_POINTS
);

impl TorsoPoints {
    pub fn left(&self) -> &[Point3] {
        &self.0[..TORSO_PER_SIDE]
    }

    pub fn right(&self) -> &[Point3] {
        &self.0[TORSO_PER_SIDE..]
    }
}

/// Rotation as Euler angles (radians) plus translation in camera units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadPose {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl HeadPose {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 6] {
        let [a, b, c] = self.rotation;
        let [x, y, z] = self.translation;
        [a, b, c, x, y, z]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        HeadPose { rotation: [v[0], v[1], v[2]], translation: [v[3], v[4], v[5]] }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; 6] = v.try_into().map_err(|_| Error::shape("6 pose values", format!("{} values", v.len())))?;
        Ok(Self::from_array(arr))
    }
}

impl Displace for HeadPose {
    fn displacement(&self, reference: &Self) -> Self {
        let d = sub_points(&[self.rotation, self.translation], &[reference.rotation, reference.translation]);
        HeadPose { rotation: d[0], translation: d[1] }
    }

    fn apply_displacement(&self, reference: &Self) -> Self {
        let d = add_points(&[self.rotation, self.translation], &[reference.rotation, reference.translation]);
        HeadPose { rotation: d[0], translation: d[1] }
    }
}

/// Order in which the three Euler rotations are composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EulerConvention {
    /// Intrinsic X, then Y, then Z: `R = Rx(pitch) Ry(yaw) Rz(roll)`.
    #[default]
    IntrinsicXyz,
    /// Intrinsic Z, then Y, then X: `R = Rz(roll) Ry(yaw) Rx(pitch)`.
    IntrinsicZyx,
}

/// Rotation matrix of `pose` under the default intrinsic X-Y-Z convention.
pub fn euler_to_matrix(pose: &HeadPose) -> Mat3 {
    euler_to_matrix_with(pose, EulerConvention::IntrinsicXyz)
}

pub fn euler_to_matrix_with(pose: &HeadPose, convention: EulerConvention) -> Mat3 {
    let [a, b, c] = pose.rotation;
    let (rx, ry, rz) = (rot_x(a), rot_y(b), rot_z(c));
    match convention {
        EulerConvention::IntrinsicXyz => mat_mul(&mat_mul(&rx, &ry), &rz),
        EulerConvention::IntrinsicZyx => mat_mul(&mat_mul(&rz, &ry), &rx),
    }
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: &Point3) -> Point3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn determinant(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Maps canonical points into camera space: `R p + t` for each row.
pub fn to_camera(points: &[Point3], pose: &HeadPose) -> Vec<Point3> {
    let r = euler_to_matrix(pose);
    let t = pose.translation;
    points
        .iter()
        .map(|p| {
            let q = mat_vec(&r, p);
            [q[0] + t[0], q[1] + t[1], q[2] + t[2]]
        })
        .collect()
}

/// Inverse of [`to_camera`]: `R^T (p - t)`.
pub fn to_canonical(points: &[Point3], pose: &HeadPose) -> Vec<Point3> {
    let rt = mat_transpose(&euler_to_matrix(pose));
    let t = pose.translation;
    points.iter().map(|p| mat_vec(&rt, &[p[0] - t[0], p[1] - t[1], p[2] - t[2]])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    #[default]
    Orthographic,
    Pinhole,
}

/// Camera intrinsics. `focal` is the orthographic scale (pixels per unit) or the
/// pinhole focal length in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub mode: ProjectionMode,
    pub focal: f64,
    pub principal: Point2,
    pub image_size: [u32; 2],
}

impl CameraModel {
    pub fn orthographic(scale: f64, principal: Point2, image_size: [u32; 2]) -> Result<Self> {
        let cam = CameraModel { mode: ProjectionMode::Orthographic, focal: scale, principal, image_size };
        cam.validate()?;
        Ok(cam)
    }

    pub fn pinhole(focal: f64, principal: Point2, image_size: [u32; 2]) -> Result<Self> {
        let cam = CameraModel { mode: ProjectionMode::Pinhole, focal, principal, image_size };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::Config(format!("camera scale/focal must be positive, got {}", self.focal)));
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            return Err(Error::Config("camera image size must be positive".into()));
        }
        Ok(())
    }

    /// Lifts an image point back to camera space at depth `z`.
    pub fn unproject(&self, px: Point2, z: f64) -> Point3 {
        let u = (px[0] - self.principal[0]) / self.focal;
        let v = (px[1] - self.principal[1]) / self.focal;
        match self.mode {
            ProjectionMode::Orthographic => [u, v, z],
            ProjectionMode::Pinhole => [u * z, v * z, z],
        }
    }
}

/// Projects camera-space points to image coordinates.
pub fn project(points: &[Point3], cam: &CameraModel) -> Result<Vec<Point2>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| match cam.mode {
            ProjectionMode::Orthographic => {
                Ok([p[0] * cam.focal + cam.principal[0], p[1] * cam.focal + cam.principal[1]])
            }
            ProjectionMode::Pinhole => {
                if p[2] <= 0.0 {
                    return Err(Error::NonPositiveDepth { index: i, z: p[2] });
                }
                Ok([cam.focal * p[0] / p[2] + cam.principal[0], cam.focal * p[1] / p[2] + cam.principal[1]])
            }
        })
        .collect()
}

/// Offsets relative to a reference value of the same descriptor.
pub trait Displace: Sized {
    /// `self - reference`.
    fn displacement(&self, reference: &Self) -> Self;
    /// `self + reference`, the inverse of [`Displace::displacement`].
    fn apply_displacement(&self, reference: &Self) -> Self;
}

/// Elementwise difference of two equally-shaped flat arrays.
pub fn displacement(x: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if x.len() != reference.len() {
        return Err(Error::shape(reference.len(), x.len()));
    }
    Ok(x.iter().zip(reference).map(|(a, b)| a - b).collect())
}

pub fn apply_displacement(delta: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if delta.len() != reference.len() {
        return Err(Error::shape(reference.len(), delta.len()));
    }
    Ok(delta.iter().zip(reference).map(|(a, b)| a + b).collect())
}

fn sub_points(a: &[Point3], b: &[Point3]) -> Vec<Point3> {
    a.iter().zip(b).map(|(p, q)| [p[0] - q[0], p[1] - q[1], p[2] - q[2]]).collect()
}

fn add_points(a: &[Point3], b: &[Point3]) -> Vec<Point3> {
    a.iter().zip(b).map(|(p, q)| [p[0] + q[0], p[1] + q[1], p[2] + q[2]]).collect()
}

/// The full per-frame portrait description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRepresentation {
    pub mouth: MouthPoints,
    pub eyes: EyePoints,
    pub face: FacePoints,
    pub pose: HeadPose,
    pub torso: TorsoPoints,
}

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).abs() < tol))
    }

    /// Rodrigues rotation about a unit axis; used as an independent construction.
    fn axis_angle(axis: Point3, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        let [x, y, z] = axis;
        let k = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]];
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let kk: f64 = (0..3).map(|m| k[i][m] * k[m][j]).sum();
                r[i][j] = if i == j { 1.0 } else { 0.0 } + s * k[i][j] + (1.0 - c) * kk;
            }
        }
        r
    }

    const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn zero_rotation_is_identity() {
        assert_eq!(euler_to_matrix(&HeadPose::identity()), IDENTITY);
    }

    #[test]
    fn half_turn_about_x() {
        let r = euler_to_matrix(&HeadPose { rotation: [PI, 0.0, 0.0], translation: [0.0; 3] });
        assert!(close(&r, &[[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]], 1e-12));
    }

    #[test]
    fn translation_moves_origin() {
        let pose = HeadPose { rotation: [0.0; 3], translation: [1.0, 2.0, 3.0] };
        assert_eq!(to_camera(&[[0.0; 3]], &pose), vec![[1.0, 2.0, 3.0]]);
    }

    #[test]
    fn projections() {
        let ortho = CameraModel::orthographic(1.0, [0.0, 0.0], [64, 64]).unwrap();
        assert_eq!(project(&[[3.0, 4.0, 9.0]], &ortho).unwrap(), vec![[3.0, 4.0]]);
        let pin = CameraModel::pinhole(2.0, [0.0, 0.0], [64, 64]).unwrap();
        assert_eq!(project(&[[1.0, 1.0, 2.0]], &pin).unwrap(), vec![[1.0, 1.0]]);
        assert!(matches!(project(&[[1.0, 1.0, 0.0]], &pin), Err(Error::NonPositiveDepth { index: 0, .. })));
        assert!(CameraModel::orthographic(0.0, [0.0, 0.0], [64, 64]).is_err());
    }

    #[test]
    fn unproject_inverts_project() {
        let pin = CameraModel::pinhole(50.0, [32.0, 30.0], [64, 64]).unwrap();
        let p = [0.3, -0.2, 4.0];
        let px = project(&[p], &pin).unwrap()[0];
        let q = pin.unproject(px, 4.0);
        assert!(distance(&p, &q) < 1e-12);
    }

    #[test]
    fn point_set_cardinality_is_enforced() {
        assert!(MouthPoints::new(vec![[0.0; 3]; 39]).is_err());
        assert!(EyePoints::new(vec![[0.0; 3]; 60]).is_ok());
        assert!(FacePoints::new(vec![[f64::NAN, 0.0, 0.0]; 478]).is_err());
        let t = TorsoPoints::zeros();
        assert_eq!((t.left().len(), t.right().len()), (9, 9));
        assert!(displacement(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn displacement_identities() {
        let x = MouthPoints::from_flat(&(0..120).map(|v| v as f64 * 0.1).collect::<Vec<_>>()).unwrap();
        assert_eq!(x.displacement(&x), MouthPoints::zeros());
        assert_eq!(x.displacement(&MouthPoints::zeros()), x);
    }

    fn pose_strategy() -> impl Strategy<Value = HeadPose> {
        (prop::array::uniform3(-PI..PI), prop::array::uniform3(-10.0..10.0f64))
            .prop_map(|(rotation, translation)| HeadPose { rotation, translation })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rotation_is_orthonormal_and_proper(pose in pose_strategy()) {
            let r = euler_to_matrix(&pose);
            prop_assert!(close(&mat_mul(&r, &mat_transpose(&r)), &IDENTITY, 1e-6));
            prop_assert!((determinant(&r) - 1.0).abs() < 1e-6);
        }

        #[test]
        fn euler_matches_axis_angle_composition(pose in pose_strategy()) {
            let [a, b, c] = pose.rotation;
            let oracle = mat_mul(&mat_mul(&axis_angle([1.0, 0.0, 0.0], a), &axis_angle([0.0, 1.0, 0.0], b)), &axis_angle([0.0, 0.0, 1.0], c));
            prop_assert!(close(&euler_to_matrix(&pose), &oracle, 1e-9));
            let zyx = mat_mul(&mat_mul(&axis_angle([0.0, 0.0, 1.0], c), &axis_angle([0.0, 1.0, 0.0], b)), &axis_angle([1.0, 0.0, 0.0], a));
            prop_assert!(close(&euler_to_matrix_with(&pose, EulerConvention::IntrinsicZyx), &zyx, 1e-9));
        }

        #[test]
        fn camera_round_trip_and_isometry(
            pose in pose_strategy(),
            pts in prop::collection::vec(prop::array::uniform3(-3.0..3.0f64), 2..12),
        ) {
            let cam = to_camera(&pts, &pose);
            let back = to_canonical(&cam, &pose);
            for (p, q) in pts.iter().zip(&back) {
                prop_assert!(distance(p, q) < 1e-6);
            }
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    prop_assert!((distance(&pts[i], &pts[j]) - distance(&cam[i], &cam[j])).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn displacement_round_trip(
            x in prop::collection::vec(-1e3..1e3f64, 6),
            r in prop::collection::vec(-1e3..1e3f64, 6),
        ) {
            let d = displacement(&x, &r).unwrap();
            let back = apply_displacement(&d, &r).unwrap();
            for ((a, b), c) in x.iter().zip(&back).zip(&r) {
                // (x - r) + r is exact up to one rounding of the larger operand
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(c.abs()));
            }
            let pose = HeadPose::from_slice(&x).unwrap();
            let rp = HeadPose::from_slice(&r).unwrap();
            let back = pose.displacement(&rp).apply_displacement(&rp);
            for (a, b) in pose.to_array().iter().zip(back.to_array()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
