//! Rigid transforms and orthonormal frames in millimetre space.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Tolerance used when checking that a rotation is orthonormal with det +1.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "RigidTransformRecord", try_from = "RigidTransformRecord")]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    /// Rotation by `angle` radians about `axis`, then translation.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self::new(*rot.matrix(), translation)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    pub fn is_proper(&self) -> bool {
        is_proper_rotation(&self.rotation)
    }

    /// Rotation angle in radians of `R`, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

pub fn is_proper_rotation(r: &Matrix3<f64>) -> bool {
    let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
    orth < ROTATION_TOLERANCE && (r.determinant() - 1.0).abs() < ROTATION_TOLERANCE
}

pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

#[derive(Serialize, Deserialize)]
struct RigidTransformRecord {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for RigidTransformRecord {
    fn from(t: RigidTransform) -> Self {
        let r = &t.rotation;
        Self {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<RigidTransformRecord> for RigidTransform {
    type Error = String;

    fn try_from(rec: RigidTransformRecord) -> Result<Self, Self::Error> {
        let rotation = Matrix3::from_fn(|i, j| rec.rotation[i][j]);
        let t = RigidTransform::new(rotation, Vec3::from(rec.translation));
        // JSON printing keeps full precision, so a stored proper rotation
        // re-validates at the usual tolerance.
        if !t.is_proper() {
            return Err("rotation is not a proper orthonormal matrix".into());
        }
        Ok(t)
    }
}

/// An orthonormal frame: `axes[0]` explains the most variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Basis3 {
    pub origin: Point3,
    pub axes: [Vec3; 3],
}

impl Basis3 {
    /// Coordinates of `p` in this frame.
    pub fn to_local(&self, p: &Point3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(&self.axes[0]), d.dot(&self.axes[1]), d.dot(&self.axes[2]))
    }

    pub fn to_world(&self, local: &Vec3) -> Point3 {
        self.origin + self.axes[0] * local.x + self.axes[1] * local.y + self.axes[2] * local.z
    }

    /// Matrix with the axes as columns.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&self.axes)
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        (0..3).all(|i| {
            (self.axes[i].norm() - 1.0).abs() <= tol && (0..i).all(|j| self.axes[i].dot(&self.axes[j]).abs() <= tol)
        })
    }
}
