use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::cloud::PointCloud;
use crate::geometry::{Point3, RigidTransform, Vec3};

/// One Gaussian displacement bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Point3,
    /// Unit displacement direction.
    pub direction: Vec3,
    pub strength: f64,
}

/// Sum of Gaussian bumps passed through a smooth radial saturation:
/// `u(p) = A * tanh(|v|) * v / |v|` with `v(p) = Σ s_k d_k exp(-|p - c_k|² / 2ℓ²)`.
/// The magnitude never reaches the declared amplitude `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothBump {
    pub amplitude: f64,
    pub length_scale: f64,
    pub bumps: Vec<Bump>,
}

impl SmoothBump {
    /// Bumps centred on randomly chosen `anchors` with random directions.
    pub fn random(amplitude: f64, length_scale: f64, count: usize, anchors: &[Point3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bumps = (0..count)
            .map(|_| {
                let center = anchors[rng.random_range(0..anchors.len())];
                let direction = loop {
                    let v = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let n = v.norm();
                    if n > 0.1 && n <= 1.0 {
                        break v / n;
                    }
                };
                Bump {
                    center,
                    direction,
                    strength: 2.0,
                }
            })
            .collect();
        Self {
            amplitude,
            length_scale,
            bumps,
        }
    }

    pub fn displacement(&self, p: &Point3) -> Vec3 {
        let two_l2 = 2.0 * self.length_scale * self.length_scale;
        let v: Vec3 = self
            .bumps
            .iter()
            .map(|b| b.direction * (b.strength * (-(p - b.center).norm_squared() / two_l2).exp()))
            .sum();
        let r = v.norm();
        if r < 1e-12 {
            v * self.amplitude
        } else {
            v * (self.amplitude * r.tanh() / r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeformationField {
    Rigid {
        transform: RigidTransform,
    },
    /// `p + shear * (p - center)`.
    AffineShear {
        center: Point3,
        shear: Matrix3<f64>,
    },
    SmoothBump(SmoothBump),
}

impl DeformationField {
    pub fn apply(&self, p: &Point3) -> Point3 {
        match self {
            DeformationField::Rigid { transform } => transform.apply(p),
            DeformationField::AffineShear { center, shear } => p + shear * (p - center),
            DeformationField::SmoothBump(b) => p + b.displacement(p),
        }
    }

    /// Upper bound on displacement magnitude, when one exists.
    pub fn displacement_bound(&self) -> Option<f64> {
        match self {
            DeformationField::SmoothBump(b) => Some(b.amplitude),
            _ => None,
        }
    }
}

/// Displace every point, skeleton node, and waypoint by `field`.
pub fn apply_deformation(
    cloud: &PointCloud,
    truth: &GroundTruth,
    field: &DeformationField,
) -> (PointCloud, GroundTruth) {
    let bound = field.displacement_bound();
    let map = |p: &Point3| {
        let q = field.apply(p);
        if let Some(bound) = bound {
            assert!((q - p).norm() <= bound, "displacement exceeds declared bound {bound}");
        }
        q
    };
    let deformed = PointCloud {
        points: cloud.points.iter().map(map).collect(),
        labels: cloud.labels.clone(),
    };
    let mut truth = truth.clone();
    truth.skeleton = truth.skeleton.iter().map(map).collect();
    for w in &mut truth.waypoints.waypoints {
        w.position = map(&w.position);
    }
    (deformed, truth)
}
