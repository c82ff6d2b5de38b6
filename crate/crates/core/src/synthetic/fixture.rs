use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_deformation, generate_ribcage, DeformationField, GroundTruth, Modality, RibcageParams, SmoothBump};
use crate::cloud::PointCloud;
use crate::error::Result;
use crate::geometry::{Point3, RigidTransform, Vec3};

/// Recipe for a template/target pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureSpec {
    pub seed: u64,
    /// Smooth-bump amplitude bound, mm; 0 disables the bump field.
    pub amplitude: f64,
    pub length_scale: f64,
    pub bump_count: usize,
    /// In-plane translation of the target, sampled uniformly in a disc.
    pub max_shift: f64,
    /// In-plane rotation of the target about the anterior axis, degrees.
    pub max_rotation_deg: f64,
    pub anatomy: RibcageParams,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            amplitude: 8.0,
            length_scale: 50.0,
            bump_count: 3,
            max_shift: 20.0,
            max_rotation_deg: 15.0,
            anatomy: RibcageParams::default(),
        }
    }
}

/// CT-like template, US-like target, and the fields relating them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub ct: PointCloud,
    pub ct_truth: GroundTruth,
    pub us: PointCloud,
    pub us_truth: GroundTruth,
    /// Applied in order to take template space to target space.
    pub fields: Vec<DeformationField>,
}

impl Fixture {
    pub fn to_target(&self, p: &Point3) -> Point3 {
        self.fields.iter().fold(*p, |q, f| f.apply(&q))
    }

    /// The rigid component of the template-to-target map.
    pub fn rigid_part(&self) -> RigidTransform {
        self.fields
            .iter()
            .filter_map(|f| match f {
                DeformationField::Rigid { transform } => Some(*transform),
                _ => None,
            })
            .fold(RigidTransform::identity(), |acc, t| t.compose(&acc))
    }
}

pub fn build_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    let ct_params = RibcageParams {
        modality: Modality::CtLike,
        rng_seed: spec.seed,
        ..spec.anatomy.clone()
    };
    let us_params = RibcageParams {
        modality: Modality::UsLike,
        rng_seed: spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1),
        ..spec.anatomy.clone()
    };
    let (ct, ct_truth) = generate_ribcage(&ct_params)?;
    let (mut us, mut us_truth) = generate_ribcage(&us_params)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xD1F0_5EED);
    let mut fields = Vec::new();
    if spec.amplitude > 0.0 {
        fields.push(DeformationField::SmoothBump(SmoothBump::random(
            spec.amplitude,
            spec.length_scale,
            spec.bump_count,
            &ct.points,
            rng.random(),
        )));
    }
    if spec.max_shift > 0.0 || spec.max_rotation_deg > 0.0 {
        let angle = if spec.max_rotation_deg > 0.0 {
            rng.random_range(-spec.max_rotation_deg..=spec.max_rotation_deg)
                .to_radians()
        } else {
            0.0
        };
        let radius = spec.max_shift * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let shift = Vec3::new(radius * theta.cos(), radius * theta.sin(), 0.0);
        fields.push(DeformationField::Rigid {
            transform: RigidTransform::from_axis_angle(Vec3::z(), angle, shift),
        });
    }
    for field in &fields {
        (us, us_truth) = apply_deformation(&us, &us_truth, field);
    }
    let mut fixture = Fixture {
        ct,
        ct_truth,
        us,
        us_truth,
        fields,
    };
    // Waypoints are anatomical: the target's truth is the template's, carried
    // through the same fields.
    let mut waypoints = fixture.ct_truth.waypoints.clone();
    for w in &mut waypoints.waypoints {
        w.position = fixture.to_target(&w.position);
    }
    fixture.us_truth.waypoints = waypoints;
    Ok(fixture)
}
