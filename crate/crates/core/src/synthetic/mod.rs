//! Parametric rib-cage fixtures with known ground truth.
//!
//! Model frame: `+x` toward the patient's left, `+y` superior, `+z`
//! anterior. The sternum is a rounded plate centred at the origin; each
//! cartilage branch leaves the sternum edge horizontally and bends
//! inferiorly along a circular arc, sampled as the front half of a tube.

mod deform;
mod fixture;

pub use deform::{apply_deformation, Bump, DeformationField, SmoothBump};
pub use fixture::{build_fixture, Fixture, FixtureSpec};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{PartLabel, PointCloud, Side, LEVELS};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};
use crate::graph::NodeLayout;
use crate::nonrigid::{Trajectory, Waypoint, PROTOCOL_CLUSTERS};

/// Sampling model of the two imaging modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    /// Full front half-surface of every part.
    CtLike,
    /// Only surface patches facing the probe, plus isotropic noise.
    UsLike,
}

/// Minimum anterior normal component kept by the ultrasound-like modality.
pub const US_VISIBILITY: f64 = 0.5;
/// Standard deviation of ultrasound-like positional noise, mm.
pub const US_NOISE_SD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RibcageParams {
    pub sternum_width: f64,
    pub sternum_height: f64,
    pub branch_count_per_side: usize,
    /// Arc length per level 2..=5, mm.
    pub branch_lengths: [f64; 4],
    /// Arc curvature (1/mm) per level 2..=5; must increase with level.
    pub branch_curvatures: [f64; 4],
    /// Tube radius of each cartilage branch, mm.
    pub branch_radius: f64,
    /// Posterior fall-off of the front surface: `z = -depth_curvature * x^2`.
    pub depth_curvature: f64,
    /// Points per mm² of sampled surface.
    pub point_density: f64,
    /// Uniform jitter along the anterior axis, total width in mm.
    pub surface_thickness: f64,
    pub modality: Modality,
    pub rng_seed: u64,
}

impl Default for RibcageParams {
    fn default() -> Self {
        Self {
            sternum_width: 30.0,
            sternum_height: 90.0,
            branch_count_per_side: 4,
            branch_lengths: [80.0, 90.0, 100.0, 110.0],
            branch_curvatures: [1.0 / 400.0, 1.0 / 250.0, 1.0 / 150.0, 1.0 / 90.0],
            branch_radius: 3.0,
            depth_curvature: 0.0015,
            point_density: 1.0,
            surface_thickness: 0.5,
            modality: Modality::CtLike,
            rng_seed: 1,
        }
    }
}

impl RibcageParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sternum_width", self.sternum_width),
            ("sternum_height", self.sternum_height),
            ("branch_radius", self.branch_radius),
            ("point_density", self.point_density),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if self.branch_count_per_side != 4 {
            return Err(Error::config(
                "branch_count_per_side",
                "only the 4-level rib cage is modelled",
            ));
        }
        if self.branch_lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::config("branch_lengths", "lengths must be positive"));
        }
        let k = &self.branch_curvatures;
        if k.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || k.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "branch_curvatures",
                "curvatures must be non-negative and strictly increase from level 2 to level 5",
            ));
        }
        if !(self.surface_thickness.is_finite() && self.surface_thickness >= 0.0) {
            return Err(Error::config("surface_thickness", "must be non-negative"));
        }
        if !(self.depth_curvature.is_finite() && self.depth_curvature >= 0.0) {
            return Err(Error::config("depth_curvature", "must be non-negative"));
        }
        Ok(())
    }

    fn level_index(level: u8) -> usize {
        (level - 2) as usize
    }

    /// Height of the branch attachment on the sternum edge.
    pub fn attachment_height(&self, level: u8) -> f64 {
        let i = Self::level_index(level) as f64;
        self.sternum_height / 2.0 - (i + 0.5) * self.sternum_height / 4.0
    }

    pub fn front_depth(&self, x: f64) -> f64 {
        -self.depth_curvature * x * x
    }

    /// Centre-line frame of a branch at arc length `s`: tube axis point,
    /// in-plane tangent, and in-plane normal pointing superiorly.
    pub fn branch_frame(&self, side: Side, level: u8, s: f64) -> (Point3, Vec3, Vec3) {
        let i = Self::level_index(level);
        let kappa = self.branch_curvatures[i];
        let sx = match side {
            Side::Left => 1.0,
            Side::Right => -1.0,
        };
        let (along, drop) = if kappa * s < 1e-9 {
            (s, 0.5 * kappa * s * s)
        } else {
            ((kappa * s).sin() / kappa, (1.0 - (kappa * s).cos()) / kappa)
        };
        let x = sx * (self.sternum_width / 2.0 + along);
        let y = self.attachment_height(level) - drop;
        let tangent = Vec3::new(sx * (kappa * s).cos(), -(kappa * s).sin(), 0.0);
        let mut up = Vec3::new(-tangent.y, tangent.x, 0.0);
        if up.y < 0.0 {
            up = -up;
        }
        let axis = Point3::new(x, y, self.front_depth(x) - self.branch_radius);
        (axis, tangent, up)
    }

    /// Half-angle range `[phi0, pi - phi0]` of the sampled tube cross-section.
    fn visible_phi0(&self) -> f64 {
        match self.modality {
            Modality::CtLike => 0.0,
            Modality::UsLike => US_VISIBILITY.asin(),
        }
    }
}

/// Generator-side truth for a cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<PartLabel>,
    pub correspondence_ids: Vec<u64>,
    /// Ideal skeleton-graph node positions, in default layout order.
    pub skeleton: Vec<Point3>,
    /// Ideal intercostal waypoints.
    pub waypoints: Trajectory,
}

pub fn generate_ribcage(params: &RibcageParams) -> Result<(PointCloud, GroundTruth)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let noise = Normal::new(0.0, US_NOISE_SD).expect("valid sd");
    let phi0 = params.visible_phi0();
    let half_t = params.surface_thickness / 2.0;

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut next_id = 0u64;
    let mut emit = |p: Point3, label: PartLabel, keep: bool, rng: &mut ChaCha8Rng| {
        let id = next_id;
        next_id += 1;
        if !keep {
            return;
        }
        let mut q = p;
        if half_t > 0.0 {
            q.z += rng.random_range(-half_t..=half_t);
        }
        if params.modality == Modality::UsLike {
            q += Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
        }
        points.push(q);
        labels.push(label);
        ids.push(id);
    };

    // Sternum plate with rounded corners.
    let (w, h) = (params.sternum_width, params.sternum_height);
    let corner = 3.0f64.min(w / 4.0).min(h / 4.0);
    let area = w * h - (4.0 - PI) * corner * corner;
    let n_sternum = (params.point_density * area).round() as usize;
    let mut made = 0;
    while made < n_sternum {
        let x = rng.random_range(-w / 2.0..w / 2.0);
        let y = rng.random_range(-h / 2.0..h / 2.0);
        let cx = x.abs() - (w / 2.0 - corner);
        let cy = y.abs() - (h / 2.0 - corner);
        if cx > 0.0 && cy > 0.0 && cx * cx + cy * cy > corner * corner {
            continue;
        }
        made += 1;
        emit(
            Point3::new(x, y, params.front_depth(x)),
            PartLabel::Sternum,
            true,
            &mut rng,
        );
    }

    let r = params.branch_radius;
    for side in Side::BOTH {
        for level in LEVELS {
            let len = params.branch_lengths[RibcageParams::level_index(level)];
            let n = (params.point_density * PI * r * len).round() as usize;
            for _ in 0..n {
                let s = rng.random_range(0.0..len);
                let phi = rng.random_range(0.0..PI);
                let (axis, _, up) = params.branch_frame(side, level, s);
                let p = axis + r * (phi.cos() * up + phi.sin() * Vec3::z());
                let keep = phi >= phi0 && phi <= PI - phi0;
                emit(p, PartLabel::Cartilage { side, level }, keep, &mut rng);
            }
        }
    }

    let skeleton = ideal_skeleton(params, &NodeLayout::default());
    let waypoints = ideal_waypoints(params);
    let cloud = PointCloud::with_labels(points, labels.clone())?;
    Ok((
        cloud,
        GroundTruth {
            labels,
            correspondence_ids: ids,
            skeleton,
            waypoints,
        },
    ))
}

/// Mean anterior and superior offsets (in tube radii) of the upper half of
/// the sampled cross-section.
fn rail_offsets(phi0: f64) -> (f64, f64) {
    let span = PI / 2.0 - phi0;
    ((1.0 - phi0.sin()) / span, phi0.cos() / span)
}

/// Ideal positions of every skeleton node for `layout`.
pub fn ideal_skeleton(params: &RibcageParams, layout: &NodeLayout) -> Vec<Point3> {
    let (w, h) = (params.sternum_width, params.sternum_height);
    let mut nodes = Vec::with_capacity(layout.total());
    for row in 0..layout.sternum_rows {
        for col in 0..layout.sternum_cols {
            let x = -w / 2.0 + (col as f64 + 0.5) * w / layout.sternum_cols as f64;
            let y = -h / 2.0 + (row as f64 + 0.5) * h / layout.sternum_rows as f64;
            nodes.push(Point3::new(x, y, params.front_depth(x)));
        }
    }
    let (lateral, anterior) = rail_offsets(params.visible_phi0());
    let r = params.branch_radius;
    for side in Side::BOTH {
        for level in LEVELS {
            let i = RibcageParams::level_index(level);
            let n = layout.chain_lengths[i];
            let len = params.branch_lengths[i];
            for k in 0..n {
                let s = (k as f64 + 0.5) * len / n as f64;
                let (axis, _, up) = params.branch_frame(side, level, s);
                let lift = axis + r * anterior * Vec3::z();
                nodes.push(lift + r * lateral * up);
                nodes.push(lift - r * lateral * up);
            }
        }
    }
    nodes
}

/// Midpoints between equally spaced centres of consecutive levels.
pub fn ideal_waypoints(params: &RibcageParams) -> Trajectory {
    let phi0 = params.visible_phi0();
    let lift = params.branch_radius * 2.0 * phi0.cos() / (PI - 2.0 * phi0);
    let center = |side: Side, level: u8, j: usize| {
        let i = RibcageParams::level_index(level);
        let k = PROTOCOL_CLUSTERS[i];
        let s = (j as f64 + 0.5) * params.branch_lengths[i] / k as f64;
        params.branch_frame(side, level, s).0 + lift * Vec3::z()
    };
    let mut waypoints = Vec::new();
    for side in Side::BOTH {
        for space in 1..=3u8 {
            let (upper, lower) = (space + 1, space + 2);
            let count = PROTOCOL_CLUSTERS[space as usize - 1].min(PROTOCOL_CLUSTERS[space as usize]);
            for j in 0..count {
                let a = center(side, upper, j);
                let b = center(side, lower, j);
                waypoints.push(Waypoint {
                    position: nalgebra::center(&a, &b),
                    side,
                    intercostal_space: space,
                    index: j,
                });
            }
        }
    }
    Trajectory { waypoints }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_cage_has_nine_parts() {
        let (cloud, truth) = generate_ribcage(&RibcageParams::default()).unwrap();
        let parts: HashSet<_> = cloud.labels.as_ref().unwrap().iter().copied().collect();
        assert_eq!(parts.len(), 9);
        assert_eq!(truth.labels.len(), cloud.len());
        let ids: HashSet<_> = truth.correspondence_ids.iter().collect();
        assert_eq!(ids.len(), cloud.len());
        assert_eq!(truth.skeleton.len(), 245);
        assert_eq!(truth.waypoints.waypoints.len(), 20);
    }

    #[test]
    fn density_scales_point_count() {
        let base = RibcageParams::default();
        let (a, _) = generate_ribcage(&base).unwrap();
        let (b, _) = generate_ribcage(&RibcageParams {
            point_density: 2.0,
            ..base.clone()
        })
        .unwrap();
        let ratio = b.len() as f64 / a.len() as f64;
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");

        // Count tracks density times sampled area.
        let r = base.branch_radius;
        let branches: f64 = 2.0 * base.branch_lengths.iter().map(|l| PI * r * l).sum::<f64>();
        let expect = base.point_density * (base.sternum_width * base.sternum_height + branches);
        assert!((a.len() as f64 / expect - 1.0).abs() < 0.1, "{} vs {expect}", a.len());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = RibcageParams {
            modality: Modality::UsLike,
            ..Default::default()
        };
        assert_eq!(generate_ribcage(&p).unwrap(), generate_ribcage(&p).unwrap());
        let other = RibcageParams {
            rng_seed: 2,
            ..p.clone()
        };
        assert_ne!(generate_ribcage(&p).unwrap().0, generate_ribcage(&other).unwrap().0);
    }

    #[test]
    fn invalid_params_name_field() {
        let p = RibcageParams {
            branch_curvatures: [0.01, 0.005, 0.02, 0.03],
            ..Default::default()
        };
        match p.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "branch_curvatures"),
            other => panic!("{other:?}"),
        }
        assert!(RibcageParams {
            point_density: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    /// Radius of the circle through the start, middle and end of the
    /// branch centreline, the centreline taken as bin means along the chord.
    fn circle_radius(points: &[Point3]) -> f64 {
        let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
        pts.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
        let bins = 9;
        let centre: Vec<(f64, f64)> = (0..bins)
            .map(|b| {
                let s = &pts[b * pts.len() / bins..(b + 1) * pts.len() / bins];
                let n = s.len() as f64;
                (
                    s.iter().map(|p| p.0).sum::<f64>() / n,
                    s.iter().map(|p| p.1).sum::<f64>() / n,
                )
            })
            .collect();
        let (a, b, c) = (centre[0], centre[bins / 2], centre[bins - 1]);
        let ab = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let bc = ((b.0 - c.0).powi(2) + (b.1 - c.1).powi(2)).sqrt();
        let ca = ((c.0 - a.0).powi(2) + (c.1 - a.1).powi(2)).sqrt();
        let cross = ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs();
        ab * bc * ca / (2.0 * cross)
    }

    #[test]
    fn curvature_ordering_matches_levels() {
        let (cloud, _) = generate_ribcage(&RibcageParams::default()).unwrap();
        for side in Side::BOTH {
            let r2 = circle_radius(&cloud.points_with_label(PartLabel::Cartilage { side, level: 2 }));
            let r5 = circle_radius(&cloud.points_with_label(PartLabel::Cartilage { side, level: 5 }));
            assert!(r2 > r5, "{side}: {r2} vs {r5}");
        }
    }

    #[test]
    fn ideal_waypoints_sit_between_consecutive_levels() {
        let (cloud, truth) = generate_ribcage(&RibcageParams::default()).unwrap();
        let labels = cloud.labels.as_ref().unwrap();
        for w in &truth.waypoints.waypoints {
            let mut best: Vec<(f64, PartLabel)> = Vec::new();
            for side in Side::BOTH {
                for level in LEVELS {
                    let label = PartLabel::Cartilage { side, level };
                    let d = cloud
                        .points
                        .iter()
                        .zip(labels)
                        .filter(|(_, l)| **l == label)
                        .map(|(p, _)| (p - w.position).norm())
                        .fold(f64::INFINITY, f64::min);
                    best.push((d, label));
                }
            }
            best.sort_by(|a, b| a.0.total_cmp(&b.0));
            let upper = PartLabel::Cartilage {
                side: w.side,
                level: w.intercostal_space + 1,
            };
            let lower = PartLabel::Cartilage {
                side: w.side,
                level: w.intercostal_space + 2,
            };
            let two: HashSet<_> = [best[0].1, best[1].1].into_iter().collect();
            assert_eq!(two, [upper, lower].into_iter().collect(), "{w:?}");
        }
    }

    #[test]
    fn us_like_drops_grazing_points() {
        let ct = generate_ribcage(&RibcageParams::default()).unwrap().0;
        let us = generate_ribcage(&RibcageParams {
            modality: Modality::UsLike,
            ..Default::default()
        })
        .unwrap()
        .0;
        assert!(us.len() < ct.len());
        assert!(us.len() as f64 > 0.6 * ct.len() as f64);
    }
}
