use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cloud::{centroid, kabsch_fit, kmeans_cluster, PartLabel, PointCloud, Side, LEVELS};
use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Clusters per branch for levels 2..=5.
pub const PROTOCOL_CLUSTERS: [usize; 4] = [3, 3, 4, 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point3,
    pub side: Side,
    /// 1 between levels 2 and 3, 2 between 3 and 4, 3 between 4 and 5.
    pub intercostal_space: u8,
    /// Order along the space, from the sternum outward.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.waypoints.iter().map(|w| w.position).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,side,intercostal_space,order,x,y,z\n");
        for (i, w) in self.waypoints.iter().enumerate() {
            let p = w.position;
            writeln!(
                out,
                "{i},{},{},{},{},{},{}",
                w.side, w.intercostal_space, w.index, p.x, p.y, p.z
            )
            .expect("string write");
        }
        out
    }
}

/// Equal-part clustering of every branch; consecutive levels' matching
/// cluster centres are joined and the segment midpoints become waypoints.
pub fn generate_protocol_waypoints(cloud: &PointCloud) -> Result<Trajectory> {
    let labels = cloud
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("protocol waypoints need a labelled cloud".into()))?;
    let sternum: Vec<Point3> = cloud.points_with_label(PartLabel::Sternum);
    let anchor = centroid(&sternum)
        .or_else(|| cloud.centroid())
        .ok_or(Error::EmptyCloud)?;

    let mut out = Vec::new();
    for side in Side::BOTH {
        let mut centers: Vec<Vec<Point3>> = Vec::new();
        for level in LEVELS {
            let mut pts: Vec<Point3> = cloud
                .points
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == PartLabel::Cartilage { side, level })
                .map(|(p, _)| *p)
                .collect();
            let k = PROTOCOL_CLUSTERS[(level - 2) as usize];
            if pts.len() < k {
                return Err(Error::MissingBranch { side, level });
            }
            pts.sort_by(|a, b| (a - anchor).norm_squared().total_cmp(&(b - anchor).norm_squared()));
            let data: Vec<[f64; 3]> = pts.iter().map(|p| [p.x, p.y, p.z]).collect();
            let seeds: Vec<[f64; 3]> = (0..k).map(|j| data[(2 * j + 1) * data.len() / (2 * k)]).collect();
            let km = kmeans_cluster(&data, &seeds)?;
            let mut c: Vec<Point3> = km.centers.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect();
            c.sort_by(|a, b| (a - anchor).norm_squared().total_cmp(&(b - anchor).norm_squared()));
            centers.push(c);
        }
        for space in 1..=3u8 {
            let (upper, lower) = (&centers[space as usize - 1], &centers[space as usize]);
            for j in 0..upper.len().min(lower.len()) {
                out.push(Waypoint {
                    position: nalgebra::center(&upper[j], &lower[j]),
                    side,
                    intercostal_space: space,
                    index: j,
                });
            }
        }
    }
    Ok(Trajectory { waypoints: out })
}

/// Waypoint carried through the local rigid fit of its sphere region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferredWaypoint {
    pub waypoint: Waypoint,
    pub support: usize,
}

/// Rigid fit between the template points within `radius` of `w` and their
/// mapped images, applied to `w`. Returns the position and the support count.
pub fn transfer_waypoint(w: &Point3, template: &[Point3], mapped: &[Point3], radius: f64) -> Result<(Point3, usize)> {
    if template.len() != mapped.len() {
        return Err(Error::LengthMismatch {
            source_len: template.len(),
            target_len: mapped.len(),
        });
    }
    let r2 = radius * radius;
    let (src, dst): (Vec<Point3>, Vec<Point3>) = template
        .iter()
        .zip(mapped)
        .filter(|(p, _)| (*p - w).norm_squared() <= r2)
        .map(|(p, q)| (*p, *q))
        .unzip();
    if src.len() < 3 {
        return Err(Error::InsufficientSupport {
            count: src.len(),
            radius,
        });
    }
    let t = kabsch_fit(&src, &dst)?;
    Ok((t.apply(w), src.len()))
}

/// Transfer every waypoint; failures are reported per waypoint.
pub fn transfer_trajectory(
    trajectory: &Trajectory,
    template: &[Point3],
    mapped: &[Point3],
    radius: f64,
) -> Vec<Result<TransferredWaypoint>> {
    trajectory
        .waypoints
        .iter()
        .map(|w| {
            transfer_waypoint(&w.position, template, mapped, radius).map(|(position, support)| TransferredWaypoint {
                waypoint: Waypoint { position, ..*w },
                support,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RigidTransform, Vec3};
    use crate::synthetic::{generate_ribcage, RibcageParams};

    #[test]
    fn protocol_counts_and_neighbours() {
        let (cloud, _) = generate_ribcage(&RibcageParams::default()).unwrap();
        let traj = generate_protocol_waypoints(&cloud).unwrap();
        assert_eq!(traj.len(), 20);
        for side in Side::BOTH {
            let per_space: Vec<usize> = (1..=3)
                .map(|s| {
                    traj.waypoints
                        .iter()
                        .filter(|w| w.side == side && w.intercostal_space == s)
                        .count()
                })
                .collect();
            assert_eq!(per_space, vec![3, 3, 4]);
        }
        let labels = cloud.labels.as_ref().unwrap();
        for w in &traj.waypoints {
            let mut best: Vec<(f64, PartLabel)> = Vec::new();
            for side in Side::BOTH {
                for level in LEVELS {
                    let l = PartLabel::Cartilage { side, level };
                    let d = cloud
                        .points
                        .iter()
                        .zip(labels)
                        .filter(|(_, x)| **x == l)
                        .map(|(p, _)| (p - w.position).norm())
                        .fold(f64::INFINITY, f64::min);
                    best.push((d, l));
                }
            }
            best.sort_by(|a, b| a.0.total_cmp(&b.0));
            let expect = [
                PartLabel::Cartilage {
                    side: w.side,
                    level: w.intercostal_space + 1,
                },
                PartLabel::Cartilage {
                    side: w.side,
                    level: w.intercostal_space + 2,
                },
            ];
            assert!(
                expect.contains(&best[0].1) && expect.contains(&best[1].1),
                "{w:?} {:?}",
                &best[..2]
            );
        }
    }

    #[test]
    fn protocol_is_mirror_symmetric() {
        let (raw, _) = generate_ribcage(&RibcageParams::default()).unwrap();
        // Reflect the left half onto the right for an exactly symmetric cage.
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (p, l) in raw.points.iter().zip(raw.labels.as_ref().unwrap()) {
            let keep = match l {
                PartLabel::Sternum => p.x > 0.0,
                PartLabel::Cartilage { side, .. } => *side == Side::Left,
                PartLabel::Unassigned => false,
            };
            if !keep {
                continue;
            }
            let mirrored = match l {
                PartLabel::Cartilage { level, .. } => PartLabel::Cartilage {
                    side: Side::Right,
                    level: *level,
                },
                other => *other,
            };
            points.push(*p);
            labels.push(*l);
            points.push(Point3::new(-p.x, p.y, p.z));
            labels.push(mirrored);
        }
        let cloud = PointCloud::with_labels(points, labels).unwrap();
        let traj = generate_protocol_waypoints(&cloud).unwrap();
        for w in traj.waypoints.iter().filter(|w| w.side == Side::Left) {
            let m = traj
                .waypoints
                .iter()
                .find(|v| v.side == Side::Right && v.intercostal_space == w.intercostal_space && v.index == w.index)
                .unwrap();
            let mirrored = Point3::new(-m.position.x, m.position.y, m.position.z);
            assert!((mirrored - w.position).norm() < 2.0, "{w:?} {m:?}");
        }
    }

    #[test]
    fn transfer_identity_and_rigid() {
        let (cloud, _) = generate_ribcage(&RibcageParams::default()).unwrap();
        let w = cloud.points[100] + Vec3::new(1.0, 1.0, 1.0);
        let (same, support) = transfer_waypoint(&w, &cloud.points, &cloud.points, 20.0).unwrap();
        assert!((same - w).norm() < 1e-9);
        assert!(support >= 3);
        let t = RigidTransform::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), 0.7, Vec3::new(5.0, -4.0, 2.0));
        let moved: Vec<Point3> = cloud.points.iter().map(|p| t.apply(p)).collect();
        let (out, _) = transfer_waypoint(&w, &cloud.points, &moved, 20.0).unwrap();
        assert!((out - t.apply(&w)).norm() < 1e-6);
    }

    #[test]
    fn sparse_sphere_reports_count() {
        let pts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(100.0, 0.0, 0.0),
        ];
        match transfer_waypoint(&Point3::origin(), &pts, &pts, 20.0) {
            Err(Error::InsufficientSupport { count, .. }) => assert_eq!(count, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (cloud, _) = generate_ribcage(&RibcageParams::default()).unwrap();
        let traj = generate_protocol_waypoints(&cloud).unwrap();
        let csv = traj.to_csv();
        assert_eq!(csv.lines().count(), 21);
        assert_eq!(Trajectory::from_json(&traj.to_json().unwrap()).unwrap(), traj);
    }
}
