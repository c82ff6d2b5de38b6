//! Dense non-rigid mapping from node correspondences, and trajectory
//! transfer through local rigid fits.

mod waypoints;

pub use waypoints::{
    generate_protocol_waypoints, transfer_trajectory, transfer_waypoint, Trajectory, TransferredWaypoint, Waypoint,
    PROTOCOL_CLUSTERS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{kabsch_fit, kabsch_fit_anchored, scatter_conditioning, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};
use crate::graph::{CorrespondenceSet, SkeletonGraph, UNREACHABLE};

/// Distance floor of the blend weights, mm.
pub const BLEND_EPSILON: f64 = 1e-6;

/// Second-to-first scatter eigenvalue ratio below which a neighbour set is
/// treated as collinear and enlarged.
pub const LOCAL_FIT_CONDITION: f64 = 0.05;

/// How nearby local transforms are blended at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Normalised inverse distance.
    #[default]
    Inverse,
    /// Normalised distance, `d_i / Σ d_j`.
    Literal,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(Weighting::Inverse),
            "literal" => Ok(Weighting::Literal),
            other => Err(Error::InvalidArgument(format!(
                "unknown weighting '{other}' (inverse|literal)"
            ))),
        }
    }
}

/// Per-node rigid transforms plus the node positions they are anchored at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTransformSet {
    pub transforms: Vec<RigidTransform>,
    /// Nodes used in each fit, the node itself first.
    pub neighbors: Vec<Vec<usize>>,
    /// Template-side node positions.
    pub anchors: Vec<Point3>,
}

impl LocalTransformSet {
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

/// Rigid transform per node fitted to the correspondences of its `n_reg`
/// geodesically nearest nodes (ties by Euclidean distance, then index).
/// Near-collinear sets grow by one node at a time, up to `n_reg + 3`; past
/// that the fit keeps `n_reg` nodes and takes its poorly constrained
/// rotation directions from the smallest well-conditioned enlargement.
pub fn local_transforms(pairs: &CorrespondenceSet, graph: &SkeletonGraph, n_reg: usize) -> Result<LocalTransformSet> {
    if n_reg < 3 {
        return Err(Error::InvalidArgument(format!("n_reg must be at least 3, got {n_reg}")));
    }
    if pairs.len() != graph.len() {
        return Err(Error::LengthMismatch {
            source_len: pairs.len(),
            target_len: graph.len(),
        });
    }
    let geo = graph.geodesic_distances(false);
    let ct = pairs.ct_positions();
    let us = pairs.us_positions();
    let results: Vec<Result<(RigidTransform, Vec<usize>)>> = (0..graph.len())
        .into_par_iter()
        .map(|i| {
            let mut order: Vec<usize> = (0..graph.len()).filter(|&j| geo.get(i, j) != UNREACHABLE).collect();
            order.sort_by(|&a, &b| {
                geo.get(i, a)
                    .cmp(&geo.get(i, b))
                    .then(
                        (ct[a] - ct[i])
                            .norm_squared()
                            .total_cmp(&(ct[b] - ct[i]).norm_squared()),
                    )
                    .then(a.cmp(&b))
            });
            let pick = |n: usize| -> (Vec<Point3>, Vec<Point3>) {
                (
                    order[..n].iter().map(|&j| ct[j]).collect(),
                    order[..n].iter().map(|&j| us[j]).collect(),
                )
            };
            let widest = (n_reg + 3).min(order.len());
            for n in n_reg..=widest {
                let (src, dst) = pick(n);
                if scatter_conditioning(&src) > LOCAL_FIT_CONDITION {
                    return Ok((kabsch_fit(&src, &dst)?, order[..n].to_vec()));
                }
            }
            // Still near-collinear: borrow the unconstrained rotation from
            // the smallest well-conditioned enlargement.
            let mut m = widest;
            while m < order.len() && scatter_conditioning(&pick(m).0) <= LOCAL_FIT_CONDITION {
                m += 1;
            }
            let (wide_src, wide_dst) = pick(m);
            let reference = kabsch_fit(&wide_src, &wide_dst)
                .map_err(|_| Error::DegenerateConfiguration(format!("node {i} lies on a collinear component")))?;
            let n = n_reg.min(order.len());
            let (src, dst) = pick(n);
            let t = kabsch_fit_anchored(&src, &dst, &reference.rotation, LOCAL_FIT_CONDITION)?;
            Ok((t, order[..n].to_vec()))
        })
        .collect();
    let mut transforms = Vec::with_capacity(graph.len());
    let mut neighbors = Vec::with_capacity(graph.len());
    for r in results {
        let (t, n) = r?;
        transforms.push(t);
        neighbors.push(n);
    }
    Ok(LocalTransformSet {
        transforms,
        neighbors,
        anchors: ct,
    })
}

/// The `n_blend` anchors nearest to `p` with their blend weights, which sum
/// to one. A point within [`BLEND_EPSILON`] of an anchor takes that anchor
/// alone.
pub fn blend_weights(p: &Point3, set: &LocalTransformSet, n_blend: usize, weighting: Weighting) -> Vec<(usize, f64)> {
    let n_blend = n_blend.clamp(1, set.len());
    let mut near: Vec<(f64, usize)> = Vec::with_capacity(n_blend + 1);
    for (i, a) in set.anchors.iter().enumerate() {
        let d = (a - p).norm();
        if near.len() < n_blend || d < near[near.len() - 1].0 {
            let at = near.partition_point(|&(e, _)| e <= d);
            near.insert(at, (d, i));
            near.truncate(n_blend);
        }
    }
    if near[0].0 < BLEND_EPSILON {
        return vec![(near[0].1, 1.0)];
    }
    let raw: Vec<f64> = match weighting {
        Weighting::Inverse => near.iter().map(|&(d, _)| 1.0 / d.max(BLEND_EPSILON)).collect(),
        Weighting::Literal => near.iter().map(|&(d, _)| d).collect(),
    };
    let total: f64 = raw.iter().sum();
    near.iter().zip(&raw).map(|(&(_, i), &w)| (i, w / total)).collect()
}

pub fn map_point(p: &Point3, set: &LocalTransformSet, n_blend: usize, weighting: Weighting) -> Point3 {
    let weights = blend_weights(p, set, n_blend, weighting);
    if let [(i, _)] = weights[..] {
        return set.transforms[i].apply(p);
    }
    let sum = weights.iter().fold(nalgebra::Vector3::zeros(), |acc, &(i, w)| {
        acc + set.transforms[i].apply(p).coords * w
    });
    Point3::from(sum)
}

pub fn map_cloud(cloud: &PointCloud, set: &LocalTransformSet, n_blend: usize, weighting: Weighting) -> PointCloud {
    PointCloud {
        points: cloud
            .points
            .par_iter()
            .map(|p| map_point(p, set, n_blend, weighting))
            .collect(),
        labels: cloud.labels.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::graph::{template_edges, NodeLayout};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn jittered_template(seed: u64) -> SkeletonGraph {
        let layout = NodeLayout::default();
        let params = crate::synthetic::RibcageParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions: Vec<Point3> = crate::synthetic::ideal_skeleton(&params, &layout)
            .into_iter()
            .map(|p| {
                p + Vec3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                )
            })
            .collect();
        let edges = template_edges(&layout, &positions);
        SkeletonGraph::new(positions, layout.parts(), edges).unwrap()
    }

    fn pairs_through(g: &SkeletonGraph, f: impl Fn(&Point3) -> Point3) -> CorrespondenceSet {
        let moved = g.with_positions(g.positions.iter().map(f).collect());
        CorrespondenceSet::from_graphs(g, &moved).unwrap()
    }

    #[test]
    fn identity_pairs_give_identity() {
        let g = jittered_template(1);
        let set = local_transforms(&pairs_through(&g, |p| *p), &g, 3).unwrap();
        for (i, t) in set.transforms.iter().enumerate() {
            assert!((t.rotation - nalgebra::Matrix3::identity()).norm() < 1e-9);
            assert!(t.translation.norm() < 1e-9);
            assert_eq!(set.neighbors[i][0], i);
            assert!(set.neighbors[i].len() >= 3);
        }
    }

    #[test]
    fn translation_pairs_give_translation() {
        let g = jittered_template(2);
        let t = Vec3::new(3.0, -1.0, 2.5);
        let set = local_transforms(&pairs_through(&g, |p| p + t), &g, 3).unwrap();
        for tr in &set.transforms {
            assert!((tr.rotation - nalgebra::Matrix3::identity()).norm() < 1e-9);
            assert!((tr.translation - t).norm() < 1e-9);
        }
    }

    #[test]
    fn global_rotation_is_recovered_per_node() {
        let g = jittered_template(3);
        let r = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.4, Vec3::new(1.0, 2.0, 3.0));
        let set = local_transforms(&pairs_through(&g, |p| r.apply(p)), &g, 3).unwrap();
        for tr in &set.transforms {
            assert!((tr.rotation - r.rotation).norm() < 1e-6);
        }
    }

    #[test]
    fn collinear_neighbourhoods_grow() {
        let layout = NodeLayout::default();
        let params = crate::synthetic::RibcageParams::default();
        let positions = crate::synthetic::ideal_skeleton(&params, &layout);
        let edges = template_edges(&layout, &positions);
        let g = SkeletonGraph::new(positions, layout.parts(), edges).unwrap();
        let set = local_transforms(&pairs_through(&g, |p| *p), &g, 3).unwrap();
        // Interior sternum nodes see their two row neighbours first.
        assert!(set.neighbors[layout.sternum_index(6, 2)].len() > 3);
    }

    #[test]
    fn single_blend_uses_nearest() {
        let g = jittered_template(4);
        let set = local_transforms(&pairs_through(&g, |p| p + Vec3::new(1.0, 0.0, 0.0)), &g, 3).unwrap();
        let p = g.positions[10] + Vec3::new(0.2, 0.1, 0.0);
        let w = blend_weights(&p, &set, 1, Weighting::Inverse);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].1, 1.0);
        assert_eq!(
            map_point(&p, &set, 1, Weighting::Inverse),
            set.transforms[w[0].0].apply(&p)
        );
    }

    #[test]
    fn weighting_parses() {
        assert_eq!("inverse".parse::<Weighting>().unwrap(), Weighting::Inverse);
        assert_eq!("literal".parse::<Weighting>().unwrap(), Weighting::Literal);
        assert!("cubic".parse::<Weighting>().is_err());
    }
}
