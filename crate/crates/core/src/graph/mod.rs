//! Numbered skeleton graph of the rib cage and its geodesic SOM fit.

mod som;

pub use som::{
    best_matching_unit, fit_pair, neighborhood_weight, quantization_error, som_fit, som_fit_observed, som_step,
    CorrespondenceSet, NodePair, SomObserver, SomPhase, SomSchedule, StepInfo,
};

use std::collections::VecDeque;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{centroid, PartLabel, PointCloud, Side, LEVELS};
use crate::coarse::CoarseAnalysis;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

/// Node count of the default skeleton template.
pub const TEMPLATE_NODE_COUNT: usize = 245;

/// How many nodes each part of the skeleton receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeLayout {
    /// Rows along the sternum's long axis.
    pub sternum_rows: usize,
    /// Columns across the sternum.
    pub sternum_cols: usize,
    /// Nodes per rail for levels 2..=5; each branch has two rails.
    pub chain_lengths: [usize; 4],
}

impl Default for NodeLayout {
    fn default() -> Self {
        Self {
            sternum_rows: 13,
            sternum_cols: 5,
            chain_lengths: [9, 11, 12, 13],
        }
    }
}

impl NodeLayout {
    pub fn sternum_nodes(&self) -> usize {
        self.sternum_rows * self.sternum_cols
    }

    pub fn total(&self) -> usize {
        self.sternum_nodes() + 2 * 2 * self.chain_lengths.iter().sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sternum_rows < 2 || self.sternum_cols < 2 {
            return Err(Error::config(
                "layout.sternum_rows",
                "the sternum grid needs at least 2 × 2 nodes",
            ));
        }
        if self.chain_lengths.iter().any(|&n| n < 2) {
            return Err(Error::config(
                "layout.chain_lengths",
                "every rail needs at least 2 nodes",
            ));
        }
        if self.total() != TEMPLATE_NODE_COUNT {
            return Err(Error::config(
                "layout",
                format!(
                    "node allocation sums to {}, expected {TEMPLATE_NODE_COUNT}",
                    self.total()
                ),
            ));
        }
        Ok(())
    }

    pub fn sternum_index(&self, row: usize, col: usize) -> usize {
        row * self.sternum_cols + col
    }

    /// First index of the given branch; nodes follow as `2 * k + rail`.
    pub fn branch_base(&self, side: Side, level: u8) -> usize {
        let li = (level - 2) as usize;
        let per_side: usize = 2 * self.chain_lengths.iter().sum::<usize>();
        let side_offset = match side {
            Side::Left => 0,
            Side::Right => per_side,
        };
        self.sternum_nodes() + side_offset + 2 * self.chain_lengths[..li].iter().sum::<usize>()
    }

    pub fn branch_index(&self, side: Side, level: u8, k: usize, rail: usize) -> usize {
        self.branch_base(side, level) + 2 * k + rail
    }

    /// Part of every node in index order.
    pub fn parts(&self) -> Vec<NodePart> {
        let mut parts = Vec::with_capacity(self.total());
        for row in 0..self.sternum_rows {
            for col in 0..self.sternum_cols {
                parts.push(NodePart::Sternum { row, col });
            }
        }
        for side in Side::BOTH {
            for level in LEVELS {
                for index in 0..self.chain_lengths[(level - 2) as usize] {
                    for rail in 0..2 {
                        parts.push(NodePart::Branch {
                            side,
                            level,
                            index,
                            rail,
                        });
                    }
                }
            }
        }
        parts
    }
}

/// Anatomical role of a node. Sternum rows run inferior to superior, columns
/// from the patient's right to left. Branch `index` counts outward from the
/// sternum; rail 0 is the superior rail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodePart {
    Sternum {
        row: usize,
        col: usize,
    },
    Branch {
        side: Side,
        level: u8,
        index: usize,
        rail: usize,
    },
}

impl NodePart {
    pub fn label(&self) -> PartLabel {
        match *self {
            NodePart::Sternum { .. } => PartLabel::Sternum,
            NodePart::Branch { side, level, .. } => PartLabel::Cartilage { side, level },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Traversable only from `from` to `to` while directions are respected.
    pub directed: bool,
}

/// Hop value for pairs with no connecting path.
pub const UNREACHABLE: u32 = u32::MAX;

/// All-pairs hop distances, row-major by source node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeodesicTable {
    n: usize,
    hops: Vec<u32>,
}

impl GeodesicTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Hops from `from` to `to`, [`UNREACHABLE`] when no path exists.
    pub fn get(&self, from: usize, to: usize) -> u32 {
        self.hops[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[u32] {
        &self.hops[from * self.n..(from + 1) * self.n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonGraph {
    pub positions: Vec<Point3>,
    pub parts: Vec<NodePart>,
    pub edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    part: NodePart,
    xyz: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    nodes: Vec<NodeRecord>,
    edges: Vec<Edge>,
}

impl SkeletonGraph {
    pub fn new(positions: Vec<Point3>, parts: Vec<NodePart>, edges: Vec<Edge>) -> Result<Self> {
        if positions.len() != parts.len() {
            return Err(Error::LengthMismatch {
                source_len: positions.len(),
                target_len: parts.len(),
            });
        }
        if let Some(e) = edges
            .iter()
            .find(|e| e.from >= positions.len() || e.to >= positions.len() || e.from == e.to)
        {
            return Err(Error::InvalidArgument(format!(
                "edge {} -> {} is out of range or a loop",
                e.from, e.to
            )));
        }
        Ok(Self {
            positions,
            parts,
            edges,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn with_positions(&self, positions: Vec<Point3>) -> Self {
        assert_eq!(positions.len(), self.len());
        Self {
            positions,
            parts: self.parts.clone(),
            edges: self.edges.clone(),
        }
    }

    /// Adjacency lists; directed edges contribute only their forward arc
    /// when `respect_directions` is set.
    pub fn adjacency(&self, respect_directions: bool) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for e in &self.edges {
            adj[e.from].push(e.to);
            if !(e.directed && respect_directions) {
                adj[e.to].push(e.from);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    pub fn geodesic_distances(&self, respect_directions: bool) -> GeodesicTable {
        let adj = self.adjacency(respect_directions);
        let n = self.len();
        let rows: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|s| {
                let mut dist = vec![UNREACHABLE; n];
                dist[s] = 0;
                let mut queue = VecDeque::from([s]);
                while let Some(u) = queue.pop_front() {
                    for &v in &adj[u] {
                        if dist[v] == UNREACHABLE {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                dist
            })
            .collect();
        GeodesicTable { n, hops: rows.concat() }
    }

    pub fn is_connected_undirected(&self) -> bool {
        self.is_empty() || self.geodesic_distances(false).row(0).iter().all(|&d| d != UNREACHABLE)
    }

    pub fn to_json(&self) -> Result<String> {
        let record = GraphRecord {
            nodes: self
                .positions
                .iter()
                .zip(&self.parts)
                .enumerate()
                .map(|(id, (p, part))| NodeRecord {
                    id,
                    part: *part,
                    xyz: [p.x, p.y, p.z],
                })
                .collect(),
            edges: self.edges.clone(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: GraphRecord = serde_json::from_str(text)?;
        if let Some((i, n)) = record.nodes.iter().enumerate().find(|(i, n)| n.id != *i) {
            return Err(Error::InvalidArgument(format!("node {i} carries id {}", n.id)));
        }
        let positions = record
            .nodes
            .iter()
            .map(|n| Point3::new(n.xyz[0], n.xyz[1], n.xyz[2]))
            .collect();
        let parts = record.nodes.iter().map(|n| n.part).collect();
        Self::new(positions, parts, record.edges)
    }
}

/// Edges of the layout's topology: sternum grid, two rails per branch joined
/// by rungs, and branch roots attached to the nearest sternum-edge node.
/// Rungs of levels 4 and 5 point from the inferior rail to the superior one.
pub fn template_edges(layout: &NodeLayout, positions: &[Point3]) -> Vec<Edge> {
    let both = |from, to| Edge {
        from,
        to,
        directed: false,
    };
    let mut edges = Vec::new();
    for row in 0..layout.sternum_rows {
        for col in 0..layout.sternum_cols {
            let i = layout.sternum_index(row, col);
            if col + 1 < layout.sternum_cols {
                edges.push(both(i, layout.sternum_index(row, col + 1)));
            }
            if row + 1 < layout.sternum_rows {
                edges.push(both(i, layout.sternum_index(row + 1, col)));
            }
        }
    }
    for side in Side::BOTH {
        let edge_col = match side {
            Side::Left => layout.sternum_cols - 1,
            Side::Right => 0,
        };
        for level in LEVELS {
            let n = layout.chain_lengths[(level - 2) as usize];
            let directed = level >= 4;
            for k in 0..n {
                let upper = layout.branch_index(side, level, k, 0);
                let lower = layout.branch_index(side, level, k, 1);
                edges.push(Edge {
                    from: lower,
                    to: upper,
                    directed,
                });
                if k + 1 < n {
                    edges.push(both(upper, layout.branch_index(side, level, k + 1, 0)));
                    edges.push(both(lower, layout.branch_index(side, level, k + 1, 1)));
                }
            }
            for rail in 0..2 {
                let root = layout.branch_index(side, level, 0, rail);
                let anchor = (0..layout.sternum_rows)
                    .map(|row| layout.sternum_index(row, edge_col))
                    .min_by(|&a, &b| {
                        let da = (positions[a] - positions[root]).norm_squared();
                        let db = (positions[b] - positions[root]).norm_squared();
                        da.total_cmp(&db).then(a.cmp(&b))
                    })
                    .expect("sternum has rows");
                edges.push(both(anchor, root));
            }
        }
    }
    edges
}

/// Initial template graph placed on a segmented cloud.
///
/// Sternum nodes sit on a regular grid inside the detected sternum
/// rectangle; each branch is cut into equal-count slices ordered outward from
/// the sternum, and the superior and inferior halves of every slice give the
/// two rail nodes.
pub fn build_template_graph(
    cloud: &PointCloud,
    analysis: &CoarseAnalysis,
    layout: &NodeLayout,
) -> Result<SkeletonGraph> {
    layout.validate()?;
    let seg = &analysis.segmentation;
    if seg.labels.len() != cloud.len() {
        return Err(Error::LabelCount {
            points: cloud.len(),
            labels: seg.labels.len(),
        });
    }
    let plane = &analysis.plane;
    let up2 = seg.up2d;
    let left2 = seg.left2d();
    let up3 = plane.direction(&up2).normalize();
    let (w, h) = (analysis.boundaries.width(), analysis.pose.rect.height);

    let local = |p: &nalgebra::Point2<f64>| {
        let d = p - seg.center2d;
        Vector2::new(d.dot(&left2), d.dot(&up2))
    };
    let mut positions = Vec::with_capacity(layout.total());

    let (rows, cols) = (layout.sternum_rows, layout.sternum_cols);
    let mut cell_depth = vec![(0.0, 0usize); rows * cols];
    let mut all_depth = (0.0, 0usize);
    for (i, label) in seg.labels.iter().enumerate() {
        if *label != PartLabel::Sternum {
            continue;
        }
        let q = local(&plane.points2d[i]);
        let col = ((q.x + w / 2.0) / w * cols as f64).floor();
        let row = ((q.y + h / 2.0) / h * rows as f64).floor();
        all_depth.0 += plane.depths[i];
        all_depth.1 += 1;
        if (0.0..cols as f64).contains(&col) && (0.0..rows as f64).contains(&row) {
            let c = &mut cell_depth[row as usize * cols + col as usize];
            c.0 += plane.depths[i];
            c.1 += 1;
        }
    }
    if all_depth.1 == 0 {
        return Err(Error::DegenerateConfiguration("no points labelled sternum".into()));
    }
    let mean_depth = all_depth.0 / all_depth.1 as f64;
    for row in 0..rows {
        for col in 0..cols {
            let x = -w / 2.0 + (col as f64 + 0.5) * w / cols as f64;
            let y = -h / 2.0 + (row as f64 + 0.5) * h / rows as f64;
            let p2 = seg.center2d + left2 * x + up2 * y;
            let (sum, n) = cell_depth[row * cols + col];
            let depth = if n > 0 { sum / n as f64 } else { mean_depth };
            positions.push(plane.lift(&p2, depth));
        }
    }

    for side in Side::BOTH {
        let outward = match side {
            Side::Left => 1.0,
            Side::Right => -1.0,
        };
        for level in LEVELS {
            let label = PartLabel::Cartilage { side, level };
            let mut members: Vec<(f64, Point3)> = seg
                .labels
                .iter()
                .enumerate()
                .filter(|(_, l)| **l == label)
                .map(|(i, _)| (outward * local(&plane.points2d[i]).x, cloud.points[i]))
                .collect();
            let n = layout.chain_lengths[(level - 2) as usize];
            if members.len() < 2 * n {
                return Err(Error::MissingBranch { side, level });
            }
            members.sort_by(|a, b| a.0.total_cmp(&b.0));
            let slices: Vec<&[(f64, Point3)]> = (0..n)
                .map(|k| &members[k * members.len() / n..(k + 1) * members.len() / n])
                .collect();
            let centers: Vec<Point3> = slices
                .iter()
                .map(|s| centroid(&s.iter().map(|m| m.1).collect::<Vec<_>>()).expect("non-empty slice"))
                .collect();
            for k in 0..n {
                let tangent: Vec3 = centers[(k + 1).min(n - 1)] - centers[k.saturating_sub(1)];
                let t = tangent.normalize();
                let mut up_perp = up3 - t * up3.dot(&t);
                up_perp.normalize_mut();
                let (mut hi, mut lo) = (Vec::new(), Vec::new());
                for (_, p) in slices[k] {
                    if (p - centers[k]).dot(&up_perp) >= 0.0 {
                        hi.push(*p);
                    } else {
                        lo.push(*p);
                    }
                }
                positions.push(centroid(&hi).unwrap_or(centers[k] + up_perp));
                positions.push(centroid(&lo).unwrap_or(centers[k] - up_perp));
            }
        }
    }
    let edges = template_edges(layout, &positions);
    SkeletonGraph::new(positions, layout.parts(), edges)
}
