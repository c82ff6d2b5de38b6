use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeodesicTable, SkeletonGraph, UNREACHABLE};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SomSchedule {
    pub phase1_epochs: usize,
    pub phase1_learning_rate: f64,
    pub phase2_epochs: usize,
    pub phase2_learning_rate: f64,
    /// Neighbourhood radius in hops at the first epoch; decays linearly to 1
    /// at the last.
    pub neighborhood_radius: f64,
    pub rng_seed: u64,
}

impl Default for SomSchedule {
    fn default() -> Self {
        Self {
            phase1_epochs: 3,
            phase1_learning_rate: 0.02,
            phase2_epochs: 10,
            phase2_learning_rate: 0.1,
            neighborhood_radius: 2.0,
            rng_seed: 7,
        }
    }
}

impl SomSchedule {
    pub fn validate(&self) -> Result<()> {
        for (field, lr) in [
            ("som.phase1_learning_rate", self.phase1_learning_rate),
            ("som.phase2_learning_rate", self.phase2_learning_rate),
        ] {
            if !(lr > 0.0 && lr <= 1.0) {
                return Err(Error::config(
                    field,
                    format!("learning rate must lie in (0, 1], got {lr}"),
                ));
            }
        }
        if self.phase1_epochs + self.phase2_epochs == 0 {
            return Err(Error::config("som.phase2_epochs", "at least one epoch is required"));
        }
        if !(self.neighborhood_radius.is_finite() && self.neighborhood_radius >= 1.0) {
            return Err(Error::config(
                "som.neighborhood_radius",
                "radius must be at least one hop",
            ));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.phase1_epochs + self.phase2_epochs
    }

    pub fn radius_at(&self, epoch: usize) -> f64 {
        let total = self.total_epochs();
        if total <= 1 {
            return self.neighborhood_radius;
        }
        let t = epoch as f64 / (total - 1) as f64;
        self.neighborhood_radius + (1.0 - self.neighborhood_radius) * t
    }

    pub fn phase_at(&self, epoch: usize) -> SomPhase {
        if epoch < self.phase1_epochs {
            SomPhase::Directed
        } else {
            SomPhase::Undirected
        }
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.phase_at(epoch) {
            SomPhase::Directed => self.phase1_learning_rate,
            SomPhase::Undirected => self.phase2_learning_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SomPhase {
    Directed,
    Undirected,
}

/// Neighbourhood weight of a node `hops` away from the best matching unit.
pub fn neighborhood_weight(hops: u32, radius: f64) -> f64 {
    let g = hops as f64;
    let sigma = radius / 2.0;
    (-(g * g) / (2.0 * sigma * sigma)).exp()
}

/// Index of the node nearest to `sample`, lowest index on ties.
pub fn best_matching_unit(positions: &[Point3], sample: &Point3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, w) in positions.iter().enumerate() {
        let d = (w - sample).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// One SOM update. Every node within `radius` hops of the best matching unit
/// (as measured by `geodesic`) moves toward `sample`; returns the BMU.
pub fn som_step(graph: &mut SkeletonGraph, geodesic: &GeodesicTable, sample: &Point3, lr: f64, radius: f64) -> usize {
    let bmu = best_matching_unit(&graph.positions, sample);
    for (j, w) in graph.positions.iter_mut().enumerate() {
        let g = geodesic.get(bmu, j);
        if g == UNREACHABLE || g as f64 > radius {
            continue;
        }
        let f = neighborhood_weight(g, radius) * lr;
        *w += (sample - *w) * f;
    }
    bmu
}

/// What the fit reports after every update.
pub struct StepInfo<'a> {
    pub epoch: usize,
    pub phase: SomPhase,
    pub sample_index: usize,
    pub bmu: usize,
    pub radius: f64,
    pub learning_rate: f64,
    /// Hops from the BMU to every node under the active edge directions.
    pub hops: &'a [u32],
}

impl StepInfo<'_> {
    /// Nodes moved by this update.
    pub fn recipients(&self) -> impl Iterator<Item = usize> + '_ {
        self.hops
            .iter()
            .enumerate()
            .filter(|(_, &g)| g != UNREACHABLE && g as f64 <= self.radius)
            .map(|(j, _)| j)
    }
}

pub trait SomObserver {
    fn on_step(&mut self, _info: &StepInfo<'_>) {}
    fn on_epoch_end(&mut self, _epoch: usize, _phase: SomPhase, _graph: &SkeletonGraph) {}
}

impl SomObserver for () {}

pub fn som_fit(graph: &SkeletonGraph, cloud: &PointCloud, schedule: &SomSchedule) -> Result<SkeletonGraph> {
    som_fit_observed(graph, cloud, schedule, &mut ())
}

/// Two-phase fit: directed geodesics with the small rate first, then the
/// undirected graph with the larger rate.
pub fn som_fit_observed(
    graph: &SkeletonGraph,
    cloud: &PointCloud,
    schedule: &SomSchedule,
    observer: &mut dyn SomObserver,
) -> Result<SkeletonGraph> {
    cloud.ensure_non_empty()?;
    schedule.validate()?;
    let directed = graph.geodesic_distances(true);
    let undirected = graph.geodesic_distances(false);
    let mut g = graph.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.rng_seed);
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    for epoch in 0..schedule.total_epochs() {
        let phase = schedule.phase_at(epoch);
        let table = match phase {
            SomPhase::Directed => &directed,
            SomPhase::Undirected => &undirected,
        };
        let lr = schedule.learning_rate_at(epoch);
        let radius = schedule.radius_at(epoch);
        order.shuffle(&mut rng);
        for &i in &order {
            let bmu = som_step(&mut g, table, &cloud.points[i], lr, radius);
            observer.on_step(&StepInfo {
                epoch,
                phase,
                sample_index: i,
                bmu,
                radius,
                learning_rate: lr,
                hops: table.row(bmu),
            });
        }
        observer.on_epoch_end(epoch, phase, &g);
    }
    Ok(g)
}

/// Mean distance from each cloud point to its nearest node.
pub fn quantization_error(graph: &SkeletonGraph, cloud: &PointCloud) -> f64 {
    let total: f64 = cloud
        .points
        .iter()
        .map(|p| {
            graph
                .positions
                .iter()
                .map(|w| (w - p).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / cloud.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePair {
    pub ct: Point3,
    pub us: Point3,
}

/// Positions of each numbered node in the two fitted graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<NodePair>,
}

impl CorrespondenceSet {
    pub fn from_graphs(g_ct: &SkeletonGraph, g_us: &SkeletonGraph) -> Result<Self> {
        if g_ct.len() != g_us.len() {
            return Err(Error::LengthMismatch {
                source_len: g_ct.len(),
                target_len: g_us.len(),
            });
        }
        Ok(Self {
            pairs: g_ct
                .positions
                .iter()
                .zip(&g_us.positions)
                .map(|(a, b)| NodePair { ct: *a, us: *b })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ct_positions(&self) -> Vec<Point3> {
        self.pairs.iter().map(|p| p.ct).collect()
    }

    pub fn us_positions(&self) -> Vec<Point3> {
        self.pairs.iter().map(|p| p.us).collect()
    }
}

/// Fit the template to the template cloud, then refit that result once to
/// each cloud with the same schedule, so both graphs see identical
/// processing; nodes pair by index.
pub fn fit_pair(
    template: &SkeletonGraph,
    ct: &PointCloud,
    us: &PointCloud,
    schedule: &SomSchedule,
) -> Result<(SkeletonGraph, SkeletonGraph, CorrespondenceSet)> {
    let first = som_fit(template, ct, schedule)?;
    let g_ct = som_fit(&first, ct, schedule)?;
    let g_us = som_fit(&first, us, schedule)?;
    let pairs = CorrespondenceSet::from_graphs(&g_ct, &g_us)?;
    Ok((g_ct, g_us, pairs))
}
