//! The registration pipeline as a sequence of stages, each returning the
//! artifacts the next one consumes.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::coarse::{coarse_align, CoarseAlignment, CoarseAnalysis, CoarseConfig};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};
use crate::graph::{build_template_graph, fit_pair, CorrespondenceSet, NodeLayout, SkeletonGraph, SomSchedule};
use crate::nonrigid::{
    local_transforms, map_cloud, transfer_trajectory, LocalTransformSet, Trajectory, TransferredWaypoint,
};

pub const STAGE_COARSE: &str = "coarse";
pub const STAGE_GRAPH: &str = "graph";
pub const STAGE_MAPPING: &str = "mapping";
pub const STAGE_TRANSFER: &str = "transfer";

/// Front-view analyses of both clouds and the rigid overlay between them.
#[derive(Debug, Clone)]
pub struct CoarseStage {
    pub template: CoarseAnalysis,
    pub target: CoarseAnalysis,
    pub alignment: CoarseAlignment,
}

impl CoarseStage {
    pub fn transform(&self) -> RigidTransform {
        self.alignment.transform
    }

    pub fn summary(&self) -> CoarseSummary {
        CoarseSummary {
            transform: self.alignment.transform,
            template_pose: self.template.pose,
            target_pose: self.target.pose,
            template_boundaries: [self.template.boundaries.negative, self.template.boundaries.positive],
            target_boundaries: [self.target.boundaries.negative, self.target.boundaries.positive],
            alignment: self.alignment.clone(),
        }
    }
}

/// Serializable record of the coarse stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseSummary {
    pub transform: RigidTransform,
    pub template_pose: crate::coarse::SternumPose,
    pub target_pose: crate::coarse::SternumPose,
    /// Signed sternum boundary offsets across the sternum, mm.
    pub template_boundaries: [f64; 2],
    pub target_boundaries: [f64; 2],
    pub alignment: CoarseAlignment,
}

pub fn run_coarse(ct: &PointCloud, us: &PointCloud, config: &CoarseConfig) -> Result<CoarseStage> {
    let run = || -> Result<CoarseStage> {
        let template = CoarseAnalysis::run(ct, config)?;
        let target = CoarseAnalysis::run(us, config)?;
        let alignment = coarse_align(ct, &template, us, &target)?;
        Ok(CoarseStage {
            template,
            target,
            alignment,
        })
    };
    run().map_err(|e| e.at_stage(STAGE_COARSE))
}

/// Template skeleton in target space and its fits to both clouds.
#[derive(Debug, Clone)]
pub struct GraphStage {
    pub template: SkeletonGraph,
    pub g_ct: SkeletonGraph,
    pub g_us: SkeletonGraph,
    pub pairs: CorrespondenceSet,
}

/// Build the template from the template cloud's segmentation, carry it
/// through `transform`, and fit it to the aligned template and the target.
pub fn run_graph(
    ct: &PointCloud,
    analysis: &CoarseAnalysis,
    transform: &RigidTransform,
    ct_aligned: &PointCloud,
    us: &PointCloud,
    layout: &NodeLayout,
    som: &SomSchedule,
) -> Result<GraphStage> {
    let run = || -> Result<GraphStage> {
        let raw = build_template_graph(ct, analysis, layout)?;
        let template = raw.with_positions(raw.positions.iter().map(|p| transform.apply(p)).collect());
        let (g_ct, g_us, pairs) = fit_pair(&template, ct_aligned, us, som)?;
        Ok(GraphStage {
            template,
            g_ct,
            g_us,
            pairs,
        })
    };
    run().map_err(|e| e.at_stage(STAGE_GRAPH))
}

/// Everything a registration run produces.
#[derive(Debug, Clone)]
pub struct Registration {
    pub coarse: CoarseStage,
    /// Template cloud after the coarse transform.
    pub ct_aligned: PointCloud,
    pub graph: GraphStage,
    pub transforms: LocalTransformSet,
    /// `ct_aligned` after the non-rigid map, index-aligned with it.
    pub mapped: PointCloud,
}

impl Registration {
    /// Carry template-space waypoints into target space.
    pub fn transfer(&self, trajectory: &Trajectory, radius: f64) -> Vec<Result<TransferredWaypoint>> {
        transfer_from_clouds(
            &self.coarse.transform(),
            trajectory,
            &self.ct_aligned,
            &self.mapped,
            radius,
        )
    }
}

/// Waypoint transfer given only the stage outputs stored on disk.
pub fn transfer_from_clouds(
    coarse: &RigidTransform,
    trajectory: &Trajectory,
    ct_aligned: &PointCloud,
    mapped: &PointCloud,
    radius: f64,
) -> Vec<Result<TransferredWaypoint>> {
    let mut aligned = trajectory.clone();
    for w in &mut aligned.waypoints {
        w.position = coarse.apply(&w.position);
    }
    transfer_trajectory(&aligned, &ct_aligned.points, &mapped.points, radius)
        .into_iter()
        .map(|r| r.map_err(|e| e.at_stage(STAGE_TRANSFER)))
        .collect()
}

pub fn run_mapping(
    graph: &GraphStage,
    ct_aligned: &PointCloud,
    config: &PipelineConfig,
) -> Result<(LocalTransformSet, PointCloud)> {
    let r = &config.registration;
    let transforms = local_transforms(&graph.pairs, &graph.g_ct, r.n_reg).map_err(|e| e.at_stage(STAGE_MAPPING))?;
    let mapped = map_cloud(ct_aligned, &transforms, r.n_blend, r.weighting);
    Ok((transforms, mapped))
}

/// Coarse alignment, graph fitting and dense mapping of `ct` onto `us`.
pub fn register(ct: &PointCloud, us: &PointCloud, config: &PipelineConfig) -> Result<Registration> {
    config.validate()?;
    let coarse = run_coarse(ct, us, &config.coarse)?;
    let ct_aligned = ct.transformed(&coarse.transform());
    let graph = run_graph(
        ct,
        &coarse.template,
        &coarse.transform(),
        &ct_aligned,
        us,
        &config.layout,
        &config.som,
    )?;
    let (transforms, mapped) = run_mapping(&graph, &ct_aligned, config)?;
    Ok(Registration {
        coarse,
        ct_aligned,
        graph,
        transforms,
        mapped,
    })
}

/// Positions of successfully transferred waypoints, or the first failure.
pub fn transferred_positions(results: &[Result<TransferredWaypoint>]) -> Result<Vec<Point3>> {
    results
        .iter()
        .map(|r| match r {
            Ok(t) => Ok(t.waypoint.position),
            Err(e) => Err(Error::InvalidArgument(e.to_string())),
        })
        .collect()
}
