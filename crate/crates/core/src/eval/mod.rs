//! Rigid ICP baseline and the method comparison harness.

mod icp;
mod report;

pub use icp::{icp_rigid, icp_rigid_from, nearest_indices, IcpParams, IcpResult};
pub use report::{ErrorStats, EvalReport, Failure, MethodOutcome, SubjectReport};

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{hausdorff, PointCloud};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::nonrigid::{generate_protocol_waypoints, Trajectory};
use crate::pipeline::{run_coarse, run_graph, run_mapping, STAGE_COARSE, STAGE_TRANSFER};
use crate::synthetic::{build_fixture, FixtureSpec};

/// Registration methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Coarse overlay only.
    Coarse,
    /// Rigid ICP started from the coarse overlay.
    Icp,
    /// Skeleton-graph non-rigid registration.
    Graph,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Coarse => "coarse",
            Method::Icp => "icp",
            Method::Graph => "graph",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

/// What a method produced: the mapped template cloud and the carried
/// waypoints (one entry per input waypoint).
struct MethodRun {
    mapped: PointCloud,
    waypoints: Vec<Result<Point3>>,
}

fn run_method(
    method: Method,
    ct: &PointCloud,
    us: &PointCloud,
    waypoints: &Trajectory,
    config: &PipelineConfig,
    timer: &mut Timer,
) -> Result<MethodRun> {
    let coarse = timer.time(STAGE_COARSE, || run_coarse(ct, us, &config.coarse))?;
    let t = coarse.transform();
    let rigid_waypoints =
        |t: &crate::geometry::RigidTransform| waypoints.waypoints.iter().map(|w| Ok(t.apply(&w.position))).collect();
    match method {
        Method::Coarse => Ok(MethodRun {
            mapped: ct.transformed(&t),
            waypoints: rigid_waypoints(&t),
        }),
        Method::Icp => {
            let fit = timer
                .time("icp", || icp_rigid_from(ct, us, &t, &config.icp))
                .map_err(|e| e.at_stage("icp"))?;
            Ok(MethodRun {
                mapped: ct.transformed(&fit.transform),
                waypoints: rigid_waypoints(&fit.transform),
            })
        }
        Method::Graph => {
            let ct_aligned = ct.transformed(&t);
            let graph = timer.time("graph", || {
                run_graph(ct, &coarse.template, &t, &ct_aligned, us, &config.layout, &config.som)
            })?;
            let (_, mapped) = timer.time("mapping", || run_mapping(&graph, &ct_aligned, config))?;
            let transferred = timer.time(STAGE_TRANSFER, || {
                crate::pipeline::transfer_from_clouds(
                    &t,
                    waypoints,
                    &ct_aligned,
                    &mapped,
                    config.transfer.sphere_radius,
                )
            });
            Ok(MethodRun {
                mapped,
                waypoints: transferred
                    .into_iter()
                    .map(|r| r.map(|w| w.waypoint.position))
                    .collect(),
            })
        }
    }
}

fn failure_of(e: &Error) -> Failure {
    let stage = match e {
        Error::Stage { stage, .. } => stage.to_string(),
        _ => "setup".to_string(),
    };
    Failure {
        stage,
        message: e.root().to_string(),
    }
}

fn evaluate_method(
    method: Method,
    ct: &PointCloud,
    us: &PointCloud,
    waypoints: &Trajectory,
    truth: &[Point3],
    config: &PipelineConfig,
) -> MethodOutcome {
    let mut timer = Timer(BTreeMap::new());
    let mut outcome = MethodOutcome {
        method: method.name().to_string(),
        hausdorff: None,
        waypoint_errors: None,
        failures: Vec::new(),
        runtime_ms: BTreeMap::new(),
    };
    match run_method(method, ct, us, waypoints, config, &mut timer) {
        Ok(run) => {
            match timer.time("hausdorff", || hausdorff(&run.mapped, us)) {
                Ok(h) => outcome.hausdorff = Some(h),
                Err(e) => outcome.failures.push(failure_of(&e.at_stage("hausdorff"))),
            }
            let mut errors = Vec::with_capacity(truth.len());
            for (i, (r, t)) in run.waypoints.iter().zip(truth).enumerate() {
                match r {
                    Ok(p) => errors.push((p - t).norm()),
                    Err(e) => outcome.failures.push(Failure {
                        message: format!("waypoint {i}: {}", e.root()),
                        ..failure_of(e)
                    }),
                }
            }
            if errors.len() == truth.len() && !errors.is_empty() {
                outcome.waypoint_errors = Some(ErrorStats::new(errors));
            }
        }
        Err(e) => outcome.failures.push(failure_of(&e)),
    }
    outcome.runtime_ms = timer.0;
    outcome
}

/// Run every method on one template/target pair.
///
/// `us_waypoints_truth[i]` is where `ct_waypoints[i]` belongs in the target.
pub fn evaluate(
    ct: &PointCloud,
    us: &PointCloud,
    ct_waypoints: &Trajectory,
    us_waypoints_truth: &[Point3],
    methods: &[Method],
    config: &PipelineConfig,
) -> Result<SubjectReport> {
    if ct_waypoints.len() != us_waypoints_truth.len() {
        return Err(Error::LengthMismatch {
            source_len: ct_waypoints.len(),
            target_len: us_waypoints_truth.len(),
        });
    }
    let run = |m: &Method| evaluate_method(*m, ct, us, ct_waypoints, us_waypoints_truth, config);
    let outcomes = if config.eval.parallel {
        methods.par_iter().map(run).collect()
    } else {
        methods.iter().map(run).collect()
    };
    Ok(SubjectReport {
        subject: String::new(),
        methods: outcomes,
    })
}

/// Protocol waypoints on the template and their true target positions.
pub fn fixture_waypoints(fixture: &crate::synthetic::Fixture) -> Result<(Trajectory, Vec<Point3>)> {
    let waypoints = generate_protocol_waypoints(&fixture.ct)?;
    let truth = waypoints
        .waypoints
        .iter()
        .map(|w| fixture.to_target(&w.position))
        .collect();
    Ok((waypoints, truth))
}

fn evaluate_seed(seed: u64, config: &PipelineConfig) -> SubjectReport {
    let subject = format!("seed-{seed}");
    let spec = FixtureSpec {
        seed,
        ..config.fixture.clone()
    };
    let prepared = build_fixture(&spec).and_then(|f| fixture_waypoints(&f).map(|w| (f, w)));
    let report = prepared.and_then(|(f, (w, truth))| evaluate(&f.ct, &f.us, &w, &truth, &config.eval.methods, config));
    match report {
        Ok(r) => SubjectReport { subject, ..r },
        Err(e) => SubjectReport {
            subject,
            methods: config
                .eval
                .methods
                .iter()
                .map(|m| MethodOutcome {
                    method: m.name().to_string(),
                    hausdorff: None,
                    waypoint_errors: None,
                    failures: vec![Failure {
                        stage: "fixture".into(),
                        message: e.to_string(),
                    }],
                    runtime_ms: BTreeMap::new(),
                })
                .collect(),
        },
    }
}

/// Evaluate every configured method on one synthetic fixture per seed.
pub fn evaluate_fixtures(config: &PipelineConfig) -> Result<EvalReport> {
    config.validate()?;
    let subjects = if config.eval.parallel {
        config
            .eval
            .seeds
            .par_iter()
            .map(|&s| evaluate_seed(s, config))
            .collect()
    } else {
        config.eval.seeds.iter().map(|&s| evaluate_seed(s, config)).collect()
    };
    Ok(EvalReport {
        config: config.clone(),
        subjects,
    })
}
