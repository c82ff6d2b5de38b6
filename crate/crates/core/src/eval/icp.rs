use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{kabsch_fit, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// Slack allowed on the non-increasing RMS check, relative to the RMS.
const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Stop once the RMS improves by less than this, mm.
    pub tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::config("icp.max_iter", "must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::config("icp.tol", format!("must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub iterations: usize,
    /// Nearest-neighbour RMS before the first fit and after every iteration.
    pub rms_history: Vec<f64>,
    pub converged: bool,
}

/// Index of the nearest target point for every source point, exact.
pub fn nearest_indices(source: &[Point3], target: &[Point3]) -> Vec<usize> {
    source
        .par_iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0usize);
            for (j, q) in target.iter().enumerate() {
                let d = (p - q).norm_squared();
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect()
}

fn matched_rms(moved: &[Point3], target: &[Point3], nn: &[usize]) -> f64 {
    let sum: f64 = moved.iter().zip(nn).map(|(p, &j)| (p - target[j]).norm_squared()).sum();
    (sum / moved.len() as f64).sqrt()
}

/// Point-to-point ICP from the identity.
pub fn icp_rigid(source: &PointCloud, target: &PointCloud, params: &IcpParams) -> Result<IcpResult> {
    icp_rigid_from(source, target, &RigidTransform::identity(), params)
}

/// Point-to-point ICP starting at `initial`.
///
/// # Panics
///
/// If the matched RMS ever increases, which would mean a broken fit.
pub fn icp_rigid_from(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    params.validate()?;
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "icp needs at least 3 points per cloud, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    let mut transform = *initial;
    let mut moved: Vec<Point3> = source.points.iter().map(|p| transform.apply(p)).collect();
    let mut nn = nearest_indices(&moved, &target.points);
    let mut rms = matched_rms(&moved, &target.points, &nn);
    let mut history = vec![rms];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let matched: Vec<Point3> = nn.iter().map(|&j| target.points[j]).collect();
        transform = kabsch_fit(&source.points, &matched)?;
        moved = source.points.iter().map(|p| transform.apply(p)).collect();
        nn = nearest_indices(&moved, &target.points);
        let next = matched_rms(&moved, &target.points, &nn);
        assert!(
            next <= rms * (1.0 + MONOTONE_SLACK) + MONOTONE_SLACK,
            "icp rms increased from {rms} to {next}"
        );
        history.push(next);
        let gain = rms - next;
        rms = next;
        if gain < params.tol {
            converged = true;
            break;
        }
    }
    Ok(IcpResult {
        transform,
        iterations,
        rms_history: history,
        converged,
    })
}
