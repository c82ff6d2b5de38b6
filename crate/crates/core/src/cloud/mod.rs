//! Labeled point clouds and the geometric primitives shared by every stage.

mod io;
mod kabsch;
mod kmeans;
mod metrics;
mod pca;

pub use io::{load_point_cloud, save_point_cloud, CloudFormat};
pub use kabsch::{
    kabsch_fit, kabsch_fit_anchored, kabsch_fit_conditioned, mean_squared_residual, scatter_conditioning,
};
pub use kmeans::{kmeans_cluster, KMeansResult};
pub use metrics::{directed_hausdorff, hausdorff, nearest_distances};
pub use pca::pca_axes;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// Patient side. `Left` is the patient's left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn code(self) -> u8 {
        match self {
            Side::Left => 1,
            Side::Right => 2,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Cartilage levels present in the rib cage model.
pub const LEVELS: [u8; 4] = [2, 3, 4, 5];

/// Per-point anatomical tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PartLabel {
    Sternum,
    Cartilage { side: Side, level: u8 },
    Unassigned,
}

impl PartLabel {
    pub const UNASSIGNED_CODE: u32 = 255;

    /// File encoding: 0 sternum, `10*side + level` cartilage, 255 unassigned.
    pub fn code(self) -> u32 {
        match self {
            PartLabel::Sternum => 0,
            PartLabel::Cartilage { side, level } => 10 * side.code() as u32 + level as u32,
            PartLabel::Unassigned => Self::UNASSIGNED_CODE,
        }
    }

    pub fn from_code(code: u32) -> Option<PartLabel> {
        match code {
            0 => Some(PartLabel::Sternum),
            255 => Some(PartLabel::Unassigned),
            c => {
                let side = match c / 10 {
                    1 => Side::Left,
                    2 => Side::Right,
                    _ => return None,
                };
                let level = (c % 10) as u8;
                LEVELS.contains(&level).then_some(PartLabel::Cartilage { side, level })
            }
        }
    }

    pub fn is_cartilage(self) -> bool {
        matches!(self, PartLabel::Cartilage { .. })
    }
}

/// Points in millimetres with optional per-point part tags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub labels: Option<Vec<PartLabel>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points, labels: None }
    }

    pub fn with_labels(points: Vec<Point3>, labels: Vec<PartLabel>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::LabelCount {
                points: points.len(),
                labels: labels.len(),
            });
        }
        Ok(Self {
            points,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ensure_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }

    pub fn label(&self, i: usize) -> Option<PartLabel> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn centroid(&self) -> Option<Point3> {
        centroid(&self.points)
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Points carrying `label`, in cloud order.
    pub fn points_with_label(&self, label: PartLabel) -> Vec<Point3> {
        match &self.labels {
            None => Vec::new(),
            Some(labels) => self
                .points
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == label)
                .map(|(p, _)| *p)
                .collect(),
        }
    }
}

pub fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
    Some(Point3::from(sum / points.len() as f64))
}
