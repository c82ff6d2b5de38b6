use nalgebra::Point2;

use crate::cloud::{pca_axes, PointCloud};
use crate::error::Result;
use crate::geometry::{Basis3, Point3, Vec3};

/// Front view of a cloud: projection onto the plane normal to its third
/// principal axis.
///
/// The basis is right-handed (`axes[0] × axes[1] = axes[2]`) and the normal
/// points toward the side holding the majority of points.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane {
    pub basis: Basis3,
    pub points2d: Vec<Point2<f64>>,
    pub depths: Vec<f64>,
}

impl FeaturePlane {
    pub fn normal(&self) -> Vec3 {
        self.basis.axes[2]
    }

    /// World position of an in-plane point at the given depth.
    pub fn lift(&self, p: &Point2<f64>, depth: f64) -> Point3 {
        self.basis.to_world(&Vec3::new(p.x, p.y, depth))
    }

    pub fn reconstruct(&self, i: usize) -> Point3 {
        self.lift(&self.points2d[i], self.depths[i])
    }

    /// In-plane direction expressed in world coordinates.
    pub fn direction(&self, d: &nalgebra::Vector2<f64>) -> Vec3 {
        self.basis.axes[0] * d.x + self.basis.axes[1] * d.y
    }

    pub fn len(&self) -> usize {
        self.points2d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points2d.is_empty()
    }
}

pub fn project_to_feature_plane(cloud: &PointCloud) -> Result<FeaturePlane> {
    let mut basis = pca_axes(cloud)?;
    let depth_of = |b: &Basis3, p: &Point3| (p - b.origin).dot(&b.axes[2]);
    let positive = cloud.points.iter().filter(|p| depth_of(&basis, p) > 0.0).count();
    let negative = cloud.points.iter().filter(|p| depth_of(&basis, p) < 0.0).count();
    if negative > positive {
        basis.axes[2] = -basis.axes[2];
    }
    basis.axes[1] = basis.axes[2].cross(&basis.axes[0]);

    let mut points2d = Vec::with_capacity(cloud.len());
    let mut depths = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        let local = basis.to_local(p);
        points2d.push(Point2::new(local.x, local.y));
        depths.push(local.z);
    }
    Ok(FeaturePlane {
        basis,
        points2d,
        depths,
    })
}
