use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Basis3, Vec3};

use super::{centroid, PointCloud};

/// Relative gap below which the two smallest eigenvalues count as equal.
const DEGENERACY_RATIO: f64 = 1e-12;

/// Principal axes of a cloud, ordered by descending variance.
///
/// Each axis is flipped so that its largest-magnitude component is positive,
/// which makes the result deterministic.
pub fn pca_axes(cloud: &PointCloud) -> Result<Basis3> {
    let origin = centroid(&cloud.points).ok_or(Error::EmptyCloud)?;
    let mut cov = Matrix3::zeros();
    for p in &cloud.points {
        let d = p - origin;
        cov += d * d.transpose();
    }
    cov /= cloud.len() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|i| eig.eigenvalues[i]);
    if values[0] <= 0.0 || (values[1] - values[2]).abs() <= DEGENERACY_RATIO * values[0] {
        return Err(Error::AmbiguousAxes { eigenvalues: values });
    }
    let axes = order.map(|i| canonical_sign(eig.eigenvectors.column(i).into_owned()));
    Ok(Basis3 { origin, axes })
}

fn canonical_sign(v: Vec3) -> Vec3 {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, RigidTransform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_corners_give_coordinate_axes() {
        let mut pts = Vec::new();
        for &x in &[-2.0, 2.0] {
            for &y in &[-1.0, 1.0] {
                for &z in &[-0.5, 0.5] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        let b = pca_axes(&PointCloud::new(pts)).unwrap();
        assert!((b.axes[0] - Vec3::x()).norm() < 1e-12);
        assert!((b.axes[1] - Vec3::y()).norm() < 1e-12);
        assert!((b.axes[2] - Vec3::z()).norm() < 1e-12);
        assert!(b.is_orthonormal(1e-9));
    }

    #[test]
    fn line_with_jitter_has_x_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = (0..200)
            .map(|i| Point3::new(i as f64, rng.random_range(-1e-4..1e-4), rng.random_range(-2e-4..2e-4)))
            .collect();
        let b = pca_axes(&PointCloud::new(pts)).unwrap();
        assert!((b.axes[0] - Vec3::x()).norm() < 1e-6);
    }

    #[test]
    fn planar_square_is_ambiguous_only_in_plane() {
        // A square in the xy plane: axes 1 and 2 tie, but the normal is unique.
        let pts = vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
        ];
        let b = pca_axes(&PointCloud::new(pts)).unwrap();
        assert!((b.axes[2] - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn degenerate_covariance_errors() {
        let line = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            pca_axes(&PointCloud::new(line)),
            Err(Error::AmbiguousAxes { .. })
        ));
        let same = vec![Point3::new(1.0, 1.0, 1.0); 4];
        assert!(pca_axes(&PointCloud::new(same)).is_err());
        assert!(matches!(pca_axes(&PointCloud::default()), Err(Error::EmptyCloud)));
    }

    #[test]
    fn rotation_equivariance_on_fixed_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3> = (0..300)
            .map(|_| {
                Point3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-5.0..5.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts);
        let base = pca_axes(&cloud).unwrap();
        let t = RigidTransform::from_axis_angle(Vec3::new(0.3, -1.0, 0.4), 1.1, Vec3::new(5.0, 6.0, -7.0));
        let rotated = pca_axes(&cloud.transformed(&t)).unwrap();
        for k in 0..3 {
            let expect = t.rotation * base.axes[k];
            let d = (rotated.axes[k] - expect).norm().min((rotated.axes[k] + expect).norm());
            assert!(d < 1e-9, "axis {k}: {d}");
        }
        assert!((rotated.origin - t.apply(&base.origin)).norm() < 1e-9);
    }
}
