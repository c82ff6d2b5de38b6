use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point3;

use super::PointCloud;

/// Distance from each point of `from` to its nearest neighbour in `to`.
///
/// Exact brute force; parallel over `from`, so the result is identical to
/// the sequential loop.
pub fn nearest_distances(from: &[Point3], to: &[Point3]) -> Vec<f64> {
    from.par_iter()
        .map(|p| {
            to.iter()
                .map(|q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// `max_{x in a} min_{y in b} |x - y|`.
pub fn directed_hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(nearest_distances(&a.points, &b.points).into_iter().fold(0.0, f64::max))
}

/// Symmetric Hausdorff distance in mm.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(pts: &[(f64, f64, f64)]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect())
    }

    #[test]
    fn identity_is_zero() {
        let a = cloud(&[(0.0, 1.0, 2.0), (3.0, 4.0, 5.0)]);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_pair() {
        let a = cloud(&[(0.0, 0.0, 0.0)]);
        let b = cloud(&[(3.0, 4.0, 0.0)]);
        assert_eq!(hausdorff(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn asymmetric_direction_is_captured() {
        let a = cloud(&[(0.0, 0.0, 0.0), (10.0, 0.0, 0.0)]);
        let b = cloud(&[(0.0, 0.0, 0.0)]);
        assert_eq!(directed_hausdorff(&b, &a).unwrap(), 0.0);
        assert_eq!(directed_hausdorff(&a, &b).unwrap(), 10.0);
        assert_eq!(hausdorff(&a, &b).unwrap(), 10.0);
    }

    #[test]
    fn empty_errors() {
        let a = cloud(&[(0.0, 0.0, 0.0)]);
        assert!(hausdorff(&a, &PointCloud::default()).is_err());
        assert!(hausdorff(&PointCloud::default(), &a).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn symmetric(
            a in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 1..30),
            b in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 1..30),
        ) {
            let (a, b) = (cloud(&a), cloud(&b));
            prop_assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff(&b, &a).unwrap());
            prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        }
    }
}
