use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

use super::centroid;

/// Minimum ratio of the second to the first source scatter eigenvalue.
const COLLINEAR_RATIO: f64 = 1e-12;

/// Least-squares rigid transform mapping `source[i]` onto `target[i]`.
pub fn kabsch_fit(source: &[Point3], target: &[Point3]) -> Result<RigidTransform> {
    kabsch_fit_conditioned(source, target, COLLINEAR_RATIO)
}

/// As [`kabsch_fit`], rejecting source sets whose second scatter eigenvalue is
/// below `min_ratio` times the first (near-collinear sets leave the rotation
/// about their line unconstrained).
pub fn kabsch_fit_conditioned(source: &[Point3], target: &[Point3], min_ratio: f64) -> Result<RigidTransform> {
    let m = Moments::new(source, target)?;
    if m.conditioning() <= min_ratio {
        return Err(Error::DegenerateConfiguration(
            "source points are collinear or coincident".into(),
        ));
    }
    Ok(m.transform(m.cross))
}

/// Rigid fit whose poorly constrained rotation directions are pulled toward
/// `reference`: maximises `tr(R C) + λ tr(R Rrefᵀ)` with `C` the
/// cross-covariance and `λ = strength · λ_max(scatter)`. When the pairs are
/// related by `reference` exactly, the result is `reference` exactly.
pub fn kabsch_fit_anchored(
    source: &[Point3],
    target: &[Point3],
    reference: &Matrix3<f64>,
    strength: f64,
) -> Result<RigidTransform> {
    let m = Moments::new(source, target)?;
    let lambda = strength * m.eigenvalues[0];
    Ok(m.transform(m.cross + reference.transpose() * lambda))
}

/// Second-to-first scatter eigenvalue ratio of a point set.
pub fn scatter_conditioning(points: &[Point3]) -> f64 {
    match Moments::new(points, points) {
        Ok(m) => m.conditioning(),
        Err(_) => 0.0,
    }
}

struct Moments {
    source_centroid: Point3,
    target_centroid: Point3,
    cross: Matrix3<f64>,
    /// Scatter eigenvalues, descending.
    eigenvalues: [f64; 3],
}

impl Moments {
    fn new(source: &[Point3], target: &[Point3]) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::LengthMismatch {
                source_len: source.len(),
                target_len: target.len(),
            });
        }
        if source.len() < 3 {
            return Err(Error::DegenerateConfiguration(format!(
                "rigid fit needs at least 3 pairs, got {}",
                source.len()
            )));
        }
        let cs = centroid(source).expect("non-empty");
        let ct = centroid(target).expect("non-empty");
        let mut scatter = Matrix3::zeros();
        let mut cross = Matrix3::zeros();
        for (s, t) in source.iter().zip(target) {
            let ds = s - cs;
            let dt = t - ct;
            scatter += ds * ds.transpose();
            cross += ds * dt.transpose();
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(scatter).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            source_centroid: cs,
            target_centroid: ct,
            cross,
            eigenvalues: [ev[0], ev[1], ev[2]],
        })
    }

    fn conditioning(&self) -> f64 {
        if self.eigenvalues[0] <= 0.0 {
            0.0
        } else {
            self.eigenvalues[1] / self.eigenvalues[0]
        }
    }

    /// Proper rotation maximising `tr(R cross)`, and the matching translation.
    fn transform(&self, cross: Matrix3<f64>) -> RigidTransform {
        let svd = cross.svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested V^T");
        let v = vt.transpose();
        let d = (v * u.transpose()).determinant().signum();
        let correction = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d));
        let rotation = v * correction * u.transpose();
        let translation = self.target_centroid.coords - rotation * self.source_centroid.coords;
        RigidTransform::new(rotation, translation)
    }
}

/// Mean squared distance between `t(source[i])` and `target[i]`.
pub fn mean_squared_residual(t: &RigidTransform, source: &[Point3], target: &[Point3]) -> f64 {
    let sum: f64 = source
        .iter()
        .zip(target)
        .map(|(s, q)| (t.apply(s) - q).norm_squared())
        .sum();
    sum / source.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                )
            })
            .collect()
    }

    #[test]
    fn anchored_fit_is_exact_for_consistent_reference() {
        let truth = RigidTransform::from_axis_angle(Vec3::new(0.2, 1.0, -0.4), 0.9, Vec3::new(3.0, -2.0, 8.0));
        let src = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(10.0, 0.1, 0.0),
            Point3::new(20.0, 0.0, 0.05),
            Point3::new(30.0, -0.1, 0.0),
        ];
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let fit = kabsch_fit_anchored(&src, &dst, &truth.rotation, 0.05).unwrap();
        assert!((fit.rotation - truth.rotation).norm() < 1e-12);
        assert!((fit.translation - truth.translation).norm() < 1e-9);
        assert!(scatter_conditioning(&src) < 1e-4);
    }

    #[test]
    fn anchored_fit_takes_twist_from_reference() {
        // Points on the x axis fix nothing about rotation around x.
        let src: Vec<Point3> = (0..4).map(|i| Point3::new(i as f64 * 5.0, 0.0, 0.0)).collect();
        let twist = RigidTransform::from_axis_angle(Vec3::x(), 0.7, Vec3::zeros());
        let fit = kabsch_fit_anchored(&src, &src, &twist.rotation, 0.05).unwrap();
        assert!((fit.rotation - twist.rotation).norm() < 1e-9);
        for p in &src {
            assert!((fit.apply(p) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn identity_when_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 8);
        let t = kabsch_fit(&pts, &pts).unwrap();
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert!(t.translation.norm() < 1e-9);
    }

    #[test]
    fn pure_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 8);
        let moved: Vec<Point3> = pts.iter().map(|p| p + Vec3::new(5.0, 0.0, 0.0)).collect();
        let t = kabsch_fit(&pts, &moved).unwrap();
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert!((t.translation - Vec3::new(5.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn recovers_random_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let axis = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let truth = RigidTransform::from_axis_angle(
                axis,
                rng.random_range(0.0..std::f64::consts::PI),
                Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), 3.0),
            );
            let src = random_points(&mut rng, 10);
            let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
            let fit = kabsch_fit(&src, &dst).unwrap();
            assert!((fit.rotation - truth.rotation).norm() < 1e-9);
            assert!((fit.translation - truth.translation).norm() < 1e-9);
            assert!(mean_squared_residual(&fit, &src, &dst) < 1e-12);
            assert!(fit.is_proper());
        }
    }

    #[test]
    fn coplanar_sources_stay_proper() {
        let src = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
        ];
        let truth = RigidTransform::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 2.5, Vec3::new(1.0, 2.0, 3.0));
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let fit = kabsch_fit(&src, &dst).unwrap();
        assert!(fit.is_proper());
        assert!((fit.rotation - truth.rotation).norm() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<Point3> = (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            kabsch_fit(&line, &line),
            Err(Error::DegenerateConfiguration(_))
        ));
        let same = vec![Point3::new(1.0, 1.0, 1.0); 3];
        assert!(kabsch_fit(&same, &same).is_err());
        assert!(matches!(
            kabsch_fit(&line[..3], &line),
            Err(Error::LengthMismatch {
                source_len: 3,
                target_len: 4
            })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn residual_no_worse_than_simpler_fits(
            src in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0), 4..20),
            noise in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 20),
        ) {
            let src: Vec<Point3> = src.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
            let dst: Vec<Point3> = src
                .iter()
                .zip(&noise)
                .map(|(p, &(a, b, c))| Point3::new(p.y + a + 3.0, -p.x + b, p.z + c - 1.0))
                .collect();
            let Ok(fit) = kabsch_fit(&src, &dst) else { return Ok(()); };
            let best = mean_squared_residual(&fit, &src, &dst);
            let identity = mean_squared_residual(&RigidTransform::identity(), &src, &dst);
            let shift = centroid(&dst).unwrap() - centroid(&src).unwrap();
            let translated = mean_squared_residual(&RigidTransform::from_translation(shift), &src, &dst);
            prop_assert!(best <= identity * (1.0 + 1e-12) + 1e-9);
            prop_assert!(best <= translated * (1.0 + 1e-12) + 1e-9);
        }
    }
}
