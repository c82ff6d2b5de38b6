use std::collections::VecDeque;

use nalgebra::{Matrix3, Point2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{BinaryImage, FeaturePlane, SternumPose};
use crate::cloud::{kmeans_cluster, PartLabel, Side};
use crate::error::{Error, Result};

/// Signed offsets of the two sternum edges along the pose's short axis, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SternumBoundaries {
    pub negative: f64,
    pub positive: f64,
}

impl SternumBoundaries {
    pub fn width(&self) -> f64 {
        self.positive - self.negative
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.positive + self.negative)
    }
}

fn local_coords(pose: &SternumPose, p: &Point2<f64>) -> (f64, f64) {
    let (short, long) = pose.axes();
    let d = p - pose.center2d;
    (d.dot(&short), d.dot(&long))
}

/// Sweep the long-edge centreline outward one pixel at a time and stop where
/// the overlap falls below `drop_ratio` of the overlap at the centre.
///
/// Each boundary is placed halfway between the last retained line and the
/// first dropped one.
pub fn find_sternum_boundaries(image: &BinaryImage, pose: &SternumPose, drop_ratio: f64) -> Result<SternumBoundaries> {
    let s = image.scale();
    let max_steps = (1.5 * pose.rect.width / s).ceil() as i64;
    let n = 2 * max_steps as usize + 1;
    let mut counts = vec![0usize; n];
    for (x, y) in image.set_pixels() {
        let (u, v) = local_coords(pose, &image.pixel_center(x, y));
        if v.abs() > pose.rect.height / 2.0 {
            continue;
        }
        let bin = (u / s + 0.5).floor() as i64;
        if bin.abs() <= max_steps {
            counts[(bin + max_steps) as usize] += 1;
        }
    }
    let at = |k: i64| counts[(k + max_steps) as usize] as f64;
    let base = at(0);
    if base == 0.0 {
        return Err(Error::BoundaryNotFound("centreline does not overlap the image"));
    }
    let sweep = |dir: i64, name: &'static str| -> Result<f64> {
        (1..=max_steps)
            .find(|&k| at(dir * k) < drop_ratio * base)
            .map(|k| dir as f64 * (k as f64 - 0.5) * s)
            .ok_or(Error::BoundaryNotFound(name))
    };
    Ok(SternumBoundaries {
        negative: sweep(-1, "negative")?,
        positive: sweep(1, "positive")?,
    })
}

/// Whether an in-plane point lies inside the sternum rectangle spanned by
/// the detected boundaries.
pub fn in_sternum_region(pose: &SternumPose, bounds: &SternumBoundaries, p: &Point2<f64>) -> bool {
    let (u, v) = local_coords(pose, p);
    u >= bounds.negative && u <= bounds.positive && v.abs() <= pose.rect.height / 2.0
}

/// 4-connected region of set pixels reachable from `seed` without entering
/// `blocked` pixels.
pub fn flood_fill(
    image: &BinaryImage,
    seed: (usize, usize),
    blocked: impl Fn(usize, usize) -> bool,
) -> Result<Vec<(usize, usize)>> {
    if !image.get(seed.0, seed.1) || blocked(seed.0, seed.1) {
        return Err(Error::EmptyRegion { x: seed.0, y: seed.1 });
    }
    let mut seen = vec![false; image.width * image.height];
    let mut queue = VecDeque::from([seed]);
    seen[seed.1 * image.width + seed.0] = true;
    let mut region = Vec::new();
    while let Some((x, y)) = queue.pop_front() {
        region.push((x, y));
        let neighbours = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
        for (nx, ny) in neighbours {
            if nx >= image.width || ny >= image.height {
                continue;
            }
            let idx = ny * image.width + nx;
            if seen[idx] || !image.get(nx, ny) || blocked(nx, ny) {
                continue;
            }
            seen[idx] = true;
            queue.push_back((nx, ny));
        }
    }
    region.sort_unstable_by_key(|&(x, y)| (y, x));
    Ok(region)
}

/// Curvature of a thick planar strip: a parabola is fitted across the
/// strip's principal axis and its second derivative returned. Zero for fewer
/// than three points or a degenerate spread.
pub fn branch_curvature(points: &[Point2<f64>]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |a, p| a + p.coords) / n;
    let mut cov = nalgebra::Matrix2::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let major = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let axis: Vector2<f64> = eig.eigenvectors.column(major).into();
    let across = Vector2::new(-axis.y, axis.x);
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in points {
        let d = p.coords - mean;
        let (t, y) = (d.dot(&axis), d.dot(&across));
        let row = Vector3::new(1.0, t, t * t);
        ata += row * row.transpose();
        atb += row * y;
    }
    let Some(sol) = ata.lu().solve(&atb) else {
        return 0.0;
    };
    let k = 2.0 * sol.z.abs() / (1.0 + sol.y * sol.y).powf(1.5);
    if k.is_finite() {
        k
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentParams {
    /// Width of the strip outside each boundary whose pixels are clustered, mm.
    pub band_mm: f64,
    pub clusters_per_side: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            band_mm: 10.0,
            clusters_per_side: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub side: Side,
    pub level: u8,
    pub pixels: usize,
    pub centroid2d: Point2<f64>,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLine {
    pub start: Point2<f64>,
    pub end: Point2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub labels: Vec<PartLabel>,
    pub left_boundary: BoundaryLine,
    pub right_boundary: BoundaryLine,
    /// Superior direction of the sternum in plane coordinates.
    pub up2d: Vector2<f64>,
    /// Sternum centre between the two boundaries, plane coordinates.
    pub center2d: Point2<f64>,
    pub branches: Vec<BranchSummary>,
    /// Whether curvature rises strictly from level 2 to level 5 on both sides.
    pub curvature_consistent: bool,
}

impl SegmentationResult {
    /// Lateral direction toward the patient's left in plane coordinates.
    pub fn left2d(&self) -> Vector2<f64> {
        Vector2::new(self.up2d.y, -self.up2d.x)
    }
}

struct Component {
    pixels: Vec<(usize, usize)>,
    along: f64,
    curvature: f64,
    centroid: Point2<f64>,
}

fn side_components(
    image: &BinaryImage,
    pose: &SternumPose,
    bounds: &SternumBoundaries,
    params: &SegmentParams,
    dir: f64,
) -> Result<Vec<Component>> {
    let edge = if dir > 0.0 { bounds.positive } else { bounds.negative };
    let h = pose.rect.height;
    let mut band = Vec::new();
    let mut band_pixels = Vec::new();
    for (x, y) in image.set_pixels() {
        let (u, v) = local_coords(pose, &image.pixel_center(x, y));
        let out = dir * (u - edge);
        if out > 0.0 && out <= params.band_mm && v.abs() <= h / 2.0 {
            band.push([u, v]);
            band_pixels.push((x, y));
        }
    }
    let k = params.clusters_per_side;
    if band.len() < k {
        return Ok(Vec::new());
    }
    let seeds: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            [
                edge + dir * params.band_mm / 2.0,
                -h / 2.0 + (i as f64 + 0.5) * h / k as f64,
            ]
        })
        .collect();
    let km = kmeans_cluster(&band, &seeds)?;
    let blocked = |x: usize, y: usize| in_sternum_region(pose, bounds, &image.pixel_center(x, y));
    let mut owner = vec![usize::MAX; image.width * image.height];
    let mut comps: Vec<Component> = Vec::new();
    for (c, center) in km.centers.iter().enumerate() {
        let seed = band
            .iter()
            .zip(&band_pixels)
            .zip(&km.labels)
            .filter(|(_, &l)| l == c)
            .map(|((p, px), _)| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2), *px))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, seed)) = seed else { continue };
        if owner[seed.1 * image.width + seed.0] != usize::MAX {
            continue;
        }
        let pixels = flood_fill(image, seed, blocked)?;
        let id = comps.len();
        for &(x, y) in &pixels {
            owner[y * image.width + x] = id;
        }
        let centers: Vec<Point2<f64>> = pixels.iter().map(|&(x, y)| image.pixel_center(x, y)).collect();
        let n = centers.len() as f64;
        let centroid = Point2::from(centers.iter().fold(Vector2::zeros(), |a, p| a + p.coords) / n);
        comps.push(Component {
            along: local_coords(pose, &centroid).1,
            curvature: branch_curvature(&centers),
            centroid,
            pixels,
        });
    }
    comps.sort_by(|a, b| a.along.total_cmp(&b.along));
    Ok(comps)
}

/// Sum over sides of the rank-weighted curvature along the sternum axis:
/// positive when curvature grows toward `+long`.
fn curvature_trend(comps: &[Component]) -> f64 {
    let mid = (comps.len() as f64 - 1.0) / 2.0;
    comps
        .iter()
        .enumerate()
        .map(|(i, c)| (i as f64 - mid) * c.curvature)
        .sum()
}

/// Label every point as sternum, one of the eight branches, or unassigned.
///
/// The sternum mask reaches half a pixel beyond each detected boundary.
pub fn segment_cartilage(
    plane: &FeaturePlane,
    image: &BinaryImage,
    pose: &SternumPose,
    bounds: &SternumBoundaries,
    params: &SegmentParams,
) -> Result<SegmentationResult> {
    let k = params.clusters_per_side;
    let detected = *bounds;
    let half_px = image.scale() / 2.0;
    let bounds = &SternumBoundaries {
        negative: detected.negative - half_px,
        positive: detected.positive + half_px,
    };
    let neg = side_components(image, pose, bounds, params, -1.0)?;
    let pos = side_components(image, pose, bounds, params, 1.0)?;
    let (short, long) = pose.axes();

    let full: Vec<&Vec<Component>> = [&neg, &pos].into_iter().filter(|c| c.len() == k).collect();
    if full.is_empty() {
        return Err(Error::SegmentationIncomplete {
            side: "both".into(),
            found: neg.len().min(pos.len()),
        });
    }
    let trend: f64 = full.iter().map(|c| curvature_trend(c)).sum();
    let up = if trend > 0.0 { -long } else { long };
    let left = Vector2::new(up.y, -up.x);
    let side_of = |dir: f64| {
        if (short * dir).dot(&left) > 0.0 {
            Side::Left
        } else {
            Side::Right
        }
    };
    for (comps, dir) in [(&neg, -1.0), (&pos, 1.0)] {
        if comps.len() != k {
            return Err(Error::SegmentationIncomplete {
                side: side_of(dir).to_string(),
                found: comps.len(),
            });
        }
    }

    // Pixel code: 0 none, 1 sternum, otherwise a part label code + 2.
    let mut code = vec![0u16; image.width * image.height];
    for (x, y) in image.set_pixels() {
        if in_sternum_region(pose, bounds, &image.pixel_center(x, y)) {
            code[y * image.width + x] = 1;
        }
    }
    let mut branches = Vec::new();
    let mut consistent = true;
    for (comps, dir) in [(&neg, -1.0), (&pos, 1.0)] {
        let side = side_of(dir);
        let top_first = up.dot(&long) > 0.0;
        let mut ordered: Vec<&Component> = comps.iter().collect();
        if top_first {
            ordered.reverse();
        }
        for (i, c) in ordered.iter().enumerate() {
            let level = 2 + i as u8;
            let label = PartLabel::Cartilage { side, level };
            for &(x, y) in &c.pixels {
                code[y * image.width + x] = label.code() as u16 + 2;
            }
            branches.push(BranchSummary {
                side,
                level,
                pixels: c.pixels.len(),
                centroid2d: c.centroid,
                curvature: c.curvature,
            });
        }
        consistent &= ordered.windows(2).all(|w| w[1].curvature > w[0].curvature);
    }
    branches.sort_by_key(|b| (b.side, b.level));

    let labels = plane
        .points2d
        .iter()
        .map(|p| {
            if in_sternum_region(pose, bounds, p) {
                return PartLabel::Sternum;
            }
            match image.pixel_of(p).map(|(x, y)| code[y * image.width + x]) {
                Some(c) if c >= 2 => PartLabel::from_code(c as u32 - 2).unwrap_or(PartLabel::Unassigned),
                _ => PartLabel::Unassigned,
            }
        })
        .collect();

    let line = |offset: f64| BoundaryLine {
        start: pose.center2d + short * offset - long * pose.rect.height / 2.0,
        end: pose.center2d + short * offset + long * pose.rect.height / 2.0,
    };
    let (left_off, right_off) = if short.dot(&left) > 0.0 {
        (detected.positive, detected.negative)
    } else {
        (detected.negative, detected.positive)
    };
    Ok(SegmentationResult {
        labels,
        left_boundary: line(left_off),
        right_boundary: line(right_off),
        up2d: up,
        center2d: pose.center2d + short * detected.mid(),
        branches,
        curvature_consistent: consistent,
    })
}
