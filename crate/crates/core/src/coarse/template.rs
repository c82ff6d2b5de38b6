use std::cmp::Ordering;

use nalgebra::{Point2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rasterize, BinaryImage, FeaturePlane};
use crate::error::{Error, Result};

/// Sternum rectangle, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectTemplate {
    pub width: f64,
    pub height: f64,
}

impl Default for RectTemplate {
    fn default() -> Self {
        Self {
            width: 30.0,
            height: 90.0,
        }
    }
}

impl RectTemplate {
    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    /// Unit vectors of the rectangle rotated counterclockwise by `angle_deg`:
    /// `(short edge direction, long edge direction)`.
    pub fn axes(angle_deg: f64) -> (Vector2<f64>, Vector2<f64>) {
        let (s, c) = angle_deg.to_radians().sin_cos();
        (Vector2::new(c, s), Vector2::new(-s, c))
    }

    pub fn contains(&self, angle_deg: f64, offset: &Vector2<f64>) -> bool {
        let (short, long) = Self::axes(angle_deg);
        offset.dot(&short).abs() <= self.width / 2.0 && offset.dot(&long).abs() <= self.height / 2.0
    }
}

/// Square `size × size` occupancy mask of a rotated rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub angle_deg: f64,
    pub size: usize,
    bits: Vec<bool>,
    offsets: Vec<(usize, usize)>,
}

impl Mask {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.size + i]
    }

    pub fn area(&self) -> usize {
        self.offsets.len()
    }

    /// Set cells as `(column, row)` offsets from the top-left corner.
    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }
}

/// Map an angle in degrees into `[-90, 90)`.
pub fn normalize_angle(deg: f64) -> f64 {
    let a = (deg + 90.0).rem_euclid(180.0) - 90.0;
    if a >= 90.0 {
        a - 180.0
    } else {
        a
    }
}

pub fn mask_size(rect: &RectTemplate, scale: f64) -> usize {
    (rect.width.max(rect.height) / scale - 1e-9).ceil() as usize
}

pub fn make_rotated_masks(rect: &RectTemplate, scale: f64, angles: &[f64]) -> Vec<Mask> {
    let m = mask_size(rect, scale);
    angles
        .iter()
        .map(|&angle| {
            let mut bits = vec![false; m * m];
            let mut offsets = Vec::new();
            for j in 0..m {
                for i in 0..m {
                    let d = Vector2::new(
                        (i as f64 + 0.5 - m as f64 / 2.0) * scale,
                        (j as f64 + 0.5 - m as f64 / 2.0) * scale,
                    );
                    if rect.contains(angle, &d) {
                        bits[j * m + i] = true;
                        offsets.push((i, j));
                    }
                }
            }
            Mask {
                angle_deg: angle,
                size: m,
                bits,
                offsets,
            }
        })
        .collect()
}

/// Angles `start, start + step, ...` strictly below `start + span`.
pub fn angle_sweep(start: f64, span: f64, step: f64) -> Vec<f64> {
    let n = (span / step - 1e-9).ceil() as usize;
    (0..n).map(|k| start + k as f64 * step).collect()
}

/// Overlap count `F(x, y) = Σ M(i, j) · I(x + i, y + j)` for every placement
/// whose mask lies fully inside the image, indexed `y * (W - m + 1) + x`.
pub fn score_map(image: &BinaryImage, mask: &Mask) -> Vec<u32> {
    let m = mask.size;
    if image.width < m || image.height < m {
        return Vec::new();
    }
    let (pw, ph) = (image.width - m + 1, image.height - m + 1);
    let mut out = vec![0u32; pw * ph];
    for y in 0..ph {
        for x in 0..pw {
            out[y * pw + x] = mask.offsets.iter().filter(|&&(i, j)| image.get(x + i, y + j)).count() as u32;
        }
    }
    out
}

/// Best matching rectangle placement in the feature plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SternumPose {
    pub center2d: Point2<f64>,
    /// Counterclockwise rotation of the long edge from the plane's second
    /// axis, degrees in `[-90, 90)`.
    pub angle: f64,
    pub score: u32,
    pub rect: RectTemplate,
    /// Raster scale the pose was found at, mm per pixel.
    pub scale: f64,
}

impl SternumPose {
    pub fn axes(&self) -> (Vector2<f64>, Vector2<f64>) {
        RectTemplate::axes(self.angle)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: u32,
    preference: f64,
    angle: f64,
    x: usize,
    y: usize,
    mask: usize,
}

/// Higher score wins; then the smaller rotation from the reference angle,
/// the lower signed angle, the lower `x`, the lower `y`.
fn better(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .cmp(&a.score)
        .then(a.preference.total_cmp(&b.preference))
        .then(a.angle.total_cmp(&b.angle))
        .then(a.x.cmp(&b.x))
        .then(a.y.cmp(&b.y))
}

fn mask_center(image: &BinaryImage, m: usize, x: usize, y: usize) -> Point2<f64> {
    let o = image.origin();
    let s = image.scale();
    Point2::new(
        o.x + (x as f64 + m as f64 / 2.0) * s,
        o.y + (y as f64 + m as f64 / 2.0) * s,
    )
}

fn search(
    image: &BinaryImage,
    masks: &[Mask],
    rect: &RectTemplate,
    reference_angle: f64,
    window: Option<(Point2<f64>, f64)>,
) -> Result<SternumPose> {
    if image.count() == 0 {
        return Err(Error::EmptyImage);
    }
    let best = masks
        .par_iter()
        .enumerate()
        .filter_map(|(k, mask)| {
            let m = mask.size;
            if image.width < m || image.height < m {
                return None;
            }
            let pw = image.width - m + 1;
            let ph = image.height - m + 1;
            let preference = normalize_angle(mask.angle_deg - reference_angle).abs();
            let mut best: Option<Candidate> = None;
            for x in 0..pw {
                for y in 0..ph {
                    if let Some((c, half)) = window {
                        let p = mask_center(image, m, x, y);
                        if (p.x - c.x).abs() > half + 1e-9 || (p.y - c.y).abs() > half + 1e-9 {
                            continue;
                        }
                    }
                    let score = mask.offsets.iter().filter(|&&(i, j)| image.get(x + i, y + j)).count() as u32;
                    let cand = Candidate {
                        score,
                        preference,
                        angle: mask.angle_deg,
                        x,
                        y,
                        mask: k,
                    };
                    if best.is_none_or(|b| better(&cand, &b) == Ordering::Less) {
                        best = Some(cand);
                    }
                }
            }
            best
        })
        .min_by(better);
    let best = best.ok_or_else(|| Error::InvalidArgument("no mask placement fits inside the image".into()))?;
    Ok(SternumPose {
        center2d: mask_center(image, masks[best.mask].size, best.x, best.y),
        angle: normalize_angle(best.angle),
        score: best.score,
        rect: *rect,
        scale: image.scale(),
    })
}

/// Exhaustive search over every placement of every mask.
pub fn match_template(image: &BinaryImage, masks: &[Mask], rect: &RectTemplate) -> Result<SternumPose> {
    search(image, masks, rect, 0.0, None)
}

/// One refinement pass: raster scale, half-range and step of the rotation
/// search, all relative to the previous pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinePass {
    pub scale: f64,
    pub half_range_deg: f64,
    pub step_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSchedule {
    pub passes: Vec<RefinePass>,
    /// Position search half-window in pixels of the previous pass.
    pub window_px: f64,
}

impl Default for RefineSchedule {
    fn default() -> Self {
        Self {
            passes: vec![
                RefinePass {
                    scale: 3.0,
                    half_range_deg: 15.0,
                    step_deg: 2.0,
                },
                RefinePass {
                    scale: 2.0,
                    half_range_deg: 7.0,
                    step_deg: 1.0,
                },
            ],
            window_px: 2.0,
        }
    }
}

impl RefinePass {
    pub fn angles(&self, around: f64) -> Vec<f64> {
        let n = (self.half_range_deg / self.step_deg + 1e-9).floor() as i64;
        (-n..=n)
            .map(|k| normalize_angle(around + k as f64 * self.step_deg))
            .collect()
    }
}

/// Search a window around `initial` at the given raster and rotation set.
pub fn match_template_windowed(
    image: &BinaryImage,
    masks: &[Mask],
    initial: &SternumPose,
    half_window_mm: f64,
) -> Result<SternumPose> {
    search(
        image,
        masks,
        &initial.rect,
        initial.angle,
        Some((initial.center2d, half_window_mm)),
    )
}

pub fn refine_sternum(plane: &FeaturePlane, initial: &SternumPose, schedule: &RefineSchedule) -> Result<SternumPose> {
    let mut pose = *initial;
    for pass in &schedule.passes {
        let image = rasterize(plane, pass.scale, pose.rect.diagonal())?;
        let masks = make_rotated_masks(&pose.rect, pass.scale, &pass.angles(pose.angle));
        pose = match_template_windowed(&image, &masks, &pose, schedule.window_px * pose.scale)?;
    }
    Ok(pose)
}
