use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{
    angle_sweep, find_sternum_boundaries, make_rotated_masks, match_template, project_to_feature_plane, rasterize,
    refine_sternum, segment_cartilage, FeaturePlane, RectTemplate, RefineSchedule, SegmentParams, SegmentationResult,
    SternumBoundaries, SternumPose,
};
use crate::cloud::{centroid, PartLabel, PointCloud, Side};
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseConfig {
    pub rect: RectTemplate,
    pub coarse_scale: f64,
    pub coarse_angle_step_deg: f64,
    pub coarse_angle_span_deg: f64,
    pub refine: RefineSchedule,
    pub boundary_drop_ratio: f64,
    pub segment: SegmentParams,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            rect: RectTemplate::default(),
            coarse_scale: 5.0,
            coarse_angle_step_deg: 10.0,
            coarse_angle_span_deg: 180.0,
            refine: RefineSchedule::default(),
            boundary_drop_ratio: 0.5,
            segment: SegmentParams::default(),
        }
    }
}

impl CoarseConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("coarse.rect.width", self.rect.width),
            ("coarse.rect.height", self.rect.height),
            ("coarse.coarse_scale", self.coarse_scale),
            ("coarse.coarse_angle_step_deg", self.coarse_angle_step_deg),
            ("coarse.coarse_angle_span_deg", self.coarse_angle_span_deg),
            ("coarse.refine.window_px", self.refine.window_px),
            ("coarse.segment.band_mm", self.segment.band_mm),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        for (i, pass) in self.refine.passes.iter().enumerate() {
            for (name, v) in [
                ("scale", pass.scale),
                ("half_range_deg", pass.half_range_deg),
                ("step_deg", pass.step_deg),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(
                        format!("coarse.refine.passes[{i}].{name}"),
                        format!("must be positive, got {v}"),
                    ));
                }
            }
        }
        if !(self.boundary_drop_ratio > 0.0 && self.boundary_drop_ratio < 1.0) {
            return Err(Error::config(
                "coarse.boundary_drop_ratio",
                format!("must lie in (0, 1), got {}", self.boundary_drop_ratio),
            ));
        }
        if self.segment.clusters_per_side != 4 {
            return Err(Error::config(
                "coarse.segment.clusters_per_side",
                "one cluster per cartilage level (4) is required",
            ));
        }
        Ok(())
    }

    pub fn coarse_angles(&self) -> Vec<f64> {
        angle_sweep(
            -self.coarse_angle_span_deg / 2.0,
            self.coarse_angle_span_deg,
            self.coarse_angle_step_deg,
        )
    }

    /// Scale of the raster used for boundaries and segmentation.
    pub fn final_scale(&self) -> f64 {
        self.refine.passes.last().map_or(self.coarse_scale, |p| p.scale)
    }
}

/// Everything the front-view analysis learns about one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseAnalysis {
    pub plane: FeaturePlane,
    pub initial_pose: SternumPose,
    pub pose: SternumPose,
    pub boundaries: SternumBoundaries,
    pub segmentation: SegmentationResult,
}

/// Sternum-anchored frame of one cloud: columns are (left, up, anterior).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnatomicalFrame {
    pub origin: Point3,
    pub axes: Matrix3<f64>,
}

impl CoarseAnalysis {
    pub fn run(cloud: &PointCloud, config: &CoarseConfig) -> Result<Self> {
        let plane = project_to_feature_plane(cloud)?;
        let coarse = rasterize(&plane, config.coarse_scale, config.rect.diagonal())?;
        let masks = make_rotated_masks(&config.rect, config.coarse_scale, &config.coarse_angles());
        let initial_pose = match_template(&coarse, &masks, &config.rect)?;
        let pose = refine_sternum(&plane, &initial_pose, &config.refine)?;
        let fine = rasterize(&plane, config.final_scale(), config.rect.diagonal())?;
        let boundaries = find_sternum_boundaries(&fine, &pose, config.boundary_drop_ratio)?;
        let segmentation = segment_cartilage(&plane, &fine, &pose, &boundaries, &config.segment)?;
        Ok(Self {
            plane,
            initial_pose,
            pose,
            boundaries,
            segmentation,
        })
    }

    pub fn labels(&self) -> &[PartLabel] {
        &self.segmentation.labels
    }

    pub fn frame(&self) -> Result<AnatomicalFrame> {
        let depths: Vec<f64> = self
            .segmentation
            .labels
            .iter()
            .zip(&self.plane.depths)
            .filter(|(l, _)| **l == PartLabel::Sternum)
            .map(|(_, d)| *d)
            .collect();
        if depths.is_empty() {
            return Err(Error::DegenerateConfiguration("no points labelled sternum".into()));
        }
        let depth = depths.iter().sum::<f64>() / depths.len() as f64;
        let origin = self.plane.lift(&self.segmentation.center2d, depth);
        let up = self.plane.direction(&self.segmentation.up2d).normalize();
        let normal = self.plane.normal();
        let left = up.cross(&normal);
        Ok(AnatomicalFrame {
            origin,
            axes: Matrix3::from_columns(&[left, up, normal]),
        })
    }

    /// 3D centroid of every point labelled as the given branch.
    pub fn branch_centroid(&self, cloud: &PointCloud, side: Side, level: u8) -> Option<Point3> {
        let label = PartLabel::Cartilage { side, level };
        let pts: Vec<Point3> = cloud
            .points
            .iter()
            .zip(&self.segmentation.labels)
            .filter(|(_, l)| **l == label)
            .map(|(p, _)| *p)
            .collect();
        centroid(&pts)
    }
}

/// Rigid map taking the template frame onto the target frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseAlignment {
    pub transform: RigidTransform,
    pub template_frame: AnatomicalFrame,
    pub target_frame: AnatomicalFrame,
}

/// Overlay the sternums and orient by cartilage level: template → target.
pub fn coarse_align(
    template: &PointCloud,
    template_analysis: &CoarseAnalysis,
    target: &PointCloud,
    target_analysis: &CoarseAnalysis,
) -> Result<CoarseAlignment> {
    let f_ct = template_analysis.frame()?;
    let f_us = target_analysis.frame()?;
    let mut rotation = f_us.axes * f_ct.axes.transpose();
    // Re-orthonormalise against rounding in the two frames.
    let svd = rotation.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    rotation = u * v_t;
    let translation: Vec3 = f_us.origin.coords - rotation * f_ct.origin.coords;
    let transform = RigidTransform::new(rotation, translation);

    for side in Side::BOTH {
        let get = |a: &CoarseAnalysis, c: &PointCloud, level| {
            a.branch_centroid(c, side, level)
                .ok_or(Error::MissingBranch { side, level })
        };
        let ct2 = transform.apply(&get(template_analysis, template, 2)?);
        let us2 = get(target_analysis, target, 2)?;
        let us5 = get(target_analysis, target, 5)?;
        if (ct2 - us2).norm() >= (ct2 - us5).norm() {
            return Err(Error::OrientationAmbiguous(format!(
                "template level 2 ({side}) lands nearer target level 5 than level 2"
            )));
        }
    }
    Ok(CoarseAlignment {
        transform,
        template_frame: f_ct,
        target_frame: f_us,
    })
}
