//! Front-view sternum detection, cartilage segmentation and the initial
//! rigid overlay of a template cloud onto a target cloud.

mod align;
mod plane;
mod raster;
mod segment;
mod template;

pub use align::{coarse_align, AnatomicalFrame, CoarseAlignment, CoarseAnalysis, CoarseConfig};
pub use plane::{project_to_feature_plane, FeaturePlane};
pub use raster::{rasterize, rasterize_points, BinaryImage};
pub use segment::{
    branch_curvature, find_sternum_boundaries, flood_fill, in_sternum_region, segment_cartilage, BoundaryLine,
    BranchSummary, SegmentParams, SegmentationResult, SternumBoundaries,
};
pub use template::{
    angle_sweep, make_rotated_masks, mask_size, match_template, match_template_windowed, normalize_angle,
    refine_sternum, score_map, Mask, RectTemplate, RefinePass, RefineSchedule, SternumPose,
};
