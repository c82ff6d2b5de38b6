//! Skeleton-graph non-rigid registration of thoracic cartilage point clouds.
//!
//! The pipeline coarse-aligns a template cloud onto a target cloud using the
//! sternum and cartilage levels seen in a PCA front view, fits a numbered
//! skeleton graph to both clouds with a geodesic self-organizing map, and
//! blends per-node rigid transforms into a dense non-rigid map that also
//! carries scan waypoints from template space into target space.

pub mod cloud;
pub mod coarse;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod nonrigid;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
