//! Detection pipeline toolkit.
//!
//! - [`annotations`]: YOLO label parsing and the dataset model
//! - [`imageops`]: histogram equalization, CLAHE and gamma correction
//! - [`geometry`]: IoU, GIoU and L1 box distance
//! - [`assignment`]: Hungarian matching and one-to-many label assigners
//! - [`datasetops`]: class statistics and scene-grouped splitting
//! - [`evaluation`]: NMS, matching, average precision and mAP
//! - [`cli`]: the `detkit` command-line front end

pub mod annotations;
pub mod assignment;
pub mod cli;
pub mod datasetops;
pub mod evaluation;
pub mod geometry;
pub mod imageops;

pub use annotations::{Annotation, ClassTaxonomy, Dataset, Detection, ImageRecord, NormBox, PixelBox};
pub use assignment::{AssignmentResult, CostMatrix, CostWeights};
pub use evaluation::{EvalConfig, EvalReport};
pub use imageops::Raster;

/// Provenance line written into manifests and reports.
pub fn version_line() -> String {
    format!("# detkit {}", env!("CARGO_PKG_VERSION"))
}
