//! Distance-adaptive confidence thresholding for LiDAR 3D detections.
//!
//! A single score cutoff is too strict for far objects and too lenient for
//! near clutter. This crate replaces it with a piecewise quadratic threshold
//! over ego distance, fits that curve to binned score statistics, and measures
//! the effect with recall, precision, their trade-off and interpolated AP on
//! KITTI-format data.
//!
//! - [`kitti`]: label/detection file parsing and dataset loading
//! - [`geometry`]: oriented boxes, footprints, BEV and 3D IoU
//! - [`bin_stats`]: per-distance-bin score mean and spread
//! - [`threshold`]: the threshold curve, filtering and fitting
//! - [`evaluation`]: matching, point metrics, AP and report comparison
//! - [`synthetic`]: seeded scene generator with known ground truth

pub mod bin_stats;
pub mod evaluation;
pub mod geometry;
pub mod kitti;
pub mod synthetic;
pub mod threshold;

pub use bin_stats::{compute_bin_stats, BinSpec, BinStats, PreFilter, StdMode};
pub use evaluation::{
    average_precision, compare_reports, evaluate, match_frame, point_metrics, EvalReport,
    MatchConfig,
};
pub use geometry::{ego_distance, iou_3d, iou_bev, Box3D, IouKind, Polygon2D};
pub use kitti::{load_dataset, parse_label_file, serialize_records, FramePair, KittiRecord};
pub use threshold::{
    apply_adaptive, apply_single, fit_quadratic, FitResult, KMode, ThresholdModel, ThresholdPolicy,
};
