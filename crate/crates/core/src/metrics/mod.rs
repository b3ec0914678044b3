//! Classification accuracy, keypoint error and hit rate, and block-wise
//! segmentation of whole images.

mod classification;
mod keypoints;
mod segment;

pub use classification::{accuracy, argmax_rows, ConfusionMatrix};
pub use keypoints::{
    hit_rate, interocular_error, interocular_error_coords, Aggregation, KeypointEvalResult,
    HIT_THRESHOLD,
};
pub use segment::{
    ground_truth_blocks, grid_extent, segment_image, segment_image_with, Region, Segmentation,
    OVERLAY_ALPHA,
};
