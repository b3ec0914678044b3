use serde::{Deserialize, Serialize};

use crate::data::{KeypointSample, LEFT_EYE_CENTER, NUM_KEYPOINTS, RIGHT_EYE_CENTER};
use crate::error::{Error, Result};

/// How per-keypoint distances are combined into one per-image error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

/// Per-image keypoint error over the present keypoints, divided by the
/// distance between the true eye centres.
///
/// `pred` and `truth` hold `x0, y0, x1, y1, …` for the 15 keypoints.
/// The ratio is invariant to the coordinate frame, so pixel and normalised
/// coordinates give the same value.
pub fn interocular_error_coords(pred: &[f64], truth: &[f64], present: &[bool], agg: Aggregation) -> Result<f64> {
    if pred.len() != 2 * NUM_KEYPOINTS || truth.len() != 2 * NUM_KEYPOINTS || present.len() != NUM_KEYPOINTS {
        return Err(Error::Shape(format!(
            "expected {} coordinates and {NUM_KEYPOINTS} flags",
            2 * NUM_KEYPOINTS
        )));
    }
    if !present[LEFT_EYE_CENTER] || !present[RIGHT_EYE_CENTER] {
        return Err(Error::Data("an eye centre is missing from the ground truth".into()));
    }
    let pt = |v: &[f64], i: usize| (v[2 * i], v[2 * i + 1]);
    let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let iod = dist(pt(truth, LEFT_EYE_CENTER), pt(truth, RIGHT_EYE_CENTER));
    if iod == 0.0 {
        return Err(Error::Data("inter-ocular distance is zero".into()));
    }
    let dists = (0..NUM_KEYPOINTS)
        .filter(|&i| present[i])
        .map(|i| dist(pt(pred, i), pt(truth, i)));
    let e = match agg {
        Aggregation::Mean => {
            let (s, n) = dists.fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
            s / n as f64
        }
        Aggregation::Max => dists.fold(0.0, f64::max),
    };
    Ok(e / iod)
}

/// [`interocular_error_coords`] against a sample's annotation; `pred` is in pixels.
pub fn interocular_error(pred: &[f64], truth: &KeypointSample, agg: Aggregation) -> Result<f64> {
    interocular_error_coords(pred, &truth.coords(), truth.presence(), agg)
}

/// Fraction of errors strictly below `threshold`.
pub fn hit_rate(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Data("hit rate of an empty error list".into()));
    }
    Ok(errors.iter().filter(|&&e| e < threshold).count() as f64 / errors.len() as f64)
}

pub const HIT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointEvalResult {
    pub threshold: f64,
    pub errors: Vec<f64>,
    pub hits: Vec<bool>,
    pub hit_rate: f64,
}

impl KeypointEvalResult {
    pub fn from_errors(errors: Vec<f64>, threshold: f64) -> Result<Self> {
        let hit_rate = hit_rate(&errors, threshold)?;
        Ok(KeypointEvalResult {
            threshold,
            hits: errors.iter().map(|&e| e < threshold).collect(),
            errors,
            hit_rate,
        })
    }
}
