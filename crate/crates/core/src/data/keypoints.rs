//! Facial keypoint samples, their name table, mirroring and CSV annotations.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const FACE_SIDE: usize = 96;
pub const NUM_KEYPOINTS: usize = 15;

/// Keypoint names by index. "Left" is the subject's left, which appears on
/// the right half of the image.
pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "left_eye_center",
    "right_eye_center",
    "left_eye_inner_corner",
    "left_eye_outer_corner",
    "right_eye_inner_corner",
    "right_eye_outer_corner",
    "left_eyebrow_inner_end",
    "left_eyebrow_outer_end",
    "right_eyebrow_inner_end",
    "right_eyebrow_outer_end",
    "nose_tip",
    "mouth_left_corner",
    "mouth_right_corner",
    "mouth_center_top_lip",
    "mouth_center_bottom_lip",
];

pub const LEFT_EYE_CENTER: usize = 0;
pub const RIGHT_EYE_CENTER: usize = 1;

/// Left/right index pairs swapped by a horizontal flip.
pub const FLIP_PAIRS: [(usize, usize); 6] = [(0, 1), (2, 4), (3, 5), (6, 8), (7, 9), (11, 12)];

/// Coordinates are stored on a 1/1024 px grid so that mirroring
/// `x ↦ 95 − x` is exact in f32 and flipping twice is a bitwise identity.
const GRID: f32 = 1024.0;

fn snap(v: f32) -> f32 {
    (v * GRID).round() / GRID
}

/// A 96×96 gray face with up to 15 annotated keypoints (pixel coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSample {
    image: Vec<u8>,
    keypoints: [(f32, f32); NUM_KEYPOINTS],
    presence: [bool; NUM_KEYPOINTS],
}

impl KeypointSample {
    /// Coordinates of absent keypoints are ignored and stored as 0.
    pub fn new(image: Vec<u8>, keypoints: [(f32, f32); NUM_KEYPOINTS], presence: [bool; NUM_KEYPOINTS]) -> Result<Self> {
        if image.len() != FACE_SIDE * FACE_SIDE {
            return Err(Error::Shape(format!(
                "keypoint image has {} pixels, expected {FACE_SIDE}×{FACE_SIDE}",
                image.len()
            )));
        }
        let max = (FACE_SIDE - 1) as f32;
        let mut kp = [(0.0, 0.0); NUM_KEYPOINTS];
        for i in 0..NUM_KEYPOINTS {
            if presence[i] {
                let (x, y) = (snap(keypoints[i].0), snap(keypoints[i].1));
                if !(0.0..=max).contains(&x) || !(0.0..=max).contains(&y) {
                    return Err(Error::Data(format!(
                        "{} at ({x}, {y}) lies outside the image",
                        KEYPOINT_NAMES[i]
                    )));
                }
                kp[i] = (x, y);
            }
        }
        Ok(KeypointSample {
            image,
            keypoints: kp,
            presence,
        })
    }

    pub fn image(&self) -> &[u8] {
        &self.image
    }

    pub fn keypoints(&self) -> &[(f32, f32); NUM_KEYPOINTS] {
        &self.keypoints
    }

    pub fn presence(&self) -> &[bool; NUM_KEYPOINTS] {
        &self.presence
    }

    /// Flat `x0, y0, …, x14, y14` in pixels.
    pub fn coords(&self) -> Vec<f64> {
        self.keypoints.iter().flat_map(|&(x, y)| [x as f64, y as f64]).collect()
    }
}

/// Horizontal mirror with left/right keypoints swapped.
pub fn flip_keypoint_sample(s: &KeypointSample) -> KeypointSample {
    let image = s
        .image
        .chunks_exact(FACE_SIDE)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    let max = (FACE_SIDE - 1) as f32;
    let mut keypoints = s.keypoints;
    let mut presence = s.presence;
    for (i, k) in keypoints.iter_mut().enumerate() {
        if presence[i] {
            k.0 = max - k.0;
        }
    }
    for &(a, b) in &FLIP_PAIRS {
        keypoints.swap(a, b);
        presence.swap(a, b);
    }
    KeypointSample {
        image,
        keypoints,
        presence,
    }
}

/// One parsed annotation row: coordinates, presence flags and image file.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointRecord {
    pub keypoints: [(f32, f32); NUM_KEYPOINTS],
    pub presence: [bool; NUM_KEYPOINTS],
    pub image: String,
}

pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = KEYPOINT_NAMES
        .iter()
        .flat_map(|n| [format!("{n}_x"), format!("{n}_y")])
        .collect();
    h.push("image".into());
    h
}

pub fn write_keypoint_csv(records: &[KeypointRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let map = |e: csv::Error| Error::Data(format!("csv: {e}"));
    w.write_record(csv_header()).map_err(map)?;
    for r in records {
        let mut row: Vec<String> = Vec::with_capacity(2 * NUM_KEYPOINTS + 1);
        for (k, &p) in r.keypoints.iter().zip(&r.presence) {
            if p {
                row.push(k.0.to_string());
                row.push(k.1.to_string());
            } else {
                row.push(String::new());
                row.push(String::new());
            }
        }
        row.push(r.image.clone());
        w.write_record(&row).map_err(map)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

/// Parses annotation rows; a blank coordinate cell marks the keypoint absent.
pub fn parse_keypoint_csv(bytes: &[u8]) -> Result<Vec<KeypointRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| Error::format("header", 0, e.to_string()))?
        .clone();
    if header.iter().ne(csv_header().iter().map(String::as_str)) {
        return Err(Error::format("header", 0, "unexpected keypoint CSV columns"));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let off = e.position().map_or(0, |p| p.byte());
            Error::format("row", off, e.to_string())
        })?;
        let offset = row.position().map_or(0, |p| p.byte());
        let mut keypoints = [(0.0f32, 0.0f32); NUM_KEYPOINTS];
        let mut presence = [false; NUM_KEYPOINTS];
        for i in 0..NUM_KEYPOINTS {
            let (xs, ys) = (row[2 * i].trim(), row[2 * i + 1].trim());
            match (xs.is_empty(), ys.is_empty()) {
                (true, true) => {}
                (false, false) => {
                    let parse = |s: &str, col: usize| {
                        s.parse::<f32>().map_err(|_| {
                            Error::format(csv_header()[col].clone(), offset, format!("{s:?} is not a number"))
                        })
                    };
                    keypoints[i] = (parse(xs, 2 * i)?, parse(ys, 2 * i + 1)?);
                    presence[i] = true;
                }
                _ => {
                    return Err(Error::format(
                        KEYPOINT_NAMES[i],
                        offset,
                        "only one of x and y is blank",
                    ))
                }
            }
        }
        out.push(KeypointRecord {
            keypoints,
            presence,
            image: row[2 * NUM_KEYPOINTS].to_string(),
        });
    }
    Ok(out)
}
