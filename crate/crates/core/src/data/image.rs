//! Image types and their on-disk formats: binary PPM/PGM, `IRF1` temperature
//! maps and three-level label masks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};

pub const DEFAULT_WIDTH: usize = 320;
pub const DEFAULT_HEIGHT: usize = 240;

/// Burn severity labels as stored in a burn mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum BurnLabel {
    None = 0,
    Light = 1,
    Serious = 2,
}

/// A colour image with a registered per-pixel temperature plane.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalImage {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Row-major RGB.
    pub color: Vec<[u8; 3]>,
    /// Row-major, °C.
    pub temperature: Vec<f32>,
    /// Row-major labels in {0, 1, 2}, see [`BurnLabel`].
    pub burn_mask: Option<Vec<u8>>,
}

impl MultimodalImage {
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        color: Vec<[u8; 3]>,
        temperature: Vec<f32>,
        burn_mask: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 {
            return Err(Error::Size("image with zero extent".into()));
        }
        if color.len() != n || temperature.len() != n || burn_mask.as_ref().is_some_and(|m| m.len() != n) {
            return Err(Error::Shape(format!(
                "colour, temperature and mask planes must all be {width}×{height}"
            )));
        }
        if let Some(m) = &burn_mask {
            if let Some(bad) = m.iter().find(|&&v| v > 2) {
                return Err(Error::Data(format!("burn label {bad} not in {{0, 1, 2}}")));
            }
        }
        Ok(MultimodalImage {
            id: id.into(),
            width,
            height,
            color,
            temperature,
            burn_mask,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn burn_label(&self, i: usize) -> u8 {
        self.burn_mask.as_ref().map_or(0, |m| m[i])
    }
}

/// An 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RasterImage {
    pub fn rgb(width: usize, height: usize, pixels: &[[u8; 3]]) -> Self {
        RasterImage {
            width,
            height,
            channels: 3,
            data: pixels.iter().flatten().copied().collect(),
        }
    }

    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Self {
        RasterImage {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn rgb_pixels(&self) -> Vec<[u8; 3]> {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }
}

pub fn encode_netpbm(img: &RasterImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderParser<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(field, start as u64, "expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format(field, start as u64, "number out of range"))
    }
}

/// Parses binary PPM (`P6`) or PGM (`P5`) with maxval 255.
pub fn decode_netpbm(bytes: &[u8]) -> Result<RasterImage> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::format("magic", 0, "expected P5 or P6")),
    };
    let mut p = HeaderParser { bytes, pos: 2 };
    if !bytes.get(2).is_some_and(|c| c.is_ascii_whitespace() || *c == b'#') {
        return Err(Error::format("magic", 2, "expected whitespace after magic"));
    }
    let width = p.number("width")?;
    let height = p.number("height")?;
    let maxval_at = p.pos;
    let maxval = p.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format("maxval", maxval_at as u64, format!("maxval {maxval}, only 255 is supported")));
    }
    if !bytes.get(p.pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(Error::format("maxval", p.pos as u64, "expected one whitespace byte before the raster"));
    }
    p.pos += 1;
    if width == 0 || height == 0 {
        return Err(Error::format("width", 2, "zero image extent"));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format("width", 2, "image too large"))?;
    let raster = &bytes[p.pos..];
    if raster.len() != need {
        return Err(Error::format(
            "raster",
            (p.pos + raster.len().min(need)) as u64,
            format!("expected {need} raster bytes, found {}", raster.len()),
        ));
    }
    Ok(RasterImage {
        width,
        height,
        channels,
        data: raster.to_vec(),
    })
}

pub fn save_netpbm(img: &RasterImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_netpbm(img))
}

pub fn load_netpbm(path: &Path) -> Result<RasterImage> {
    decode_netpbm(&read_file(path)?)
}

pub const IRF_MAGIC: &[u8; 4] = b"IRF1";

pub fn encode_temperature(width: usize, height: usize, t: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.len());
    out.extend_from_slice(IRF_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for v in t {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns `(width, height, values)`.
pub fn decode_temperature(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.get(..4) != Some(IRF_MAGIC) {
        return Err(Error::format("magic", 0, "expected \"IRF1\""));
    }
    let u32_at = |at: usize, field: &str| -> Result<usize> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| Error::format(field, at as u64, "truncated header"))
    };
    let width = u32_at(4, "width")?;
    let height = u32_at(8, "height")?;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("width", 4, "map too large"))?;
    let body = &bytes[12..];
    if body.len() != need {
        return Err(Error::format(
            "values",
            (12 + body.len().min(need)) as u64,
            format!("expected {need} value bytes, found {}", body.len()),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, values))
}

const MASK_LEVELS: [u8; 3] = [0, 128, 255];

pub fn mask_to_raster(width: usize, height: usize, labels: &[u8]) -> RasterImage {
    RasterImage::gray(width, height, labels.iter().map(|&l| MASK_LEVELS[l as usize]).collect())
}

/// Maps stored levels {0, 128, 255} back to labels {0, 1, 2}.
pub fn raster_to_mask(img: &RasterImage, raster_offset: usize) -> Result<Vec<u8>> {
    if img.channels != 1 {
        return Err(Error::format("magic", 0, "mask must be a gray (P5) image"));
    }
    img.data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            MASK_LEVELS
                .iter()
                .position(|&l| l == v)
                .map(|l| l as u8)
                .ok_or_else(|| {
                    Error::format("raster", (raster_offset + i) as u64, format!("mask level {v} not in {{0, 128, 255}}"))
                })
        })
        .collect()
}

/// File names used for one multimodal sample inside a dataset directory.
pub fn sample_paths(dir: &Path, id: &str) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join(format!("{id}.ppm")),
        dir.join(format!("{id}.irf")),
        dir.join(format!("{id}.mask.pgm")),
    )
}

/// Writes colour, temperature and (if present) mask files.
pub fn save_multimodal(img: &MultimodalImage, dir: &Path) -> Result<()> {
    let (c, t, m) = sample_paths(dir, &img.id);
    save_netpbm(&RasterImage::rgb(img.width, img.height, &img.color), &c)?;
    write_atomic(&t, &encode_temperature(img.width, img.height, &img.temperature))?;
    if let Some(mask) = &img.burn_mask {
        save_netpbm(&mask_to_raster(img.width, img.height, mask), &m)?;
    }
    Ok(())
}

/// Reads a sample from explicit paths; the mask is optional.
pub fn load_multimodal(id: &str, color: &Path, temperature: &Path, mask: Option<&Path>) -> Result<MultimodalImage> {
    let rgb = load_netpbm(color)?;
    if rgb.channels != 3 {
        return Err(Error::format("magic", 0, format!("{} is not a colour (P6) image", color.display())));
    }
    let (tw, th, temps) = decode_temperature(&read_file(temperature)?)?;
    if (tw, th) != (rgb.width, rgb.height) {
        return Err(Error::Shape(format!(
            "temperature map {tw}×{th} does not match colour image {}×{}",
            rgb.width, rgb.height
        )));
    }
    let burn = match mask {
        Some(p) => {
            let bytes = read_file(p)?;
            let raster = decode_netpbm(&bytes)?;
            if (raster.width, raster.height) != (rgb.width, rgb.height) {
                return Err(Error::Shape(format!("mask {} has the wrong size", p.display())));
            }
            Some(raster_to_mask(&raster, bytes.len() - raster.data.len())?)
        }
        None => None,
    };
    MultimodalImage::new(id, rgb.width, rgb.height, rgb.rgb_pixels(), temps, burn)
}
