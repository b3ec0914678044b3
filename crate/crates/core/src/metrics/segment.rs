//! Block-wise segmentation: classify a grid of patches and paint each
//! block's label over the image.

use serde::{Deserialize, Serialize};

use super::classification::argmax_rows;
use crate::data::{encode_patch, skin_mask, InputChannels, MultimodalImage, PatchTask, RasterImage, SkinRuleConfig};
use crate::error::{Error, Result};
use crate::models::Network;
use crate::tensor::{Shape4, Tensor};

/// Region labels of a segmentation map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Unknown,
    Skin,
    LightBurn,
    /// Serious burn, or a burn of unspecified severity in the two-class task.
    Burn,
}

impl Region {
    pub fn from_class(task: PatchTask, class: usize) -> Region {
        match (task, class) {
            (_, 0) => Region::Skin,
            (PatchTask::SkinLightSerious, 1) => Region::LightBurn,
            _ => Region::Burn,
        }
    }

    /// Gray level used in label-map PGM files.
    pub fn code(self) -> u8 {
        match self {
            Region::Unknown => 0,
            Region::Skin => 85,
            Region::LightBurn => 170,
            Region::Burn => 255,
        }
    }

    pub fn color(self) -> [u8; 3] {
        match self {
            Region::Unknown => [128, 128, 128],
            Region::Skin => [0, 0, 255],
            Region::LightBurn => [255, 128, 0],
            Region::Burn => [255, 0, 0],
        }
    }
}

pub const OVERLAY_ALPHA: f32 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub grid_cols: usize,
    pub grid_rows: usize,
    /// Row-major over the block grid.
    pub block_classes: Vec<usize>,
    /// Per pixel.
    pub regions: Vec<Region>,
    /// Colour image with the region palette blended on top.
    pub overlay: Vec<[u8; 3]>,
}

impl Segmentation {
    pub fn label_raster(&self) -> RasterImage {
        RasterImage::gray(self.width, self.height, self.regions.iter().map(|r| r.code()).collect())
    }

    pub fn overlay_raster(&self) -> RasterImage {
        RasterImage::rgb(self.width, self.height, &self.overlay)
    }

    /// Pixel rectangle `[x0, x1) × [y0, y1)` painted for block `(col, row)`:
    /// a `min(stride, S)` square centred on the patch centre.
    pub fn cell(&self, col: usize, row: usize) -> (usize, usize, usize, usize) {
        block_cell(self.patch_size, self.stride, col, row)
    }
}

fn block_cell(size: usize, stride: usize, col: usize, row: usize) -> (usize, usize, usize, usize) {
    let cell = stride.min(size);
    let off = size / 2 - cell / 2;
    let (x0, y0) = (col * stride + off, row * stride + off);
    (x0, x0 + cell, y0, y0 + cell)
}

/// Number of patch positions along an extent.
pub fn grid_extent(extent: usize, size: usize, stride: usize) -> usize {
    if extent < size {
        0
    } else {
        (extent - size) / stride + 1
    }
}

/// Classifies every grid patch with `classify` (which receives batches of
/// encoded patches and returns one class index per patch).
pub fn segment_image_with(
    img: &MultimodalImage,
    patch_size: usize,
    stride: usize,
    channels: InputChannels,
    task: PatchTask,
    mut classify: impl FnMut(&Tensor<f32>) -> Result<Vec<usize>>,
) -> Result<Segmentation> {
    if stride == 0 {
        return Err(Error::Config("segmentation stride must be positive".into()));
    }
    if patch_size == 0 || patch_size > img.width || patch_size > img.height {
        return Err(Error::Geometry(format!(
            "{patch_size}-pixel patches do not fit a {}×{} image",
            img.width, img.height
        )));
    }
    let cols = grid_extent(img.width, patch_size, stride);
    let rows = grid_extent(img.height, patch_size, stride);
    let half = patch_size / 2;
    let centers: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (c * stride + half, r * stride + half)))
        .collect();
    const CHUNK: usize = 64;
    let mut classes = Vec::with_capacity(centers.len());
    for chunk in centers.chunks(CHUNK) {
        let mut t = Tensor::zeros(Shape4::new(chunk.len(), channels.count(), patch_size, patch_size)?);
        for (n, &(x, y)) in chunk.iter().enumerate() {
            encode_patch(img, x, y, patch_size, channels, t.item_mut(n));
        }
        let got = classify(&t)?;
        if got.len() != chunk.len() {
            return Err(Error::Shape("classifier returned the wrong number of labels".into()));
        }
        classes.extend(got);
    }
    let mut regions = vec![Region::Unknown; img.pixel_count()];
    for (b, &class) in classes.iter().enumerate() {
        let (x0, x1, y0, y1) = block_cell(patch_size, stride, b % cols, b / cols);
        let region = Region::from_class(task, class);
        for y in y0..y1 {
            regions[y * img.width + x0..y * img.width + x1].fill(region);
        }
    }
    let overlay = img
        .color
        .iter()
        .zip(&regions)
        .map(|(px, r)| {
            let c = r.color();
            std::array::from_fn(|k| (px[k] as f32 * (1.0 - OVERLAY_ALPHA) + c[k] as f32 * OVERLAY_ALPHA).round() as u8)
        })
        .collect();
    Ok(Segmentation {
        width: img.width,
        height: img.height,
        patch_size,
        stride,
        grid_cols: cols,
        grid_rows: rows,
        block_classes: classes,
        regions,
        overlay,
    })
}

/// [`segment_image_with`] using a classifier network; patch size and input
/// channels are read from the network's input geometry.
pub fn segment_image(img: &MultimodalImage, net: &Network, stride: usize, task: PatchTask) -> Result<Segmentation> {
    let input = net.spec().input;
    if input.h != input.w {
        return Err(Error::Config("segmentation needs a square patch classifier".into()));
    }
    let channels = match input.c {
        3 => InputChannels::Rgb,
        4 => InputChannels::RgbIr,
        c => return Err(Error::Config(format!("cannot feed a {c}-channel network from a colour+IR image"))),
    };
    if net.spec().output_dim != task.num_classes() {
        return Err(Error::Config(format!(
            "network has {} outputs, task has {} classes",
            net.spec().output_dim,
            task.num_classes()
        )));
    }
    segment_image_with(img, input.h, stride, channels, task, |t| Ok(argmax_rows(&net.predict(t)?)))
}

/// Ground-truth class per block by majority vote over its cell, counting
/// skin (rule mask) and annotated burn pixels. `None` where neither
/// dominates the other pixels of the cell.
pub fn ground_truth_blocks(img: &MultimodalImage, seg: &Segmentation, task: PatchTask, rules: &SkinRuleConfig) -> Vec<Option<usize>> {
    let skin = skin_mask(img, rules);
    let k = task.num_classes();
    (0..seg.grid_rows * seg.grid_cols)
        .map(|b| {
            let (x0, x1, y0, y1) = seg.cell(b % seg.grid_cols, b / seg.grid_cols);
            let mut votes = vec![0usize; k + 1];
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = y * img.width + x;
                    match task.pixel_class(skin[i], img.burn_label(i)) {
                        Some(c) => votes[c] += 1,
                        None => votes[k] += 1,
                    }
                }
            }
            let best = (0..=k).max_by_key(|&c| (votes[c], std::cmp::Reverse(c))).unwrap();
            (best < k).then_some(best)
        })
        .collect()
}
