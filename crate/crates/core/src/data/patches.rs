//! Patch sampling around "pixels of interest" and the network input encoding.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::MultimodalImage;
use super::skin::{skin_mask, SkinRuleConfig};
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

/// Which planes feed the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputChannels {
    /// R, G, B scaled to [0, 1].
    Rgb,
    /// R, G, B scaled to [0, 1] plus temperature as (t − 20) / 20.
    RgbIr,
}

impl InputChannels {
    pub fn count(self) -> usize {
        match self {
            InputChannels::Rgb => 3,
            InputChannels::RgbIr => 4,
        }
    }
}

/// Classification problem over multimodal images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchTask {
    /// 0 = skin, 1 = burn of any severity.
    SkinVsBurn,
    /// 0 = skin, 1 = light burn, 2 = serious burn.
    SkinLightSerious,
}

impl PatchTask {
    pub fn num_classes(self) -> usize {
        match self {
            PatchTask::SkinVsBurn => 2,
            PatchTask::SkinLightSerious => 3,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            PatchTask::SkinVsBurn => &["skin", "burn"],
            PatchTask::SkinLightSerious => &["skin", "light_burn", "serious_burn"],
        }
    }

    /// Per-class pixel predicates: skin from the rule mask, burns from the
    /// burn annotation.
    pub fn class_regions(self, img: &MultimodalImage, rules: &SkinRuleConfig) -> Vec<Vec<bool>> {
        let skin = skin_mask(img, rules);
        let n = img.pixel_count();
        let burn = |f: fn(u8) -> bool| (0..n).map(|i| f(img.burn_label(i))).collect::<Vec<bool>>();
        match self {
            PatchTask::SkinVsBurn => vec![skin, burn(|l| l > 0)],
            PatchTask::SkinLightSerious => vec![skin, burn(|l| l == 1), burn(|l| l == 2)],
        }
    }

    /// Class of a single pixel, if it belongs to one.
    pub fn pixel_class(self, skin: bool, burn_label: u8) -> Option<usize> {
        match (self, burn_label) {
            (_, 0) if skin => Some(0),
            (_, 0) => None,
            (PatchTask::SkinVsBurn, _) => Some(1),
            (PatchTask::SkinLightSerious, l) => Some(l as usize),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSource {
    pub image: usize,
    /// Patch centre; the patch covers `[x − S/2, x + S/2)` horizontally.
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub size: usize,
    pub channels: InputChannels,
    /// `(N, C, S, S)`; `None` when empty.
    pub patches: Option<Tensor<f32>>,
    pub labels: Vec<usize>,
    pub sources: Vec<PatchSource>,
    /// Per class, how many patches the quota asked for but could not be drawn.
    pub shortfall: Vec<usize>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// True if a `size`-square patch centred on `(x, y)` lies inside the image.
pub fn patch_fits(width: usize, height: usize, x: usize, y: usize, size: usize) -> bool {
    let h = size / 2;
    x >= h && y >= h && x - h + size <= width && y - h + size <= height
}

/// Writes the encoded `size`-square patch centred on `(x, y)` into `out`
/// (length `C·S·S`, channel-major).
pub fn encode_patch(img: &MultimodalImage, x: usize, y: usize, size: usize, ch: InputChannels, out: &mut [f32]) {
    let (x0, y0) = (x - size / 2, y - size / 2);
    let plane = size * size;
    for dy in 0..size {
        for dx in 0..size {
            let i = img.index(x0 + dx, y0 + dy);
            let o = dy * size + dx;
            let [r, g, b] = img.color[i];
            out[o] = r as f32 / 255.0;
            out[plane + o] = g as f32 / 255.0;
            out[2 * plane + o] = b as f32 / 255.0;
            if ch == InputChannels::RgbIr {
                out[3 * plane + o] = (img.temperature[i] - 20.0) / 20.0;
            }
        }
    }
}

/// Samples up to `quota` patch centres per class, without replacement, from
/// the pixels of each class region where the patch fits in the image.
pub fn extract_patches<R: Rng + ?Sized>(
    img: &MultimodalImage,
    regions: &[Vec<bool>],
    size: usize,
    quota: usize,
    channels: InputChannels,
    rng: &mut R,
) -> Result<PatchSet> {
    extract_from_many(std::slice::from_ref(img), |_| regions.to_vec(), size, quota, channels, rng)
}

/// [`extract_patches`] over many images, with the regions computed per image.
/// Source indices refer to positions in `images`.
pub fn extract_from_many<R: Rng + ?Sized>(
    images: &[MultimodalImage],
    mut regions_of: impl FnMut(&MultimodalImage) -> Vec<Vec<bool>>,
    size: usize,
    quota: usize,
    channels: InputChannels,
    rng: &mut R,
) -> Result<PatchSet> {
    if size == 0 {
        return Err(Error::Config("patch size must be positive".into()));
    }
    let mut labels = Vec::new();
    let mut sources = Vec::new();
    let mut shortfall = Vec::new();
    for (k, img) in images.iter().enumerate() {
        if size > img.width || size > img.height {
            return Err(Error::Geometry(format!(
                "{size}-pixel patches do not fit a {}×{} image",
                img.width, img.height
            )));
        }
        let regions = regions_of(img);
        if shortfall.len() < regions.len() {
            shortfall.resize(regions.len(), 0);
        }
        for (class, region) in regions.iter().enumerate() {
            if region.len() != img.pixel_count() {
                return Err(Error::Shape(format!("class {class} mask has the wrong size")));
            }
            if quota == 0 {
                continue;
            }
            let eligible: Vec<usize> = (0..img.pixel_count())
                .filter(|&i| region[i] && patch_fits(img.width, img.height, i % img.width, i / img.width, size))
                .collect();
            let take = quota.min(eligible.len());
            shortfall[class] += quota - take;
            let mut picks: Vec<usize> = index::sample(rng, eligible.len(), take).into_vec();
            picks.sort_unstable();
            for p in picks {
                let i = eligible[p];
                labels.push(class);
                sources.push(PatchSource {
                    image: k,
                    x: i % img.width,
                    y: i / img.width,
                });
            }
        }
    }
    let c = channels.count();
    let patches = if labels.is_empty() {
        None
    } else {
        let shape = Shape4::new(labels.len(), c, size, size)?;
        let mut t = Tensor::zeros(shape);
        for (n, s) in sources.iter().enumerate() {
            encode_patch(&images[s.image], s.x, s.y, size, channels, t.item_mut(n));
        }
        Some(t)
    };
    Ok(PatchSet {
        size,
        channels,
        patches,
        labels,
        sources,
        shortfall,
    })
}


/// Splits `total` across `classes` as evenly as possible, earlier classes
/// taking the remainder.
pub fn balanced_counts(total: usize, classes: usize) -> Vec<usize> {
    (0..classes)
        .map(|i| total / classes + usize::from(i < total % classes))
        .collect()
}

/// Draws burn images from `seed` (10 at a time) and samples patches until
/// class `i` of `task` has `counts[i]` patches, keeping exactly that many.
/// Each image contributes at most `quota_per_image` patches per class.
pub fn synthetic_patch_set(
    seed: u64,
    task: PatchTask,
    size: usize,
    counts: &[usize],
    quota_per_image: usize,
    channels: InputChannels,
    gen: &super::synth::BurnGenConfig,
    rules: &SkinRuleConfig,
) -> Result<(PatchSet, Vec<MultimodalImage>)> {
    use rand::SeedableRng;
    let k = task.num_classes();
    if counts.len() != k {
        return Err(Error::Config(format!("{k} classes but {} class counts", counts.len())));
    }
    let wanted: usize = counts.iter().sum();
    if quota_per_image == 0 && wanted > 0 {
        return Err(Error::Config("per-image quota must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_9a7c4);
    let mut images = Vec::new();
    let mut sources: Vec<Vec<PatchSource>> = vec![Vec::new(); k];
    let mut batch = 0u64;
    while sources.iter().zip(counts).any(|(s, &c)| s.len() < c) {
        if batch > 10_000 {
            return Err(Error::Data("generator cannot fill the class quotas".into()));
        }
        let fresh = super::synth::gen_burn_dataset_with(seed.wrapping_add(batch.wrapping_mul(0x9E37_79B9)), 10, gen);
        batch += 1;
        let offset = images.len();
        let set = extract_from_many(&fresh, |img| task.class_regions(img, rules), size, quota_per_image, channels, &mut rng)?;
        for (label, mut src) in set.labels.into_iter().zip(set.sources) {
            src.image += offset;
            if sources[label].len() < counts[label] {
                sources[label].push(src);
            }
        }
        images.extend(fresh);
    }
    let mut labels = Vec::with_capacity(wanted);
    let mut all = Vec::with_capacity(wanted);
    for (label, src) in sources.into_iter().enumerate() {
        labels.extend(std::iter::repeat_n(label, src.len()));
        all.extend(src);
    }
    let patches = if all.is_empty() {
        None
    } else {
        let mut t = Tensor::zeros(Shape4::new(all.len(), channels.count(), size, size)?);
        for (n, s) in all.iter().enumerate() {
            encode_patch(&images[s.image], s.x, s.y, size, channels, t.item_mut(n));
        }
        Some(t)
    };
    Ok((
        PatchSet {
            size,
            channels,
            patches,
            labels,
            sources: all,
            shortfall: vec![0; k],
        },
        images,
    ))
}
