use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{KeypointSample, PatchSet, FACE_SIDE, NUM_KEYPOINTS};
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

/// Half-extent of the keypoint frame: pixel `c` maps to `(c − 47.5) / 47.5`.
pub const KEYPOINT_HALF: f32 = (FACE_SIDE as f32 - 1.0) / 2.0;

pub fn normalize_coord(c: f32) -> f32 {
    (c - KEYPOINT_HALF) / KEYPOINT_HALF
}

pub fn denormalize_coord(v: f32) -> f32 {
    v * KEYPOINT_HALF + KEYPOINT_HALF
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// Per sample, `2·15` normalised coordinates and matching presence flags.
    Keypoints { coords: Vec<f32>, mask: Vec<bool> },
}

/// Inputs with their targets; item `i` of `inputs` belongs to target `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor<f32>,
    pub targets: Targets,
}

impl Dataset {
    pub fn new(inputs: Tensor<f32>, targets: Targets) -> Result<Self> {
        let n = inputs.shape().n;
        let ok = match &targets {
            Targets::Classes(l) => l.len() == n,
            Targets::Keypoints { coords, mask } => coords.len() == mask.len() && coords.len() % n == 0,
        };
        if !ok {
            return Err(Error::Shape(format!("targets do not match {n} inputs")));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn from_patches(set: &PatchSet) -> Result<Self> {
        let inputs = set
            .patches
            .clone()
            .ok_or_else(|| Error::Data("patch set is empty".into()))?;
        Self::new(inputs, Targets::Classes(set.labels.clone()))
    }

    /// Gray levels and coordinates both mapped to [−1, 1].
    pub fn from_keypoints(samples: &[KeypointSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("no keypoint samples".into()));
        }
        let shape = Shape4::new(samples.len(), 1, FACE_SIDE, FACE_SIDE)?;
        let mut data = Vec::with_capacity(shape.len());
        let mut coords = Vec::with_capacity(samples.len() * 2 * NUM_KEYPOINTS);
        let mut mask = Vec::with_capacity(coords.capacity());
        for s in samples {
            data.extend(s.image().iter().map(|&v| v as f32 / 127.5 - 1.0));
            for (&(x, y), &p) in s.keypoints().iter().zip(s.presence()) {
                coords.extend([normalize_coord(x), normalize_coord(y)]);
                mask.extend([p, p]);
            }
        }
        Self::new(Tensor::from_vec(shape, data)?, Targets::Keypoints { coords, mask })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape().n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let inputs = self.inputs.select(idx)?;
        let targets = match &self.targets {
            Targets::Classes(l) => Targets::Classes(idx.iter().map(|&i| l[i]).collect()),
            Targets::Keypoints { coords, mask } => {
                let k = coords.len() / self.len();
                Targets::Keypoints {
                    coords: idx.iter().flat_map(|&i| coords[i * k..(i + 1) * k].iter().copied()).collect(),
                    mask: idx.iter().flat_map(|&i| mask[i * k..(i + 1) * k].iter().copied()).collect(),
                }
            }
        };
        Ok(Dataset { inputs, targets })
    }

    /// Seeded shuffle, then the first 80% train and the rest validation.
    pub fn split_80_20(&self, seed: u64) -> Result<(Self, Self)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = self.len() - self.len() / 5;
        let (a, b) = order.split_at(n_train);
        if a.is_empty() || b.is_empty() {
            return Err(Error::Data(format!(
                "{} samples are too few for a train/validation split",
                self.len()
            )));
        }
        Ok((self.subset(a)?, self.subset(b)?))
    }
}
