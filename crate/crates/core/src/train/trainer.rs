use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Targets};
use super::loss::{cross_entropy_loss, mse_loss, LossKind};
use super::sgd::{sgd_step_network, zero_velocity};
use crate::data::NUM_KEYPOINTS;
use crate::error::{Error, Result};
use crate::layers::{KernelVariant, Mode};
use crate::metrics::{accuracy, argmax_rows, hit_rate, interocular_error_coords, Aggregation, ConfusionMatrix, HIT_THRESHOLD};
use crate::models::{Head, Network};
use crate::tensor::{Shape4, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub shuffle: bool,
    /// Convolution kernel used for training passes.
    pub variant: KernelVariant,
    /// Forbids the multithreaded kernel, which is replaced by its serial
    /// counterpart.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            loss: LossKind::CrossEntropy,
            shuffle: true,
            variant: KernelVariant::Gemm,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }

    fn effective_variant(&self) -> KernelVariant {
        match self.variant {
            KernelVariant::Threaded if self.deterministic => KernelVariant::Gemm,
            v => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy (classification) or hit rate at 0.1 (keypoints).
    pub val_metric: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_metric,seconds\n");
        for r in &self.epochs {
            writeln!(s, "{},{:.9e},{:.9e},{:.6}", r.epoch, r.train_loss, r.val_metric, r.seconds).unwrap();
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn check_head(net: &Network, data: &Dataset, loss: LossKind) -> Result<()> {
    match (net.head(), loss, &data.targets) {
        (Head::Softmax, LossKind::CrossEntropy, Targets::Classes(_)) => Ok(()),
        (Head::Linear, LossKind::MeanSquaredError, Targets::Keypoints { .. }) => Ok(()),
        (head, loss, _) => Err(Error::Config(format!(
            "{head:?} head cannot be trained with {loss:?} on this dataset"
        ))),
    }
}

/// Splits `data` 80/20 with the run seed, then trains on the first part.
pub fn train(net: &mut Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    let (tr, val) = data.split_80_20(cfg.seed)?;
    train_with_validation(net, &tr, &val, cfg, |_| {})
}

/// Minibatch SGD for `cfg.epochs` epochs, evaluating on `val` after each.
pub fn train_with_validation(
    net: &mut Network,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    check_head(net, train, cfg.loss)?;
    check_head(net, val, cfg.loss)?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    net.set_variant(cfg.effective_variant());
    net.set_mode(Mode::Train);
    net.reseed_dropout(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = zero_velocity(net);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.subset(chunk)?;
            let loss = train_step(net, &batch, cfg, &mut velocity)?;
            if !loss.is_finite() {
                return Err(Error::Correctness(format!("training loss became {loss} in epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
        }
        net.set_mode(Mode::Inference);
        let val_metric = evaluate(net, val)?;
        net.set_mode(Mode::Train);
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_metric,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        log.epochs.push(rec);
    }
    net.set_mode(Mode::Inference);
    Ok(log)
}

/// One forward/backward/update on `batch`; returns the batch loss.
pub fn train_step(
    net: &mut Network,
    batch: &Dataset,
    cfg: &TrainConfig,
    velocity: &mut crate::models::NamedTensors,
) -> Result<f64> {
    let out = net.forward(&batch.inputs)?;
    let (loss, grad) = batch_loss(&out, &batch.targets)?;
    let grads = net.backward(&grad)?;
    sgd_step_network(net, &grads, velocity, cfg.learning_rate, cfg.momentum)?;
    Ok(loss)
}

/// Loss and gradient for a network output against dataset targets.
pub fn batch_loss(out: &Tensor<f32>, targets: &Targets) -> Result<(f64, Tensor<f32>)> {
    match targets {
        Targets::Classes(labels) => cross_entropy_loss(out, labels),
        Targets::Keypoints { coords, mask } => {
            let t = Tensor::from_vec(out.shape(), coords.clone())?;
            mse_loss(out, &t, mask)
        }
    }
}

/// Inference-mode predictions for the whole input, in chunks.
pub fn predict_all(net: &Network, inputs: &Tensor<f32>) -> Result<Tensor<f32>> {
    const CHUNK: usize = 64;
    let n = inputs.shape().n;
    let mut data = Vec::new();
    let mut k = 0;
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let out = net.predict(&inputs.select(&idx)?)?;
        k = out.shape().item_len();
        data.extend_from_slice(out.data());
    }
    Tensor::from_vec(Shape4::vector(n, k)?, data)
}

/// Accuracy for class targets; hit rate at 0.1 (mean aggregation) for
/// keypoints. Samples without both eye centres are skipped.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let out = predict_all(net, &data.inputs)?;
    match &data.targets {
        Targets::Classes(labels) => {
            let cm = ConfusionMatrix::from_predictions(out.shape().c, labels, &argmax_rows(&out))?;
            accuracy(&cm)
        }
        Targets::Keypoints { coords, mask } => {
            let errors = keypoint_errors(&out, coords, mask, Aggregation::Mean)?;
            hit_rate(&errors, HIT_THRESHOLD)
        }
    }
}

/// Per-sample inter-ocular errors for normalised predictions and targets.
pub fn keypoint_errors(out: &Tensor<f32>, coords: &[f32], mask: &[bool], agg: Aggregation) -> Result<Vec<f64>> {
    let k = 2 * NUM_KEYPOINTS;
    if out.shape().item_len() != k || out.len() != coords.len() {
        return Err(Error::Shape("keypoint output does not match targets".into()));
    }
    let mut errors = Vec::with_capacity(out.shape().n);
    for ((p, t), m) in out.data().chunks_exact(k).zip(coords.chunks_exact(k)).zip(mask.chunks_exact(k)) {
        let present: Vec<bool> = m.iter().step_by(2).copied().collect();
        if !present[crate::data::LEFT_EYE_CENTER] || !present[crate::data::RIGHT_EYE_CENTER] {
            continue;
        }
        let p: Vec<f64> = p.iter().map(|&v| v as f64).collect();
        let t: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        errors.push(interocular_error_coords(&p, &t, &present, agg)?);
    }
    Ok(errors)
}
