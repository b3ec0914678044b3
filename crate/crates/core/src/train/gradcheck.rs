use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{cross_entropy_loss, mse_loss};
use crate::error::{Error, Result};
use crate::models::{NamedTensors, Network};
use crate::tensor::Tensor;

/// Scalar function of the network output whose gradient is checked.
#[derive(Debug, Clone)]
pub enum Objective {
    /// Cross-entropy of a softmax head against class labels.
    CrossEntropy(Vec<usize>),
    /// Masked mean squared error against a target of the output's shape.
    Mse { target: Tensor<f64>, mask: Vec<bool> },
    /// `Σ out ⊙ weights`, for heads or layers without a natural loss.
    Projection(Tensor<f64>),
}

impl Objective {
    /// Loss and its gradient with respect to the head input.
    pub fn eval(&self, out: &Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
        match self {
            Objective::CrossEntropy(labels) => cross_entropy_loss(out, labels),
            Objective::Mse { target, mask } => mse_loss(out, target, mask),
            Objective::Projection(w) => Ok((out.dot(w)?, w.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Samples this many coordinates per tensor; `None` checks all.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-3,
            max_coords_per_tensor: None,
            seed: 0,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorReport {
    pub name: String,
    /// Coordinates whose perturbations left every ReLU mask and max-pool
    /// winner unchanged.
    pub checked: usize,
    pub max_rel_error: f64,
    pub over_tolerance: usize,
    /// Coordinates where a perturbation crossed a ReLU or max-pool kink, so
    /// the central difference straddles a non-differentiable point.
    pub at_kinks: usize,
    pub kink_max_rel_error: f64,
    pub kink_over_tolerance: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorReport>,
}

impl GradCheckReport {
    /// Worst error over coordinates away from kinks.
    pub fn worst(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    /// Worst error over every probed coordinate.
    pub fn worst_overall(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.kink_max_rel_error)
            .fold(self.worst(), f64::max)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn at_kinks(&self) -> usize {
        self.tensors.iter().map(|t| t.at_kinks).sum()
    }

    /// Fraction of all probed coordinates, kinks included, within the tolerance.
    pub fn fraction_within(&self) -> f64 {
        let over: usize = self
            .tensors
            .iter()
            .map(|t| t.over_tolerance + t.kink_over_tolerance)
            .sum();
        let n = self.checked() + self.at_kinks();
        if n == 0 {
            1.0
        } else {
            1.0 - over as f64 / n as f64
        }
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn loss_at(net: &mut Network<f64>, x: &Tensor<f64>, obj: &Objective, seed: u64) -> Result<(f64, u64)> {
    net.reseed_dropout(seed);
    let out = net.forward(x)?;
    let sig = net.activation_signature();
    Ok((obj.eval(&out)?.0, sig))
}

/// Analytic gradients of `obj` after one forward/backward pass.
pub fn analytic_gradients(net: &mut Network<f64>, x: &Tensor<f64>, obj: &Objective, seed: u64) -> Result<NamedTensors<f64>> {
    net.reseed_dropout(seed);
    let out = net.forward(x)?;
    let (_, g) = obj.eval(&out)?;
    net.backward(&g)
}

/// Compares the network's backward pass with central differences of `obj`.
pub fn grad_check(net: &mut Network<f64>, x: &Tensor<f64>, obj: &Objective, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(cfg.step > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let analytic = analytic_gradients(net, x, obj, cfg.seed)?;
    let (_, base_sig) = loss_at(net, x, obj, cfg.seed)?;
    let mut pick = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();
    let mut tensors = Vec::with_capacity(names.len());
    for (ti, name) in names.iter().enumerate() {
        let ga = analytic
            .get(name)
            .ok_or_else(|| Error::Correctness(format!("backward returned no gradient for {name}")))?
            .clone();
        let len = ga.len();
        let coords: Vec<usize> = match cfg.max_coords_per_tensor {
            Some(m) if m < len => {
                let mut v = index::sample(&mut pick, len, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        let mut rep = TensorReport {
            name: name.clone(),
            checked: 0,
            max_rel_error: 0.0,
            over_tolerance: 0,
            at_kinks: 0,
            kink_max_rel_error: 0.0,
            kink_over_tolerance: 0,
        };
        for i in coords {
            let orig = net.parameters()[ti].1.data()[i];
            let eval_at = |v: f64, net: &mut Network<f64>| -> Result<(f64, u64)> {
                net.parameters_mut()[ti].1.data_mut()[i] = v;
                loss_at(net, x, obj, cfg.seed)
            };
            let (lp, sp) = eval_at(orig + cfg.step, net)?;
            let (lm, sm) = eval_at(orig - cfg.step, net)?;
            net.parameters_mut()[ti].1.data_mut()[i] = orig;
            let e = relative_error(ga.data()[i], (lp - lm) / (2.0 * cfg.step));
            let over = usize::from(e > cfg.tolerance);
            if sp != base_sig || sm != base_sig {
                rep.at_kinks += 1;
                rep.kink_max_rel_error = rep.kink_max_rel_error.max(e);
                rep.kink_over_tolerance += over;
            } else {
                rep.checked += 1;
                rep.max_rel_error = rep.max_rel_error.max(e);
                rep.over_tolerance += over;
            }
        }
        tensors.push(rep);
    }
    Ok(GradCheckReport {
        tolerance: cfg.tolerance,
        tensors,
    })
}
