//! Finite-difference oracles for every trainable layer and for whole networks.

use patchnet_core::layers::{
    conv_backward, conv_forward, dense_backward, dense_forward, dropout_backward, dropout_forward, pool_backward,
    pool_forward, relu_backward, relu_forward, softmax, ConvParams, DenseParams, DropoutParams, KernelVariant, Mode,
    PoolMode, PoolParams,
};
use patchnet_core::models::{keypoint_spec, lenet_spec, nin_spec, BuildOptions, LayerSpec, Network, NetworkSpec};
use patchnet_core::train::{cross_entropy_loss, grad_check, mse_loss, GradCheckConfig, Objective};
use patchnet_core::{Shape4, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn shape(n: usize, c: usize, h: usize, w: usize) -> Shape4 {
    Shape4::new(n, c, h, w).unwrap()
}

fn random(s: Shape4, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(s, 1.0, rng)
}

/// Central differences of `f` with respect to every entry of `t`, compared
/// against `analytic`. Returns the worst relative error.
fn fd_worst(t: &mut Tensor<f64>, analytic: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> f64 {
    assert_eq!(t.shape(), analytic.shape());
    let mut worst: f64 = 0.0;
    for i in 0..t.len() {
        let orig = t.data()[i];
        t.data_mut()[i] = orig + STEP;
        let lp = f(t);
        t.data_mut()[i] = orig - STEP;
        let lm = f(t);
        t.data_mut()[i] = orig;
        worst = worst.max(rel(analytic.data()[i], (lp - lm) / (2.0 * STEP)));
    }
    worst
}

fn project(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn conv_gradients_over_geometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(k, stride, pad, hw) in &[(3, 1, 0, 5), (3, 2, 1, 7), (2, 2, 0, 6), (5, 1, 2, 6), (1, 1, 0, 4), (1, 2, 2, 5), (2, 1, 2, 3)] {
        let mut p = ConvParams::<f64>::init(2, 3, (k, k), stride, pad, &mut rng).unwrap();
        p.bias = random(p.bias.shape(), &mut rng);
        let mut x = random(shape(2, 2, hw, hw), &mut rng);
        let (y, cache) = conv_forward(&x, &p, KernelVariant::Direct).unwrap();
        let r = random(y.shape(), &mut rng);
        let (gx, g) = conv_backward(&r, cache, &p).unwrap();

        let pc = p.clone();
        let ex = fd_worst(&mut x, &gx, |x| project(&conv_forward(x, &pc, KernelVariant::Direct).unwrap().0, &r));
        let xc = x.clone();
        let mut w = p.weights.clone();
        let ew = fd_worst(&mut w, &g.weights, |w| {
            let mut q = pc.clone();
            q.weights = w.clone();
            project(&conv_forward(&xc, &q, KernelVariant::Direct).unwrap().0, &r)
        });
        let mut b = p.bias.clone();
        let eb = fd_worst(&mut b, &g.bias, |b| {
            let mut q = pc.clone();
            q.bias = b.clone();
            project(&conv_forward(&xc, &q, KernelVariant::Direct).unwrap().0, &r)
        });
        assert!(ex < TOL && ew < TOL && eb < TOL, "k{k} s{stride} p{pad}: {ex} {ew} {eb}");
    }
}

#[test]
fn dense_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut p = DenseParams::<f64>::init(4, 3, &mut rng).unwrap();
    p.bias = random(p.bias.shape(), &mut rng);
    let mut x = random(Shape4::vector(3, 4).unwrap(), &mut rng);
    let (y, cache) = dense_forward(&x, &p).unwrap();
    let r = random(y.shape(), &mut rng);
    let (gx, g) = dense_backward(&r, cache, &p).unwrap();
    let pc = p.clone();
    assert!(fd_worst(&mut x, &gx, |x| project(&dense_forward(x, &pc).unwrap().0, &r)) < TOL);
    let xc = x.clone();
    let mut w = p.weights.clone();
    let ew = fd_worst(&mut w, &g.weights, |w| {
        let mut q = pc.clone();
        q.weights = w.clone();
        project(&dense_forward(&xc, &q).unwrap().0, &r)
    });
    let mut b = p.bias.clone();
    let eb = fd_worst(&mut b, &g.bias, |b| {
        let mut q = pc.clone();
        q.bias = b.clone();
        project(&dense_forward(&xc, &q).unwrap().0, &r)
    });
    assert!(ew < TOL && eb < TOL, "{ew} {eb}");
}

/// Distinct values at least 0.01 apart, so a 1e-3 step never changes a winner.
fn separated(s: Shape4, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut v: Vec<f64> = (0..s.len()).map(|i| i as f64 * 0.01 - 0.3).collect();
    v.shuffle(rng);
    Tensor::from_vec(s, v).unwrap()
}

#[test]
fn pool_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for mode in [PoolMode::Max, PoolMode::Average] {
        for (window, stride, hw) in [(2, 2, 6), (2, 1, 5), (3, 3, 6)] {
            let p = PoolParams::new(window, stride, mode).unwrap();
            let mut x = separated(shape(2, 2, hw, hw), &mut rng);
            let (y, cache) = pool_forward(&x, &p).unwrap();
            let r = random(y.shape(), &mut rng);
            let gx = pool_backward(&r, cache).unwrap();
            let e = fd_worst(&mut x, &gx, |x| project(&pool_forward(x, &p).unwrap().0, &r));
            assert!(e < TOL, "{mode:?} {window}/{stride}: {e}");
        }
    }
}

#[test]
fn relu_gradient_away_from_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut x = random(shape(2, 3, 4, 4), &mut rng);
    x.map_in_place(|v| if v.abs() < 0.01 { 0.5 } else { v });
    let (y, cache) = relu_forward(&x);
    let r = random(y.shape(), &mut rng);
    let gx = relu_backward(&r, cache).unwrap();
    assert!(fd_worst(&mut x, &gx, |x| project(&relu_forward(x).0, &r)) < TOL);
}

#[test]
fn dropout_gradient_with_fixed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let p = DropoutParams::new(0.6, Mode::Train).unwrap();
    let mut x = random(shape(2, 2, 3, 3), &mut rng);
    let (y, cache) = dropout_forward(&x, &p, &mut ChaCha8Rng::seed_from_u64(99));
    let r = random(y.shape(), &mut rng);
    let gx = dropout_backward(&r, cache).unwrap();
    let e = fd_worst(&mut x, &gx, |x| {
        project(&dropout_forward(x, &p, &mut ChaCha8Rng::seed_from_u64(99)).0, &r)
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn cross_entropy_gradient_is_with_respect_to_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let s = Shape4::vector(4, 5).unwrap();
    let mut logits = random(s, &mut rng);
    logits.map_in_place(|v| 3.0 * v);
    let labels = vec![0, 4, 2, 2];
    let (_, g) = cross_entropy_loss(&softmax(&logits).unwrap(), &labels).unwrap();
    let e = fd_worst(&mut logits, &g, |z| cross_entropy_loss(&softmax(z).unwrap(), &labels).unwrap().0);
    assert!(e < TOL, "{e}");
}

#[test]
fn masked_mse_matches_direct_recomputation_and_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = Shape4::vector(3, 6).unwrap();
    let mut pred = random(s, &mut rng);
    let target = random(s, &mut rng);
    let mask: Vec<bool> = (0..s.len()).map(|i| i % 2 == 0).collect();
    let (loss, g) = mse_loss(&pred, &target, &mask).unwrap();

    let kept: Vec<f64> = (0..s.len())
        .filter(|&i| mask[i])
        .map(|i| (pred.data()[i] - target.data()[i]).powi(2))
        .collect();
    let direct = kept.iter().sum::<f64>() / kept.len() as f64;
    assert!((loss - direct).abs() < 1e-12);
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            assert_eq!(g.data()[i], 0.0);
        }
    }
    assert!(fd_worst(&mut pred, &g, |p| mse_loss(p, &target, &mask).unwrap().0) < 1e-6);
}

fn tiny_lenet() -> NetworkSpec {
    NetworkSpec {
        name: "tiny-lenet".into(),
        input: shape(1, 2, 12, 12),
        layers: vec![
            LayerSpec::conv(3, 3, 0),
            LayerSpec::max_pool(2, 2),
            LayerSpec::Relu,
            LayerSpec::conv(4, 3, 1),
            LayerSpec::max_pool(5, 5),
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { out_dim: 5 },
            LayerSpec::Relu,
            LayerSpec::Dense { out_dim: 3 },
            LayerSpec::SoftmaxHead,
        ],
        output_dim: 3,
    }
}

fn tiny_nin() -> NetworkSpec {
    NetworkSpec {
        name: "tiny-nin".into(),
        input: shape(1, 3, 8, 8),
        layers: vec![
            LayerSpec::MlpConv {
                channels: [4, 3, 3],
                kernel: 3,
                padding: 1,
            },
            LayerSpec::max_pool(2, 2),
            LayerSpec::Dropout { keep_probability: 0.7 },
            LayerSpec::MlpConv {
                channels: [3, 3, 2],
                kernel: 3,
                padding: 1,
            },
            LayerSpec::GlobalAvgPool,
            LayerSpec::SoftmaxHead,
        ],
        output_dim: 2,
    }
}

fn check_network(spec: NetworkSpec, coords: Option<usize>, seed: u64, min_smooth: usize, every_tensor: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = spec.name.clone();
    let input = spec.input.with_batch(2).unwrap();
    let out_dim = spec.output_dim;
    let mut net = Network::<f64>::new(spec, seed).unwrap();
    // Nonzero biases keep ReLUs away from exact zeros.
    for (_, p) in net.parameters_mut() {
        if p.shape().c == 1 && p.shape().h == 1 {
            p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.3..0.6));
        }
    }
    let x = random(input, &mut rng);
    let obj = match net.head() {
        patchnet_core::models::Head::Softmax => Objective::CrossEntropy(vec![0, out_dim - 1]),
        patchnet_core::models::Head::Linear => Objective::Mse {
            target: random(Shape4::vector(2, out_dim).unwrap(), &mut rng),
            mask: (0..2 * out_dim).map(|i| i % 7 != 3).collect(),
        },
    };
    let cfg = GradCheckConfig {
        max_coords_per_tensor: coords,
        seed,
        ..GradCheckConfig::default()
    };
    let report = grad_check(&mut net, &x, &obj, &cfg).unwrap();
    // Coordinates whose ±step perturbation crosses a ReLU or max-pool kink
    // have no meaningful central difference and are reported separately.
    assert!(report.checked() >= min_smooth, "{name}: only {} smooth coordinates", report.checked());
    if every_tensor {
        for t in &report.tensors {
            assert!(t.checked > 0, "{name}: no smooth coordinate in {}", t.name);
        }
    }
    assert!(report.worst() < TOL, "{name}: worst relative error {:e}", report.worst());
}

#[test]
fn tiny_lenet_like_network() {
    check_network(tiny_lenet(), None, 1, 100, true);
}

#[test]
fn tiny_nin_like_network_with_dropout() {
    check_network(tiny_nin(), None, 2, 100, true);
}

#[test]
fn down_scaled_builders() {
    let opts = |d| BuildOptions {
        width_divisor: d,
        nin_width: 8,
        ..BuildOptions::default()
    };
    check_network(lenet_spec(32, 3, 2, &opts(6)).unwrap(), Some(48), 3, 50, false);
    check_network(lenet_spec(64, 4, 3, &opts(6)).unwrap(), Some(48), 4, 50, false);
    check_network(nin_spec(32, 4, 3, &opts(4)).unwrap(), Some(48), 5, 50, false);
    let avg = BuildOptions {
        pool_mode: PoolMode::Average,
        dropout: true,
        ..opts(4)
    };
    check_network(nin_spec(32, 3, 2, &avg).unwrap(), Some(48), 6, 50, false);
    check_network(keypoint_spec(false, &opts(16)).unwrap(), Some(48), 7, 50, false);
    check_network(keypoint_spec(true, &opts(32)).unwrap(), Some(48), 8, 50, false);
}

#[test]
fn checker_detects_a_sign_flipped_backward() {
    let mut net = Network::<f64>::new(tiny_lenet(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(shape(2, 2, 12, 12), &mut rng);
    let obj = Objective::CrossEntropy(vec![1, 2]);
    net.inject_gradient_sign_flip(true);
    let report = grad_check(&mut net, &x, &obj, &GradCheckConfig::default()).unwrap();
    assert!(report.worst() > 0.1, "{}", report.worst());
}

#[test]
fn linear_head_with_mse_is_nearly_exact() {
    let spec = NetworkSpec {
        name: "linear".into(),
        input: shape(1, 6, 1, 1),
        layers: vec![LayerSpec::Dense { out_dim: 4 }, LayerSpec::LinearHead],
        output_dim: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut net = Network::<f64>::new(spec, 10).unwrap();
    let x = random(shape(3, 6, 1, 1), &mut rng);
    let obj = Objective::Mse {
        target: random(Shape4::vector(3, 4).unwrap(), &mut rng),
        mask: vec![true; 12],
    };
    let report = grad_check(&mut net, &x, &obj, &GradCheckConfig::default()).unwrap();
    assert!(report.worst() < 1e-6, "{}", report.worst());
}
