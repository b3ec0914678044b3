//! Acceptance suite. Prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits nonzero if any fails. Criterion names given on the command line
//! (`cargo test --test acceptance -- AC4 AC5`) restrict the run.

// `!(x <= bound)` so that NaN fails
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use patchnet_core::bench::{parse_report_csv, render_report, run_bench, BenchScenario, ConvGeometry, KernelRegistry, Workload};
use patchnet_core::data::*;
use patchnet_core::layers::*;
use patchnet_core::metrics::*;
use patchnet_core::models::*;
use patchnet_core::train::*;
use patchnet_core::{Error, Shape4, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// AC1 ---------------------------------------------------------------------

const FD_STEP: f64 = 1e-3;
const GRAD_TOL: f64 = 1e-4;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn fd_worst(t: &mut Tensor<f64>, analytic: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..t.len() {
        let orig = t.data()[i];
        t.data_mut()[i] = orig + FD_STEP;
        let lp = f(t);
        t.data_mut()[i] = orig - FD_STEP;
        let lm = f(t);
        t.data_mut()[i] = orig;
        worst = worst.max(rel(analytic.data()[i], (lp - lm) / (2.0 * FD_STEP)));
    }
    worst
}

fn project(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn rnd(s: Shape4, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(s, 1.0, rng)
}

fn sh(n: usize, c: usize, h: usize, w: usize) -> Shape4 {
    Shape4::new(n, c, h, w).unwrap()
}

fn layer_gradients(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for &(k, stride, pad, hw) in &[(3, 1, 0, 5), (3, 2, 1, 7), (2, 2, 0, 6), (5, 1, 2, 6), (1, 1, 0, 4)] {
        let mut p = ConvParams::<f64>::init(2, 3, (k, k), stride, pad, rng).unwrap();
        p.bias = rnd(p.bias.shape(), rng);
        let mut x = rnd(sh(2, 2, hw, hw), rng);
        let (y, cache) = conv_forward(&x, &p, KernelVariant::Direct).unwrap();
        let r = rnd(y.shape(), rng);
        let (gx, g) = conv_backward(&r, cache, &p).unwrap();
        let pc = p.clone();
        worst = worst.max(fd_worst(&mut x, &gx, |x| project(&conv_forward(x, &pc, KernelVariant::Direct).unwrap().0, &r)));
        let xc = x.clone();
        let mut w = p.weights.clone();
        worst = worst.max(fd_worst(&mut w, &g.weights, |w| {
            let mut q = pc.clone();
            q.weights = w.clone();
            project(&conv_forward(&xc, &q, KernelVariant::Direct).unwrap().0, &r)
        }));
        let mut b = p.bias.clone();
        worst = worst.max(fd_worst(&mut b, &g.bias, |b| {
            let mut q = pc.clone();
            q.bias = b.clone();
            project(&conv_forward(&xc, &q, KernelVariant::Direct).unwrap().0, &r)
        }));
    }

    let mut p = DenseParams::<f64>::init(4, 3, rng).unwrap();
    p.bias = rnd(p.bias.shape(), rng);
    let mut x = rnd(Shape4::vector(3, 4).unwrap(), rng);
    let (y, cache) = dense_forward(&x, &p).unwrap();
    let r = rnd(y.shape(), rng);
    let (gx, g) = dense_backward(&r, cache, &p).unwrap();
    let pc = p.clone();
    worst = worst.max(fd_worst(&mut x, &gx, |x| project(&dense_forward(x, &pc).unwrap().0, &r)));
    let xc = x.clone();
    let mut w = p.weights.clone();
    worst = worst.max(fd_worst(&mut w, &g.weights, |w| {
        let mut q = pc.clone();
        q.weights = w.clone();
        project(&dense_forward(&xc, &q).unwrap().0, &r)
    }));

    for mode in [PoolMode::Max, PoolMode::Average] {
        let p = PoolParams::new(2, 2, mode).unwrap();
        // distinct values 0.01 apart keep every window's winner fixed
        let s = sh(2, 2, 6, 6);
        let mut v: Vec<f64> = (0..s.len()).map(|i| i as f64 * 0.01).collect();
        rand::seq::SliceRandom::shuffle(v.as_mut_slice(), rng);
        let mut x = Tensor::from_vec(s, v).unwrap();
        let (y, cache) = pool_forward(&x, &p).unwrap();
        let r = rnd(y.shape(), rng);
        let gx = pool_backward(&r, cache).unwrap();
        worst = worst.max(fd_worst(&mut x, &gx, |x| project(&pool_forward(x, &p).unwrap().0, &r)));
    }

    let mut x = rnd(sh(2, 3, 4, 4), rng);
    x.map_in_place(|v| if v.abs() < 0.01 { 0.5 } else { v });
    let (y, cache) = relu_forward(&x);
    let r = rnd(y.shape(), rng);
    let gx = relu_backward(&r, cache).unwrap();
    worst = worst.max(fd_worst(&mut x, &gx, |x| project(&relu_forward(x).0, &r)));

    let p = DropoutParams::new(0.6, Mode::Train).unwrap();
    let mut x = rnd(sh(2, 2, 3, 3), rng);
    let (y, cache) = dropout_forward(&x, &p, &mut ChaCha8Rng::seed_from_u64(99));
    let r = rnd(y.shape(), rng);
    let gx = dropout_backward(&r, cache).unwrap();
    worst = worst.max(fd_worst(&mut x, &gx, |x| {
        project(&dropout_forward(x, &p, &mut ChaCha8Rng::seed_from_u64(99)).0, &r)
    }));

    let mut logits = rnd(Shape4::vector(4, 5).unwrap(), rng);
    let labels = vec![0, 4, 2, 2];
    let (_, g) = cross_entropy_loss(&softmax(&logits).unwrap(), &labels).unwrap();
    worst = worst.max(fd_worst(&mut logits, &g, |z| cross_entropy_loss(&softmax(z).unwrap(), &labels).unwrap().0));

    let s = Shape4::vector(3, 6).unwrap();
    let mut pred = rnd(s, rng);
    let target = rnd(s, rng);
    let mask: Vec<bool> = (0..s.len()).map(|i| i % 3 != 0).collect();
    let (_, g) = mse_loss(&pred, &target, &mask).unwrap();
    worst = worst.max(fd_worst(&mut pred, &g, |p| mse_loss(p, &target, &mask).unwrap().0));
    Ok(worst)
}

fn tiny_lenet() -> NetworkSpec {
    NetworkSpec {
        name: "tiny-lenet".into(),
        input: sh(1, 2, 12, 12),
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
        input: sh(1, 3, 8, 8),
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

fn network_report(spec: NetworkSpec, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = spec.input.with_batch(2).unwrap();
    let k = spec.output_dim;
    let mut net = Network::<f64>::new(spec, seed).unwrap();
    for (_, p) in net.parameters_mut() {
        if p.shape().c == 1 && p.shape().h == 1 {
            p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.3..0.6));
        }
    }
    let x = rnd(input, &mut rng);
    let cfg = GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    };
    grad_check(&mut net, &x, &Objective::CrossEntropy(vec![0, k - 1]), &cfg).unwrap()
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let layer_worst = layer_gradients(&mut rng)?;
    ensure!(layer_worst < GRAD_TOL, "layer gradients: worst relative error {layer_worst:e}");
    let mut notes = vec![format!("layers worst {layer_worst:.1e}")];
    for (spec, seed) in [(tiny_lenet(), 1), (tiny_nin(), 2)] {
        let name = spec.name.clone();
        let r = network_report(spec, seed);
        for t in &r.tensors {
            ensure!(t.checked > 0, "{name}: no differentiable coordinate probed in {}", t.name);
        }
        ensure!(r.worst() < GRAD_TOL, "{name}: worst relative error {:e}", r.worst());
        notes.push(format!(
            "{name} worst {:.1e} over {} coords ({} straddling a kink skipped)",
            r.worst(),
            r.checked(),
            r.at_kinks()
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{}; {secs:.1} s", notes.join("; ")))
}

// AC2 ---------------------------------------------------------------------

fn conv_oracle(x: &Tensor<f32>, p: &ConvParams<f32>) -> Vec<f64> {
    let s = x.shape();
    let oh = (s.h + 2 * p.padding - p.kernel_h) / p.stride + 1;
    let ow = (s.w + 2 * p.padding - p.kernel_w) / p.stride + 1;
    let mut out = Vec::new();
    for n in 0..s.n {
        for co in 0..p.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p.bias.data()[co] as f64;
                    for ci in 0..p.in_channels {
                        for ky in 0..p.kernel_h {
                            for kx in 0..p.kernel_w {
                                let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                                let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                if iy >= 0 && ix >= 0 && iy < s.h as isize && ix < s.w as isize {
                                    acc += x.at(n, ci, iy as usize, ix as usize) as f64
                                        * p.weights.at(co, ci, ky, kx) as f64;
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn ac2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let mut configs = 0;
    let mut worst: f64 = 0.0;
    for k in [1, 2, 3, 5] {
        for stride in [1, 2] {
            for pad in [0, 1, 2] {
                for _ in 0..3 {
                    let cin = rng.random_range(1..=4);
                    let cout = rng.random_range(1..=5);
                    let n = rng.random_range(1..=3);
                    let mut extent = || loop {
                        let o: usize = rng.random_range(1..=7);
                        let padded = (o - 1) * stride + k;
                        if padded > 2 * pad {
                            return padded - 2 * pad;
                        }
                    };
                    let (h, w) = (extent(), extent());
                    let mut p = ConvParams::init(cin, cout, (k, k), stride, pad, &mut rng).unwrap();
                    p.bias = Tensor::random_uniform(p.bias.shape(), 0.5, &mut rng);
                    let x = Tensor::random_uniform(sh(n, cin, h, w), 1.0, &mut rng);
                    let truth = conv_oracle(&x, &p);
                    let outs = [
                        conv_forward_direct(&x, &p).unwrap(),
                        conv_forward(&x, &p, KernelVariant::Gemm).unwrap().0,
                        pool.install(|| conv_forward(&x, &p, KernelVariant::Threaded).unwrap().0),
                    ];
                    for o in &outs {
                        ensure!(o.len() == truth.len(), "k{k} s{stride} p{pad}: wrong output size");
                        for (a, b) in o.data().iter().zip(&truth) {
                            worst = worst.max((*a as f64 - b).abs());
                        }
                    }
                    for i in 0..3 {
                        for j in i + 1..3 {
                            worst = worst.max(outs[i].max_abs_diff(&outs[j]).unwrap());
                        }
                    }
                    configs += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(configs >= 50, "only {configs} configurations");
    ensure!(worst <= 1e-5, "max abs difference {worst:e}");
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{configs} configurations, max abs difference {worst:.1e}; {secs:.1} s"))
}

// AC3 ---------------------------------------------------------------------

fn literal_skin(rgb: [u8; 3], t: f32, burn: u8) -> bool {
    let (r, g, b) = (rgb[0] as f64, rgb[1] as f64, rgb[2] as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let u = 0.492 * (b - y);
    let v = 0.877 * (r - y);
    let rule1 = r > 95.0
        && r > g
        && r > b
        && r - g.min(b) > 15.0
        && (10.0..=110.0).contains(&v)
        && (-60.0..=10.0).contains(&u);
    rule1 && t > 32.0 && burn == 0
}

fn ac3() -> Outcome {
    let rules = SkinRuleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut pixels, mut positives) = (0, 0);
    for k in 0..100 {
        let n = 64 * 64;
        let color = (0..n)
            .map(|_| {
                if rng.random_bool(0.6) {
                    let r = rng.random_range(80..=255u8);
                    [r, rng.random_range(20..=r), rng.random_range(10..=r)]
                } else {
                    rng.random()
                }
            })
            .collect();
        let temperature = (0..n).map(|_| rng.random_range(28.0..38.0)).collect();
        let mask = (k % 2 == 0).then(|| (0..n).map(|_| rng.random_range(0..3u8)).collect());
        let img = MultimodalImage::new(format!("r{k}"), 64, 64, color, temperature, mask).unwrap();
        let got = skin_mask(&img, &rules);
        for i in 0..n {
            let want = literal_skin(img.color[i], img.temperature[i], img.burn_label(i));
            ensure!(got[i] == want, "random image {k}, pixel {i}: mask {} literal {want}", got[i]);
            positives += want as usize;
        }
        pixels += n;
    }
    ensure!(positives > 0, "no positive pixel exercised");
    let images = gen_burn_dataset(303, 50);
    let mut skin_total = 0;
    for img in &images {
        let got = skin_mask(img, &rules);
        for i in 0..img.pixel_count() {
            if got[i] {
                ensure!(rules.color_rule(img.color[i]), "{}: skin pixel {i} fails rule 1", img.id);
                ensure!(img.temperature[i] > 32.0, "{}: skin pixel {i} not above 32 °C", img.id);
                ensure!(img.burn_label(i) == 0, "{}: skin pixel {i} inside a burn", img.id);
                skin_total += 1;
            }
        }
    }
    Ok(format!(
        "{pixels} random pixels identical ({positives} skin); rule invariants hold on {} generated images ({skin_total} skin pixels)",
        images.len()
    ))
}

// AC4 ---------------------------------------------------------------------

const PATCH_SEED_TRAIN: u64 = 4001;
const PATCH_SEED_VAL: u64 = 4002;
const PATCH_EPOCHS: usize = 30;
const SKIN_BURN_MIN: f64 = 0.95;
const THREE_CLASS_MIN: f64 = 0.80;
const SEGMENT_AGREEMENT_MIN: f64 = 0.90;

fn patch_data(seed: u64, task: PatchTask, ch: InputChannels, total: usize) -> Dataset {
    let (set, _) = synthetic_patch_set(
        seed,
        task,
        32,
        &balanced_counts(total, task.num_classes()),
        20,
        ch,
        &BurnGenConfig::default(),
        &SkinRuleConfig::default(),
    )
    .unwrap();
    Dataset::from_patches(&set).unwrap()
}

fn train_patches(task: PatchTask, ch: InputChannels) -> Result<(Network, f64), String> {
    let train = patch_data(PATCH_SEED_TRAIN, task, ch, 2000);
    let val = patch_data(PATCH_SEED_VAL, task, ch, 500);
    let mut net = build_lenet_classifier(32, ch.count(), task.num_classes(), PATCH_SEED_TRAIN).unwrap();
    let cfg = TrainConfig {
        epochs: PATCH_EPOCHS,
        seed: PATCH_SEED_TRAIN,
        ..TrainConfig::default()
    };
    let log = train_with_validation(&mut net, &train, &val, &cfg, |r| {
        eprintln!("  {task:?} epoch {:>2}  loss {:.4}  val {:.4}", r.epoch, r.train_loss, r.val_metric);
    })
    .map_err(|e| e.to_string())?;
    Ok((net, log.last().map_or(0.0, |r| r.val_metric)))
}

fn ac4() -> Outcome {
    let start = Instant::now();
    let (net2, acc2) = train_patches(PatchTask::SkinVsBurn, InputChannels::Rgb)?;
    let (_, acc3) = train_patches(PatchTask::SkinLightSerious, InputChannels::RgbIr)?;
    let secs = start.elapsed().as_secs_f64();

    let rules = SkinRuleConfig::default();
    let (mut agree, mut blocks) = (0, 0);
    for img in gen_burn_dataset(4003, 5) {
        let seg = segment_image(&img, &net2, 16, PatchTask::SkinVsBurn).unwrap();
        let truth = ground_truth_blocks(&img, &seg, PatchTask::SkinVsBurn, &rules);
        for (t, &p) in truth.iter().zip(&seg.block_classes) {
            if let Some(t) = t {
                blocks += 1;
                agree += (*t == p) as usize;
            }
        }
    }
    let agreement = agree as f64 / blocks as f64;

    ensure!(acc2 >= SKIN_BURN_MIN, "2-class validation accuracy {acc2:.4} < {SKIN_BURN_MIN}");
    ensure!(acc3 >= THREE_CLASS_MIN, "3-class validation accuracy {acc3:.4} < {THREE_CLASS_MIN}");
    ensure!(
        agreement >= SEGMENT_AGREEMENT_MIN,
        "segmentation agrees on {agreement:.4} of {blocks} labelled blocks"
    );
    ensure!(secs < 600.0, "training took {secs:.0} s");
    Ok(format!(
        "2-class {acc2:.4}, 3-class {acc3:.4} after {PATCH_EPOCHS} epochs; segmentation agreement {agreement:.4} over {blocks} blocks; {secs:.0} s"
    ))
}

// AC5 ---------------------------------------------------------------------

const FACE_COUNT: usize = 2000;
const FACE_SEEDS: [u64; 3] = [1, 2, 3];
const FACE_EPOCHS: usize = 8;
const FACE_LR: f64 = 0.05;
const HIT_RATE_MIN: f64 = 0.90;

fn train_faces(modified: bool, seed: u64, train: &Dataset, val: &Dataset) -> Result<f64, String> {
    let mut net = build_keypoint_net(modified, seed).unwrap();
    let cfg = TrainConfig {
        learning_rate: FACE_LR,
        epochs: FACE_EPOCHS,
        seed,
        loss: LossKind::MeanSquaredError,
        ..TrainConfig::default()
    };
    let log = train_with_validation(&mut net, train, val, &cfg, |r| {
        eprintln!(
            "  seed {seed} {} epoch {:>2}  loss {:.5}  hit rate {:.4}  {:.0}s",
            if modified { "modified" } else { "baseline" },
            r.epoch,
            r.train_loss,
            r.val_metric,
            r.seconds
        );
    })
    .map_err(|e| e.to_string())?;
    Ok(log.last().map_or(0.0, |r| r.val_metric))
}

fn ac5() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for seed in FACE_SEEDS {
        let data = Dataset::from_keypoints(&gen_keypoint_dataset(seed, FACE_COUNT)).unwrap();
        let (train, val) = data.split_80_20(seed).unwrap();
        let base = train_faces(false, seed, &train, &val)?;
        let modified = train_faces(true, seed, &train, &val)?;
        if base < HIT_RATE_MIN {
            failures.push(format!("seed {seed}: baseline hit rate {base:.4} < {HIT_RATE_MIN}"));
        }
        if modified < base {
            failures.push(format!("seed {seed}: modified {modified:.4} below baseline {base:.4}"));
        }
        rows.push(format!("seed {seed}: baseline {base:.4}, modified {modified:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(failures.is_empty(), "{}", failures.join("; "));
    Ok(format!("{} after {FACE_EPOCHS} epochs; {secs:.0} s", rows.join("; ")))
}

// AC6 ---------------------------------------------------------------------

fn ac6() -> Outcome {
    for k in [2usize, 3, 18] {
        let probs = softmax(&Tensor::<f64>::zeros(Shape4::vector(4, k).unwrap())).unwrap();
        let labels: Vec<usize> = (0..4).map(|i| i % k).collect();
        let (loss, _) = cross_entropy_loss(&probs, &labels).unwrap();
        ensure!((loss - (k as f64).ln()).abs() <= 1e-6, "K = {k}: loss {loss}, ln K {}", (k as f64).ln());
    }
    let cm = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![2, 4]]).unwrap();
    ensure!(accuracy(&cm).unwrap() == 0.7, "accuracy of [[3,1],[2,4]]");

    let mut truth = vec![0.0; 2 * NUM_KEYPOINTS];
    for i in 0..NUM_KEYPOINTS {
        truth[2 * i] = 10.0 + 4.0 * i as f64;
        truth[2 * i + 1] = 50.0;
    }
    truth[2 * LEFT_EYE_CENTER] = 70.0;
    truth[2 * LEFT_EYE_CENTER + 1] = 30.0;
    truth[2 * RIGHT_EYE_CENTER] = 10.0;
    truth[2 * RIGHT_EYE_CENTER + 1] = 30.0;
    let all = vec![true; NUM_KEYPOINTS];
    for agg in [Aggregation::Mean, Aggregation::Max] {
        let e = interocular_error_coords(&truth, &truth, &all, agg).unwrap();
        ensure!(e == 0.0, "{agg:?}: pred = truth gives {e}");
        let shifted: Vec<f64> = truth.iter().enumerate().map(|(i, v)| if i % 2 == 0 { v + 60.0 } else { *v }).collect();
        let e = interocular_error_coords(&shifted, &truth, &all, agg).unwrap();
        ensure!((e - 1.0).abs() < 1e-12, "{agg:?}: offset by the inter-ocular distance gives {e}");
    }
    // eyes exact, one other present keypoint 6 px off, IOD 60
    let mut present = vec![false; NUM_KEYPOINTS];
    present[LEFT_EYE_CENTER] = true;
    present[RIGHT_EYE_CENTER] = true;
    present[10] = true;
    let mut pred = truth.clone();
    pred[2 * 10 + 1] += 6.0;
    let max = interocular_error_coords(&pred, &truth, &present, Aggregation::Max).unwrap();
    ensure!((max - 0.1).abs() < 1e-12, "max aggregation gives {max}");
    let mean = interocular_error_coords(&pred, &truth, &present, Aggregation::Mean).unwrap();
    ensure!((mean - 6.0 / 3.0 / 60.0).abs() < 1e-12, "mean aggregation gives {mean}");
    let mut no_eye = present.clone();
    no_eye[LEFT_EYE_CENTER] = false;
    ensure!(interocular_error_coords(&pred, &truth, &no_eye, Aggregation::Mean).is_err(), "missing eye accepted");

    ensure!(hit_rate(&[0.0, 0.0], 0.1).unwrap() == 1.0, "all-zero errors");
    ensure!(hit_rate(&[0.05, 0.15], 0.1).unwrap() == 0.5, "[0.05, 0.15]");
    ensure!(hit_rate(&[0.1], 0.1).unwrap() == 0.0, "error exactly at the threshold counted as a hit");
    ensure!(hit_rate(&[], 0.1).is_err(), "empty error list accepted");
    Ok("ln K for K in {2, 3, 18}, accuracy, inter-ocular and hit-rate examples exact".into())
}

// AC7 ---------------------------------------------------------------------

fn ac7() -> Outcome {
    let scenario = BenchScenario {
        workload: Workload::ConvForward {
            input: sh(8, 3, 24, 24),
            conv: ConvGeometry {
                in_channels: 3,
                out_channels: 8,
                kernel: 5,
                stride: 1,
                padding: 2,
            },
        },
        repetitions: 5,
        warmup: 1,
        seed: 7,
    };
    let variants: Vec<String> = KernelRegistry::default().names().map(String::from).collect();

    let mut broken = KernelRegistry::default();
    broken.register(
        "threaded",
        Arc::new(|x, p| {
            let mut y = conv_forward(x, p, KernelVariant::Threaded)?.0;
            let last = y.len() - 1;
            y.data_mut()[last] -= 1e-3;
            Ok(y)
        }),
    );
    match run_bench(&scenario, &variants, &[1, 2], &broken) {
        Err(Error::Correctness(_)) => {}
        Err(e) => return Err(format!("corrupted variant gave the wrong error: {e}")),
        Ok(_) => return Err("corrupted variant was timed".into()),
    }

    let report = run_bench(&scenario, &variants, &[1, 2], &KernelRegistry::default()).map_err(|e| e.to_string())?;
    let slowest = report
        .entries
        .iter()
        .max_by(|a, b| a.median_seconds.total_cmp(&b.median_seconds))
        .unwrap();
    ensure!(slowest.speedup == 1.0, "slowest variant has speedup {}", slowest.speedup);
    ensure!(report.entries.iter().all(|e| e.speedup >= 1.0), "speedup below 1");
    let (_, csv) = render_report(&report).map_err(|e| e.to_string())?;
    let back = parse_report_csv(&csv).map_err(|e| e.to_string())?;
    ensure!(back == report.entries, "CSV round trip changed the entries");
    Ok(format!(
        "corrupted variant rejected; {} entries, slowest {} at 1.0, CSV round trip exact",
        report.entries.len(),
        slowest.variant
    ))
}

// AC8 ---------------------------------------------------------------------

fn patchnet(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_patchnet"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "patchnet {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// The log without its wall-clock column.
fn log_without_seconds(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn ac8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let config = root.join("run.json");
    std::fs::write(
        &config,
        r#"{
  "seed": 8,
  "dataset": {"kind": "burn", "count": 6, "quota_per_image": 8},
  "model": {"builder": "lenet", "input_side": 32, "in_channels": 3, "num_classes": 2},
  "train": {"epochs": 2, "variant": "threaded"}
}"#,
    )
    .map_err(|e| e.to_string())?;
    let cfg = config.to_str().unwrap();
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();

    for kind in ["burn", "keypoint"] {
        let (a, b) = (p(&format!("{kind}_a")), p(&format!("{kind}_b")));
        for dir in [&a, &b] {
            patchnet(&["--config", cfg, "--deterministic", "gen", "--kind", kind, "--count", "6", "--out", dir])?;
        }
        let (fa, fb) = (dir_contents(Path::new(&a)), dir_contents(Path::new(&b)));
        ensure!(!fa.is_empty() && fa == fb, "gen --kind {kind} output differs between runs");
    }

    let manifest = format!("{}/manifest.json", p("burn_a"));
    for run in ["1", "2"] {
        patchnet(&[
            "--config",
            cfg,
            "--deterministic",
            "--threads",
            "2",
            "train",
            "--manifest",
            &manifest,
            "--weights",
            &p(&format!("w{run}.bin")),
            "--log",
            &p(&format!("log{run}.csv")),
        ])?;
    }
    let w1 = std::fs::read(root.join("w1.bin")).unwrap();
    let w2 = std::fs::read(root.join("w2.bin")).unwrap();
    ensure!(w1 == w2, "weight files differ between runs");
    let (l1, l2) = (log_without_seconds(&root.join("log1.csv")), log_without_seconds(&root.join("log2.csv")));
    ensure!(l1 == l2, "training logs differ between runs:\n{l1}\n{l2}");
    Ok(format!(
        "gen (burn, keypoint) byte-identical; train weights ({} bytes) byte-identical, logs equal apart from wall time",
        w1.len()
    ))
}

// AC9 ---------------------------------------------------------------------

fn ac9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let nets = [
        build_lenet_classifier(32, 3, 2, 91).unwrap(),
        build_lenet_classifier(64, 4, 3, 92).unwrap(),
        build_nin_classifier(64, 3, 18, 93).unwrap(),
        build_keypoint_net(false, 94).unwrap(),
        build_keypoint_net(true, 95).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for net in &nets {
        let name = &net.spec().name;
        let path = tmp.path().join(format!("{name}.bin"));
        save_weights(&net.export_params(), &path).map_err(|e| e.to_string())?;
        let loaded = load_weights(&path).map_err(|e| e.to_string())?;
        let bits = |p: &NamedTensors| -> Vec<u32> { p.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect() };
        ensure!(bits(&loaded) == bits(&net.export_params()), "{name}: values changed");
        let back = Network::with_params(net.spec().clone(), &loaded).map_err(|e| e.to_string())?;
        let s = net.spec().input;
        let x = Tensor::random_uniform(sh(2, s.c, s.h, s.w), 1.0, &mut rng);
        ensure!(net.predict(&x).unwrap() == back.predict(&x).unwrap(), "{name}: predictions changed");
    }

    let good = encode_weights(&nets[0].export_params()).unwrap();
    let expect = |bytes: &[u8], field: &str, what: &str| -> Result<(), String> {
        match decode_weights(bytes) {
            Err(Error::Format { field: f, .. }) if f == field => Ok(()),
            other => Err(format!("{what}: expected a {field} error, got {other:?}")),
        }
    };
    let mut bad = good.clone();
    bad[0] = b'X';
    expect(&bad, "magic", "bad magic")?;
    let mut bad = good.clone();
    bad[4..8].copy_from_slice(&7u32.to_le_bytes());
    expect(&bad, "version", "unknown version")?;
    let mut bad = good.clone();
    bad[8..12].copy_from_slice(&1000u32.to_le_bytes());
    ensure!(decode_weights(&bad).is_err(), "inflated tensor count accepted");
    expect(&good[..10], "tensor count", "truncated header")?;
    expect(&good[..good.len() - 1], "values", "truncated values")?;
    let mut bad = good.clone();
    bad.extend_from_slice(b"junk");
    expect(&bad, "trailer", "trailing bytes")?;
    Ok(format!("{} builds round-trip bit-identically; corrupted headers rejected", nets.len()))
}

// -------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("AC1", "gradient oracles", ac1),
        ("AC2", "kernel equivalence", ac2),
        ("AC3", "skin-rule oracle", ac3),
        ("AC4", "patch classification", ac4),
        ("AC5", "keypoint pipeline", ac5),
        ("AC6", "metric examples", ac6),
        ("AC7", "benchmark integrity", ac7),
        ("AC8", "determinism", ac8),
        ("AC9", "serialization", ac9),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, title, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f.eq_ignore_ascii_case(id)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {id} {title}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
