//! Timing harness for convolution kernel variants and whole training
//! epochs. Every variant must reproduce the reference output before any
//! timing is taken.

mod report;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{conv_forward, conv_forward_direct, ConvParams, KernelVariant};
use crate::models::{ModelConfig, Network};
use crate::tensor::{Shape4, Tensor};
use crate::train::{train_step, zero_velocity, Dataset, LossKind, TrainConfig, Targets};

pub use report::{parse_report_csv, render_report, render_table, report_csv, round_sig};

/// Maximum absolute difference tolerated between variant outputs.
pub const AGREEMENT_TOLERANCE: f64 = 1e-5;

pub type ConvKernel = Arc<dyn Fn(&Tensor<f32>, &ConvParams<f32>) -> Result<Tensor<f32>> + Send + Sync>;

/// Named convolution implementations available to the harness.
#[derive(Clone)]
pub struct KernelRegistry {
    kernels: BTreeMap<String, ConvKernel>,
}

impl Default for KernelRegistry {
    fn default() -> Self {
        let mut r = KernelRegistry {
            kernels: BTreeMap::new(),
        };
        r.register("direct", Arc::new(conv_forward_direct));
        for v in [KernelVariant::Gemm, KernelVariant::Threaded] {
            r.register(v.name(), Arc::new(move |x, p| Ok(conv_forward(x, p, v)?.0)));
        }
        r
    }
}

impl KernelRegistry {
    pub fn register(&mut self, name: impl Into<String>, kernel: ConvKernel) {
        self.kernels.insert(name.into(), kernel);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.kernels.keys().map(String::as_str)
    }

    fn get(&self, name: &str) -> Result<&ConvKernel> {
        self.kernels
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown kernel variant {name:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Workload {
    ConvForward { input: Shape4, conv: ConvGeometry },
    /// One epoch of SGD over `samples` random inputs with random targets.
    TrainEpoch {
        model: ModelConfig,
        samples: usize,
        batch_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchScenario {
    pub workload: Workload,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchScenario {
    fn default() -> Self {
        BenchScenario {
            workload: Workload::ConvForward {
                input: Shape4 {
                    n: 16,
                    c: 16,
                    h: 32,
                    w: 32,
                },
                conv: ConvGeometry {
                    in_channels: 16,
                    out_channels: 32,
                    kernel: 5,
                    stride: 1,
                    padding: 2,
                },
            },
            repetitions: 3,
            warmup: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub variant: String,
    pub threads: usize,
    /// Rounded to 9 significant digits.
    pub median_seconds: f64,
    /// Slowest median over this median, rounded to 9 significant digits.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Sorted by ascending speedup.
    pub entries: Vec<BenchEntry>,
    pub cpu_model: String,
    pub available_threads: usize,
    /// Free-form device tag; "cpu" for every built-in variant.
    pub device: String,
    /// Soft expectations that did not hold on this machine.
    pub warnings: Vec<String>,
}

/// Sorts entries, rounds medians and normalises speedups to the slowest.
pub fn build_report(mut timings: Vec<(String, usize, f64)>) -> Result<BenchReport> {
    if timings.is_empty() {
        return Err(Error::Config("no variant was timed".into()));
    }
    for t in &mut timings {
        if !(t.2 > 0.0 && t.2.is_finite()) {
            return Err(Error::Correctness(format!("non-positive time for {}", t.0)));
        }
        t.2 = round_sig(t.2);
    }
    let slowest = timings.iter().map(|t| t.2).fold(0.0, f64::max);
    let mut entries: Vec<BenchEntry> = timings
        .into_iter()
        .map(|(variant, threads, median)| BenchEntry {
            variant,
            threads,
            median_seconds: median,
            speedup: if median == slowest { 1.0 } else { round_sig(slowest / median) },
        })
        .collect();
    entries.sort_by(|a, b| a.speedup.total_cmp(&b.speedup).then_with(|| a.variant.cmp(&b.variant)));
    Ok(BenchReport {
        entries,
        cpu_model: cpu_model(),
        available_threads: available_threads(),
        device: "cpu".into(),
        warnings: Vec::new(),
    })
}

pub fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn cpu_model() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn time_runs(warmup: usize, reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(times))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a {threads}-thread pool: {e}")))
}

/// Thread counts swept for `variant`: only the multithreaded kernel uses
/// more than one.
fn thread_counts(variant: &str, threads: &[usize]) -> Vec<usize> {
    if variant == KernelVariant::Threaded.name() {
        let mut t: Vec<usize> = threads.to_vec();
        t.sort_unstable();
        t.dedup();
        t
    } else {
        vec![1]
    }
}

/// Verifies agreement of all `variants`, then times each one.
pub fn run_bench(scenario: &BenchScenario, variants: &[String], threads: &[usize], registry: &KernelRegistry) -> Result<BenchReport> {
    if scenario.repetitions < 3 || scenario.warmup < 1 {
        return Err(Error::Config("benchmarks need ≥ 3 repetitions and ≥ 1 warmup run".into()));
    }
    if variants.is_empty() {
        return Err(Error::Config("no variants requested".into()));
    }
    if threads.is_empty() || threads.contains(&0) {
        return Err(Error::Config("thread counts must be positive".into()));
    }
    let mut report = match &scenario.workload {
        Workload::ConvForward { input, conv } => bench_conv(scenario, *input, conv, variants, threads, registry)?,
        Workload::TrainEpoch {
            model,
            samples,
            batch_size,
        } => bench_train(scenario, model, *samples, *batch_size, variants, threads)?,
    };
    soft_checks(scenario, &mut report);
    Ok(report)
}

fn soft_checks(scenario: &BenchScenario, report: &mut BenchReport) {
    let batch = match &scenario.workload {
        Workload::ConvForward { input, .. } => input.n,
        Workload::TrainEpoch { batch_size, .. } => *batch_size,
    };
    let time_of = |name: &str| report.entries.iter().find(|e| e.variant == name).map(|e| e.median_seconds);
    if let (Some(d), Some(g)) = (time_of("direct"), time_of("gemm")) {
        if batch >= 16 && g > d {
            report
                .warnings
                .push(format!("gemm ({g:.3e} s) slower than direct ({d:.3e} s) at batch {batch}"));
        }
    }
}

fn bench_conv(
    scenario: &BenchScenario,
    input: Shape4,
    g: &ConvGeometry,
    variants: &[String],
    threads: &[usize],
    registry: &KernelRegistry,
) -> Result<BenchReport> {
    if input.c != g.in_channels {
        return Err(Error::Shape(format!(
            "scenario input has {} channels, conv expects {}",
            input.c, g.in_channels
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut params = ConvParams::init(g.in_channels, g.out_channels, (g.kernel, g.kernel), g.stride, g.padding, &mut rng)?;
    params.bias = Tensor::random_uniform(params.bias.shape(), 0.5, &mut rng);
    params.output_shape(input)?;
    let x = Tensor::random_uniform(input, 1.0, &mut rng);

    let kernels: Vec<(&String, &ConvKernel)> = variants
        .iter()
        .map(|v| registry.get(v).map(|k| (v, k)))
        .collect::<Result<_>>()?;
    let reference = conv_forward_direct(&x, &params)?;
    for (name, k) in &kernels {
        let out = k(&x, &params)?;
        let diff = out
            .max_abs_diff(&reference)
            .map_err(|_| Error::Correctness(format!("variant {name} produced shape {}", out.shape())))?;
        if !(diff <= AGREEMENT_TOLERANCE) {
            return Err(Error::Correctness(format!(
                "variant {name} differs from the direct loop by {diff:.3e} (tolerance {AGREEMENT_TOLERANCE:.0e})"
            )));
        }
    }
    let mut timings = Vec::new();
    for (name, k) in &kernels {
        for t in thread_counts(name, threads) {
            let p = pool(t)?;
            let median = p.install(|| time_runs(scenario.warmup, scenario.repetitions, || k(&x, &params).map(|_| ())))?;
            timings.push(((*name).clone(), t, median));
        }
    }
    build_report(timings)
}

fn bench_train(
    scenario: &BenchScenario,
    model: &ModelConfig,
    samples: usize,
    batch_size: usize,
    variants: &[String],
    threads: &[usize],
) -> Result<BenchReport> {
    let parsed: Vec<KernelVariant> = variants.iter().map(|v| v.parse()).collect::<Result<_>>()?;
    if samples == 0 || batch_size == 0 {
        return Err(Error::Config("training benchmark needs samples and a batch size".into()));
    }
    let spec = model.spec()?;
    let base = Network::new(spec.clone(), scenario.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let x = Tensor::random_uniform(spec.input.with_batch(samples)?, 1.0, &mut rng);
    let (targets, loss) = match base.head() {
        crate::models::Head::Softmax => (
            Targets::Classes((0..samples).map(|i| i % spec.output_dim).collect()),
            LossKind::CrossEntropy,
        ),
        crate::models::Head::Linear => (
            Targets::Keypoints {
                coords: vec![0.1; samples * spec.output_dim],
                mask: vec![true; samples * spec.output_dim],
            },
            LossKind::MeanSquaredError,
        ),
    };
    let data = Dataset::new(x, targets)?;

    let probe = data.inputs.select(&(0..batch_size.min(samples)).collect::<Vec<_>>())?;
    let mut reference: Option<Tensor<f32>> = None;
    for &v in &parsed {
        let mut net = base.clone();
        net.set_variant(v);
        let out = net.predict(&probe)?;
        match &reference {
            None => reference = Some(out),
            Some(r) => {
                let diff = out.max_abs_diff(r)?;
                if !(diff <= AGREEMENT_TOLERANCE) {
                    return Err(Error::Correctness(format!(
                        "variant {v} network output differs by {diff:.3e}"
                    )));
                }
            }
        }
    }
    let cfg = TrainConfig {
        batch_size,
        loss,
        deterministic: false,
        ..Default::default()
    };
    let idx: Vec<usize> = (0..samples).collect();
    let mut timings = Vec::new();
    for &v in &parsed {
        for t in thread_counts(v.name(), threads) {
            let p = pool(t)?;
            let median = p.install(|| {
                time_runs(scenario.warmup, scenario.repetitions, || {
                    let mut net = base.clone();
                    net.set_variant(v);
                    let mut vel = zero_velocity(&net);
                    for chunk in idx.chunks(batch_size) {
                        train_step(&mut net, &data.subset(chunk)?, &cfg, &mut vel)?;
                    }
                    Ok(())
                })
            })?;
            timings.push((v.name().to_string(), t, median));
        }
    }
    build_report(timings)
}
