use std::collections::HashMap;
use std::path::{Path, PathBuf};

use patchnet_core::bench::{available_threads, render_report, run_bench, KernelRegistry};
use patchnet_core::data::{
    extract_from_many, gen_burn_dataset_with, gen_keypoint_dataset_with, load_multimodal, load_netpbm,
    parse_keypoint_csv, save_multimodal, save_netpbm, split_tags, write_keypoint_csv, DatasetKind,
    InputChannels, KeypointRecord, KeypointSample, Manifest, MultimodalImage, PatchTask, RasterImage,
    SampleRecord, Split, FACE_SIDE, NUM_KEYPOINTS,
};
use patchnet_core::io::{read_file, write_atomic};
use patchnet_core::metrics::{
    accuracy, argmax_rows, segment_image, ConfusionMatrix, KeypointEvalResult, Region,
};
use patchnet_core::models::{load_weights, save_weights, Head, ModelConfig, Network};
use patchnet_core::train::{denormalize_coord, keypoint_errors, predict_all, train_with_validation, Dataset, Targets};
use patchnet_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{DatasetSection, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";

pub fn gen(cfg: &RunConfig, kind: Option<DatasetKind>, count: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut ds = cfg.dataset();
    if let Some(k) = kind {
        ds.kind = k;
    }
    if let Some(c) = count {
        ds.count = c;
    }
    let dir = out
        .or(ds.dir.clone())
        .ok_or_else(|| Error::Config("gen needs --out or dataset.dir".into()))?;
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    let seed = cfg.seed();
    let tags = split_tags(ds.count, seed);
    let manifest = match ds.kind {
        DatasetKind::Burn => {
            let images = gen_burn_dataset_with(seed, ds.count, &ds.burn);
            let mut samples = Vec::with_capacity(images.len());
            for (img, &split) in images.iter().zip(&tags) {
                save_multimodal(img, &dir)?;
                samples.push(SampleRecord {
                    id: img.id.clone(),
                    split,
                    image: format!("{}.ppm", img.id),
                    temperature: Some(format!("{}.irf", img.id)),
                    mask: img.burn_mask.as_ref().map(|_| format!("{}.mask.pgm", img.id)),
                });
            }
            Manifest {
                kind: DatasetKind::Burn,
                seed,
                annotations: None,
                samples,
            }
        }
        DatasetKind::Keypoint => {
            let faces = gen_keypoint_dataset_with(seed, ds.count, &ds.faces);
            let mut samples = Vec::with_capacity(faces.len());
            let mut records = Vec::with_capacity(faces.len());
            for (i, (face, &split)) in faces.iter().zip(&tags).enumerate() {
                let id = format!("face_{i:05}");
                let file = format!("{id}.pgm");
                save_netpbm(&RasterImage::gray(FACE_SIDE, FACE_SIDE, face.image().to_vec()), &dir.join(&file))?;
                records.push(KeypointRecord {
                    keypoints: *face.keypoints(),
                    presence: *face.presence(),
                    image: file.clone(),
                });
                samples.push(SampleRecord {
                    id,
                    split,
                    image: file,
                    temperature: None,
                    mask: None,
                });
            }
            write_keypoint_csv(&records, &dir.join(ANNOTATIONS_FILE))?;
            Manifest {
                kind: DatasetKind::Keypoint,
                seed,
                annotations: Some(ANNOTATIONS_FILE.into()),
                samples,
            }
        }
    };
    manifest.save(&dir.join(MANIFEST_FILE))?;
    println!(
        "wrote {} {:?} samples to {}",
        manifest.samples.len(),
        manifest.kind,
        dir.display()
    );
    Ok(())
}

fn manifest_path(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or(cfg.dataset().manifest)
        .ok_or_else(|| Error::Config("no manifest given (--manifest or dataset.manifest)".into()))
}

/// Loads one split of a manifest as a training/evaluation set.
fn load_split(manifest_file: &Path, split: Split, ds: &DatasetSection, seed: u64) -> Result<Dataset> {
    let manifest = Manifest::load(manifest_file)?;
    let base = manifest_file.parent().unwrap_or(Path::new("."));
    let records: Vec<&SampleRecord> = manifest.split(split).collect();
    if records.is_empty() {
        return Err(Error::Data(format!(
            "{} has no {split:?} samples",
            manifest_file.display()
        )));
    }
    match manifest.kind {
        DatasetKind::Burn => {
            let images = records
                .iter()
                .map(|r| load_burn_sample(base, r))
                .collect::<Result<Vec<_>>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(split as u64);
            let set = extract_from_many(
                &images,
                |img| ds.task.class_regions(img, &ds.skin_rules),
                ds.patch_size,
                ds.quota_per_image,
                ds.channels,
                &mut rng,
            )?;
            Dataset::from_patches(&set)
        }
        DatasetKind::Keypoint => {
            let file = manifest
                .annotations
                .as_ref()
                .ok_or_else(|| Error::Data("keypoint manifest lists no annotation file".into()))?;
            let by_image: HashMap<String, KeypointRecord> = parse_keypoint_csv(&read_file(&base.join(file))?)?
                .into_iter()
                .map(|r| (r.image.clone(), r))
                .collect();
            let samples = records
                .iter()
                .map(|r| {
                    let ann = by_image
                        .get(&r.image)
                        .ok_or_else(|| Error::Data(format!("no annotation row for {}", r.image)))?;
                    KeypointSample::new(load_face(&base.join(&r.image))?, ann.keypoints, ann.presence)
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::from_keypoints(&samples)
        }
    }
}

fn load_burn_sample(base: &Path, r: &SampleRecord) -> Result<MultimodalImage> {
    let temperature = r
        .temperature
        .as_ref()
        .ok_or_else(|| Error::Data(format!("sample {} has no temperature map", r.id)))?;
    let mask = r.mask.as_ref().map(|m| base.join(m));
    load_multimodal(&r.id, &base.join(&r.image), &base.join(temperature), mask.as_deref())
}

fn load_face(path: &Path) -> Result<Vec<u8>> {
    let img = load_netpbm(path)?;
    if img.channels != 1 || img.width != FACE_SIDE || img.height != FACE_SIDE {
        return Err(Error::Shape(format!(
            "{} is not a {FACE_SIDE}×{FACE_SIDE} gray image",
            path.display()
        )));
    }
    Ok(img.data)
}

fn model_with_flags(cfg: &RunConfig, modified: bool) -> Result<ModelConfig> {
    let mut model = cfg.model()?;
    if modified {
        match &mut model {
            ModelConfig::Keypoint { modified, .. } => *modified = true,
            _ => return Err(Error::Config("--modified applies to the keypoint builder only".into())),
        }
    }
    Ok(model)
}

fn load_network(cfg: &RunConfig, weights: &Path, modified: bool) -> Result<Network> {
    let spec = model_with_flags(cfg, modified)?.spec()?;
    let params = load_weights(weights)?;
    Network::with_params(spec, &params).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", weights.display())),
        Error::Shape(m) => Error::Shape(format!("{}: {m}", weights.display())),
        other => other,
    })
}

pub struct TrainArgs {
    pub manifest: Option<PathBuf>,
    pub weights: PathBuf,
    pub log: Option<PathBuf>,
    pub modified: bool,
    pub epochs: Option<usize>,
}

pub fn train(cfg: &RunConfig, args: TrainArgs) -> Result<()> {
    let model = model_with_flags(cfg, args.modified)?;
    let mut tc = cfg.train();
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    tc.validate()?;
    let mut net = Network::new(model.spec()?, tc.seed)?;
    let ds = cfg.dataset();
    let manifest = manifest_path(cfg, args.manifest)?;
    let train_set = load_split(&manifest, Split::Train, &ds, tc.seed)?;
    let val_set = load_split(&manifest, Split::Val, &ds, tc.seed)?;
    eprintln!(
        "training {} ({} parameters) on {} samples, validating on {}",
        net.spec().name,
        net.num_parameters(),
        train_set.len(),
        val_set.len()
    );
    let log = train_with_validation(&mut net, &train_set, &val_set, &tc, |r| {
        eprintln!(
            "epoch {:>3}  loss {:.6}  val {:.4}  {:.1}s",
            r.epoch, r.train_loss, r.val_metric, r.seconds
        );
    })?;
    let log_path = args.log.unwrap_or_else(|| sibling(&args.weights, "log.csv"));
    save_weights(&net.export_params(), &args.weights)?;
    write_atomic(&log_path, log.to_csv().as_bytes())?;
    let metric = match net.head() {
        Head::Softmax => "accuracy",
        Head::Linear => "hit_rate",
    };
    match log.last() {
        Some(r) => println!("final validation {metric}: {:.4}", r.val_metric),
        None => println!("no epochs run"),
    }
    Ok(())
}

/// `dir/stem.suffix` for a file `dir/stem.ext`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn eval(cfg: &RunConfig, manifest: Option<PathBuf>, weights: &Path, modified: bool, out: Option<PathBuf>) -> Result<()> {
    let ev = cfg.eval();
    let net = load_network(cfg, weights, modified)?;
    let data = load_split(&manifest_path(cfg, manifest)?, ev.split, &cfg.dataset(), cfg.train().seed)?;
    let pred = predict_all(&net, &data.inputs)?;
    let report = match &data.targets {
        Targets::Classes(labels) => {
            let cm = ConfusionMatrix::from_predictions(net.spec().output_dim, labels, &argmax_rows(&pred))?;
            json!({
                "task": "classification",
                "split": ev.split,
                "samples": data.len(),
                "accuracy": accuracy(&cm)?,
                "confusion_matrix": cm.counts,
            })
        }
        Targets::Keypoints { coords, mask } => {
            let errors = keypoint_errors(&pred, coords, mask, ev.aggregation)?;
            let res = KeypointEvalResult::from_errors(errors, ev.threshold)?;
            json!({
                "task": "keypoint",
                "split": ev.split,
                "samples": data.len(),
                "aggregation": ev.aggregation,
                "threshold": res.threshold,
                "hit_rate": res.hit_rate,
                "errors": res.errors,
            })
        }
    };
    let mut text = serde_json::to_vec_pretty(&report).expect("metrics serialise");
    text.push(b'\n');
    if let Some(p) = out {
        write_atomic(&p, &text)?;
    }
    print!("{}", String::from_utf8_lossy(&text));
    Ok(())
}

pub fn segment(
    cfg: &RunConfig,
    weights: &Path,
    image: &Path,
    temperature: Option<PathBuf>,
    stride: Option<usize>,
) -> Result<()> {
    let net = load_network(cfg, weights, false)?;
    let task = match net.spec().output_dim {
        2 => PatchTask::SkinVsBurn,
        3 => PatchTask::SkinLightSerious,
        k => return Err(Error::Config(format!("a {k}-class network is not a skin/burn classifier"))),
    };
    let stride = stride.unwrap_or(cfg.eval().stride);
    let rgb = load_netpbm(image)?;
    if rgb.channels != 3 {
        return Err(Error::Data(format!("{} is not a colour image", image.display())));
    }
    let temp_path = temperature.unwrap_or_else(|| image.with_extension("irf"));
    let img = if net.spec().input.c == InputChannels::Rgb.count() && !temp_path.exists() {
        MultimodalImage::new(
            "segment",
            rgb.width,
            rgb.height,
            rgb.rgb_pixels(),
            vec![0.0; rgb.width * rgb.height],
            None,
        )?
    } else {
        load_multimodal("segment", image, &temp_path, None)?
    };
    let seg = segment_image(&img, &net, stride, task)?;
    let labels = sibling(image, "labels.pgm");
    let overlay = sibling(image, "overlay.ppm");
    save_netpbm(&seg.label_raster(), &labels)?;
    save_netpbm(&seg.overlay_raster(), &overlay)?;
    let count = |r: Region| seg.regions.iter().filter(|&&x| x == r).count();
    println!(
        "{}",
        json!({
            "grid": [seg.grid_cols, seg.grid_rows],
            "pixels": {
                "unknown": count(Region::Unknown),
                "skin": count(Region::Skin),
                "light_burn": count(Region::LightBurn),
                "burn": count(Region::Burn),
            },
            "labels": labels,
            "overlay": overlay,
        })
    );
    Ok(())
}

pub fn predict(cfg: &RunConfig, weights: &Path, images: &[PathBuf], modified: bool, out: &Path) -> Result<()> {
    let net = load_network(cfg, weights, modified)?;
    if net.head() != Head::Linear || net.spec().output_dim != 2 * NUM_KEYPOINTS {
        return Err(Error::Config("predict needs a keypoint network".into()));
    }
    if images.is_empty() {
        return Err(Error::Config("no input images".into()));
    }
    let samples = images
        .iter()
        .map(|p| KeypointSample::new(load_face(p)?, [(0.0, 0.0); NUM_KEYPOINTS], [false; NUM_KEYPOINTS]))
        .collect::<Result<Vec<_>>>()?;
    let pred = predict_all(&net, &Dataset::from_keypoints(&samples)?.inputs)?;
    let max = (FACE_SIDE - 1) as f32;
    let records: Vec<KeypointRecord> = pred
        .data()
        .chunks_exact(2 * NUM_KEYPOINTS)
        .zip(images)
        .map(|(row, path)| KeypointRecord {
            keypoints: std::array::from_fn(|k| {
                let c = |v: f32| denormalize_coord(v).clamp(0.0, max);
                (c(row[2 * k]), c(row[2 * k + 1]))
            }),
            presence: [true; NUM_KEYPOINTS],
            image: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        })
        .collect();
    write_keypoint_csv(&records, out)?;
    println!("wrote {} predictions to {}", records.len(), out.display());
    Ok(())
}

pub fn bench(cfg: &RunConfig, variants: Option<Vec<String>>, sweep: Option<Vec<usize>>, csv: Option<PathBuf>) -> Result<()> {
    let mut scenario = cfg.bench.clone().unwrap_or_default();
    if let Some(s) = cfg.seed {
        scenario.seed = s;
    }
    let registry = KernelRegistry::default();
    let variants = variants.unwrap_or_else(|| registry.names().map(String::from).collect());
    let threads = sweep.unwrap_or_else(|| {
        let mut t = vec![1, available_threads()];
        t.dedup();
        t
    });
    let report = run_bench(&scenario, &variants, &threads, &registry)?;
    let (table, csv_text) = render_report(&report)?;
    if let Some(p) = csv {
        write_atomic(&p, csv_text.as_bytes())?;
    }
    print!("{table}\n{csv_text}");
    Ok(())
}
