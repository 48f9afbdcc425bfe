//! Command implementations, generic over the scalar type with dispatch on
//! the configured precision.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use pdr_core::ad::no_grad;
use pdr_core::config::{ExperimentConfig, Precision};
use pdr_core::eval::{
    clustering_report, fit_probe_head, hac_ward, integrated_gradients, pcc_disentanglement,
    uniform_spans, BlockSpan, LabelKind, ProbeMode,
};
use pdr_core::io::checkpoint::{load_checkpoint, save_checkpoint};
use pdr_core::io::pdrt;
use pdr_core::loocc::{assemble_batch, train as run_training, LooccMode, TrainState};
use pdr_core::nets::{extract_representation, parse_blocks, Block, FeatureSet, Model};
use pdr_core::render::render;
use pdr_core::scene::{
    build_dataset_with_threads, generate_scene, load_dataset, save_dataset, Dataset, SceneParams,
    Split,
};
use pdr_core::{Error, Result, Scalar, Tensor};

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn generate(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<()> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => generate_t::<f32>(cfg, out, threads),
        Precision::F64 => generate_t::<f64>(cfg, out, threads),
    }
}

fn generate_t<T: Scalar>(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<()> {
    let ds = build_dataset_with_threads::<T>(&cfg.dataset_config(), threads)?;
    save_dataset(out, &ds)?;
    let mut shape_counts = vec![0usize; cfg.generator.k_shape];
    let mut split_counts = [0usize; 3];
    for e in &ds.examples {
        shape_counts[e.scene.shape_class] += 1;
        split_counts[match e.split {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }] += 1;
    }
    println!(
        "generated {} scenes at {}x{} -> {}",
        ds.examples.len(),
        cfg.generator.image_size,
        cfg.generator.image_size,
        out.display()
    );
    println!(
        "splits: train {} / val {} / test {}",
        split_counts[0], split_counts[1], split_counts[2]
    );
    println!("shape class counts: {shape_counts:?}");
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn train(
    cfg: Option<ExperimentConfig>,
    dataset_dir: &Path,
    out: &Path,
    mode_str: &str,
    resume: Option<&Path>,
) -> Result<()> {
    let mode = LooccMode::parse(mode_str)?;
    let precision = cfg.as_ref().map(|c| c.precision).unwrap_or(Precision::F32);
    // on resume the checkpoint decides the precision lane
    let precision = match resume {
        Some(ckpt) => {
            let path = ckpt.join("checkpoint.json");
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format {
                what: "checkpoint manifest",
                path,
                detail: e.to_string(),
            })?;
            if v.get("dtype").and_then(|d| d.as_str()) == Some("f64") {
                Precision::F64
            } else {
                Precision::F32
            }
        }
        None => precision,
    };
    match precision {
        Precision::F32 => train_t::<f32>(cfg, dataset_dir, out, mode, resume),
        Precision::F64 => train_t::<f64>(cfg, dataset_dir, out, mode, resume),
    }
}

fn train_t<T: Scalar>(
    cfg: Option<ExperimentConfig>,
    dataset_dir: &Path,
    out: &Path,
    mode: LooccMode,
    resume: Option<&Path>,
) -> Result<()> {
    let dataset = load_dataset::<T>(dataset_dir)?;

    let (mut state, config, mode) = match resume {
        Some(ckpt) => {
            let (state, mut config, stored_mode) = load_checkpoint::<T>(ckpt)?;
            // a config passed alongside --resume may extend the schedule;
            // everything else comes from the checkpoint echo
            if let Some(over) = &cfg {
                config.loocc.max_epochs = over.loocc.max_epochs;
                config.loocc.patience = over.loocc.patience;
            }
            println!("resuming from {} at epoch {}", ckpt.display(), state.epoch);
            (state, config, stored_mode)
        }
        None => {
            let mut config = cfg.unwrap_or_default();
            config.loocc.mode = mode;
            config.validate()?;
            let state =
                TrainState::<T>::new(&config.net, &config.loocc, config.seeds.init, config.seeds.train)?;
            (state, config, mode)
        }
    };
    check_dataset_compat(&config, &dataset)?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let metrics_path = out.join(format!("metrics-{}.jsonl", mode.name()));
    let mut metrics_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;

    let intr = config.intrinsics();
    let rcfg = config.generator.render.clone();
    let history = run_training(&mut state, &dataset, &config.loocc, &intr, &rcfg, |m| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        let _ = writeln!(metrics_file, "{line}");
        println!("{line}");
    })?;

    save_checkpoint(out, &state, &config, mode)?;
    if history.is_empty() {
        println!(
            "checkpoint already at epoch {} (max_epochs {}); nothing further to train",
            state.epoch, config.loocc.max_epochs
        );
    } else {
        println!(
            "trained mode {} to epoch {} (best val {:.6} at epoch {}); checkpoint in {}",
            mode.name(),
            state.epoch,
            state.stopper.best,
            state.stopper.best_epoch,
            out.display()
        );
    }
    Ok(())
}

fn check_dataset_compat<T: Scalar>(cfg: &ExperimentConfig, dataset: &Dataset<T>) -> Result<()> {
    if dataset.config.generator.image_size != cfg.net.image_size {
        return Err(Error::Incompatible {
            what: "image size".into(),
            checkpoint: cfg.net.image_size.to_string(),
            dataset: dataset.config.generator.image_size.to_string(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub struct EvalRequest {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub task: String,
    pub blocks: String,
    pub labels: Option<String>,
    pub n_train: Option<usize>,
    pub probe_mode: Option<String>,
    pub steps: Option<usize>,
    pub sample_index: usize,
    pub out: Option<PathBuf>,
}

pub fn eval(req: &EvalRequest) -> Result<()> {
    // checkpoint dtype decides the precision lane
    let manifest_path = req.checkpoint.join("checkpoint.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "checkpoint manifest",
        path: manifest_path.clone(),
        detail: e.to_string(),
    })?;
    match manifest.get("dtype").and_then(|v| v.as_str()) {
        Some("f32") => eval_t::<f32>(req),
        Some("f64") => eval_t::<f64>(req),
        other => Err(Error::Format {
            what: "checkpoint manifest",
            path: manifest_path,
            detail: format!("unknown dtype {other:?}"),
        }),
    }
}

fn parse_labels(labels: &Option<String>, default: LabelKind) -> Result<LabelKind> {
    match labels.as_deref() {
        None => Ok(default),
        Some("shape") => Ok(LabelKind::Shape),
        Some("albedo") => Ok(LabelKind::Albedo),
        Some(other) => Err(Error::InvalidConfig(format!(
            "unknown label kind `{other}` (expected shape or albedo)"
        ))),
    }
}

/// Encode a split in chunks and stack the selected blocks.
fn split_features<T: Scalar>(
    model: &Model<T>,
    dataset: &Dataset<T>,
    indices: &[usize],
    blocks: &[Block],
) -> Result<(Tensor<T>, FeatureSet<T>)> {
    let _guard = no_grad();
    let mut reps = Vec::new();
    let mut per_block: Vec<Vec<Tensor<T>>> = vec![Vec::new(); 4];
    for chunk in indices.chunks(32) {
        let x = assemble_batch(dataset, chunk);
        let z = model.encode(&x)?;
        reps.push(extract_representation(&z, blocks)?);
        per_block[0].push(z.z_geom);
        per_block[1].push(z.z_alb);
        per_block[2].push(z.z_cam);
        per_block[3].push(z.z_light);
    }
    let features = Tensor::concat(&reps, 0);
    let full = FeatureSet {
        z_geom: Tensor::concat(&per_block[0], 0),
        z_alb: Tensor::concat(&per_block[1], 0),
        z_cam: Tensor::concat(&per_block[2], 0),
        z_light: Tensor::concat(&per_block[3], 0),
    };
    Ok((features, full))
}

fn eval_t<T: Scalar>(req: &EvalRequest) -> Result<()> {
    let (state, config, mode) = load_checkpoint::<T>(&req.checkpoint)?;
    state.restore_best();
    let model = &state.model;
    let dataset = load_dataset::<T>(&req.dataset)?;
    check_dataset_compat(&config, &dataset)?;
    let blocks = parse_blocks(&req.blocks)?;
    let test_idx = dataset.indices(Split::Test);
    if test_idx.is_empty() {
        return Err(Error::EmptySplit("test".into()));
    }

    let report = match req.task.as_str() {
        "cluster" => {
            let labels = parse_labels(&req.labels, LabelKind::Shape)?;
            let (features, _) = split_features(model, &dataset, &test_idx, &blocks)?;
            let truth: Vec<usize> = test_idx.iter().map(|&i| labels.of(&dataset, i)).collect();
            let k = labels.class_count(&dataset);
            let clustering = hac_ward(&features, k)?;
            let metrics = clustering_report(&clustering.assignments, &truth)?;
            serde_json::json!({
                "task": "cluster",
                "mode": mode.name(),
                "labels": label_name(labels),
                "blocks": req.blocks,
                "k": k,
                "report": metrics,
            })
        }
        "probe" => {
            let labels = parse_labels(&req.labels, LabelKind::Albedo)?;
            let mut probe_cfg = config.probe.clone();
            if let Some(n) = req.n_train {
                probe_cfg.n_train = n;
            }
            match req.probe_mode.as_deref() {
                None => {}
                Some("frozen") => probe_cfg.mode = ProbeMode::Frozen,
                Some("finetune") => probe_cfg.mode = ProbeMode::Finetune,
                Some(other) => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown probe mode `{other}` (expected frozen or finetune)"
                    )))
                }
            }
            let accuracy = pdr_core::eval::linear_probe(model, &dataset, labels, &blocks, &probe_cfg)?;
            serde_json::json!({
                "task": "probe",
                "mode": mode.name(),
                "labels": label_name(labels),
                "blocks": req.blocks,
                "n_train": probe_cfg.n_train,
                "probe_mode": match probe_cfg.mode { ProbeMode::Frozen => "frozen", ProbeMode::Finetune => "finetune" },
                "epochs": probe_cfg.epochs,
                "accuracy": accuracy,
            })
        }
        "disentangle" => {
            let (_, full) = split_features(model, &dataset, &test_idx, &blocks)?;
            let pcc = pcc_disentanglement(&full)?;
            serde_json::json!({
                "task": "disentangle",
                "mode": mode.name(),
                "report": pcc,
            })
        }
        "attribute" => {
            let labels = parse_labels(&req.labels, LabelKind::Albedo)?;
            let steps = req.steps.unwrap_or(64);
            if req.sample_index >= test_idx.len() {
                return Err(Error::InvalidConfig(format!(
                    "sample index {} out of range for test split of {}",
                    req.sample_index,
                    test_idx.len()
                )));
            }
            let mut probe_cfg = config.probe.clone();
            probe_cfg.mode = ProbeMode::Frozen;
            if let Some(n) = req.n_train {
                probe_cfg.n_train = n;
            }
            let train_idx = dataset.indices(Split::Train);
            if probe_cfg.n_train > train_idx.len() {
                return Err(Error::NotEnoughLabeled {
                    requested: probe_cfg.n_train,
                    available: train_idx.len(),
                });
            }
            let head_train: Vec<usize> = train_idx.into_iter().take(probe_cfg.n_train).collect();
            let (train_x, _) = split_features(model, &dataset, &head_train, &blocks)?;
            let train_y: Vec<usize> = head_train.iter().map(|&i| labels.of(&dataset, i)).collect();
            let head = fit_probe_head(&train_x, &train_y, labels.class_count(&dataset), &probe_cfg)?;

            let sample = [test_idx[req.sample_index]];
            let (sample_x, _) = split_features(model, &dataset, &sample, &blocks)?;
            let class = head.predict(&sample_x)[0];
            let spans: Vec<BlockSpan> = uniform_spans(
                &blocks.iter().map(|b| b.name()).collect::<Vec<_>>(),
                model.config.feature_dim,
            );
            let baseline = Tensor::zeros(sample_x.shape());
            let report = integrated_gradients(
                |z| head.forward(z).slice(1, class, 1).reshape(&[]),
                &sample_x,
                &baseline,
                steps,
                &spans,
            )?;
            serde_json::json!({
                "task": "attribute",
                "mode": mode.name(),
                "labels": label_name(labels),
                "blocks": req.blocks,
                "sample_index": req.sample_index,
                "predicted_class": class,
                "report": report,
            })
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown task `{other}` (expected cluster, probe, disentangle, attribute)"
            )))
        }
    };

    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &req.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(path, format!("{text}\n")).map_err(|e| Error::io(path, e))?;
            println!("report written to {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn label_name(l: LabelKind) -> &'static str {
    match l {
        LabelKind::Shape => "shape",
        LabelKind::Albedo => "albedo",
    }
}

// ---------------------------------------------------------------------------
// render-preview
// ---------------------------------------------------------------------------

pub struct PreviewRequest {
    pub config: ExperimentConfig,
    pub scene_seed: Option<u64>,
    pub shape_class: usize,
    pub albedo_class: usize,
    pub params: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub ambient: Option<f64>,
    pub diffuse: Option<f64>,
    pub light_pitch: Option<f64>,
    pub light_yaw: Option<f64>,
    pub cam_pitch: Option<f64>,
    pub cam_yaw: Option<f64>,
}

pub fn render_preview(req: &PreviewRequest) -> Result<()> {
    match req.config.precision {
        Precision::F32 => render_preview_t::<f32>(req),
        Precision::F64 => render_preview_t::<f64>(req),
    }
}

fn render_preview_t<T: Scalar>(req: &PreviewRequest) -> Result<()> {
    let cfg = &req.config;
    let mut params: SceneParams<T> = match (&req.scene_seed, &req.params) {
        (Some(seed), None) => {
            generate_scene::<T>(*seed, req.shape_class, req.albedo_class, &cfg.generator)?.params
        }
        (None, Some(dir)) => SceneParams {
            depth: pdrt::read_file(&dir.join("depth.pdrt"))?,
            albedo: pdrt::read_file(&dir.join("albedo.pdrt"))?,
            light: pdrt::read_file(&dir.join("light.pdrt"))?,
            camera: pdrt::read_file(&dir.join("camera.pdrt"))?,
        },
        _ => {
            return Err(Error::InvalidConfig(
                "render-preview needs exactly one of --scene-seed or --params".into(),
            ))
        }
    };

    let intr = pdr_core::render::CameraIntrinsics::new(params.depth.shape()[0], cfg.generator.fov_deg);
    let rcfg = cfg.generator.render.clone();

    if let Some(ckpt) = &req.checkpoint {
        let (state, config, _) = load_checkpoint::<T>(ckpt)?;
        state.restore_best();
        if config.net.image_size != params.depth.shape()[0] {
            return Err(Error::Incompatible {
                what: "image size".into(),
                checkpoint: config.net.image_size.to_string(),
                dataset: params.depth.shape()[0].to_string(),
            });
        }
        let _guard = no_grad();
        let img = render(&params, &intr, &rcfg);
        let z = state.model.encode(&pdr_core::nets::image_to_net(&img))?;
        params = state.model.decode(&z).sample(0).detach();
        println!("scene parameters predicted by {}", ckpt.display());
    }

    let overridden = apply_overrides(&params, req);

    let _guard = no_grad();
    let canonical_img = render(&params, &intr, &rcfg);
    let override_img = render(&overridden, &intr, &rcfg);
    fs::create_dir_all(&req.out).map_err(|e| Error::io(&req.out, e))?;
    write_image(&req.out.join("canonical.png"), &canonical_img)?;
    pdrt::write_file(&req.out.join("canonical.pdrt"), &canonical_img)?;
    write_image(&req.out.join("override.png"), &override_img)?;
    pdrt::write_file(&req.out.join("override.pdrt"), &override_img)?;
    println!("wrote canonical + override images to {}", req.out.display());
    Ok(())
}

fn apply_overrides<T: Scalar>(params: &SceneParams<T>, req: &PreviewRequest) -> SceneParams<T> {
    use pdr_core::scene::ranges::*;
    let clamp_warn = |name: &str, v: f64, lo: f64, hi: f64| -> T {
        if v < lo || v > hi {
            eprintln!("warning: {name} override {v} clamped to [{lo}, {hi}]");
        }
        T::of(v.clamp(lo, hi))
    };
    let mut light = params.light.to_vec();
    if let Some(v) = req.ambient {
        light[0] = clamp_warn("ambient", v, LIGHT_INTENSITY_MIN, LIGHT_INTENSITY_MAX);
    }
    if let Some(v) = req.diffuse {
        light[1] = clamp_warn("diffuse", v, LIGHT_INTENSITY_MIN, LIGHT_INTENSITY_MAX);
    }
    if let Some(v) = req.light_pitch {
        light[2] = clamp_warn("light-pitch", v, LIGHT_ANGLE_MIN, LIGHT_ANGLE_MAX);
    }
    if let Some(v) = req.light_yaw {
        light[3] = clamp_warn("light-yaw", v, LIGHT_ANGLE_MIN, LIGHT_ANGLE_MAX);
    }
    let mut camera = params.camera.to_vec();
    if let Some(v) = req.cam_pitch {
        camera[0] = clamp_warn("cam-pitch", v, CAMERA_ROT_MIN, CAMERA_ROT_MAX);
    }
    if let Some(v) = req.cam_yaw {
        camera[1] = clamp_warn("cam-yaw", v, CAMERA_ROT_MIN, CAMERA_ROT_MAX);
    }
    SceneParams {
        depth: params.depth.clone(),
        albedo: params.albedo.clone(),
        light: Tensor::from_vec(light, &[4]),
        camera: Tensor::from_vec(camera, &[6]),
    }
}

fn write_image<T: Scalar>(path: &Path, img: &Tensor<T>) -> Result<()> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let data = img.to_vec();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let px = |ch: usize| -> u8 {
                (data[(r * w + c) * 3 + ch].as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
            };
            buf.put_pixel(c as u32, r as u32, image::Rgb([px(0), px(1), px(2)]));
        }
    }
    buf.save(path).map_err(|e| Error::Other(format!("{}: {e}", path.display())))
}
