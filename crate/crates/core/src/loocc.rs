//! Leave-one-out cycle contrastive training.
//!
//! One training step: encode a batch, decode scene parameters, and
//! reconstruct (L1). In contrastive modes, additionally perturb either the
//! light or camera parameter of every sample (one choice per batch, fresh
//! deltas per sample), re-render, re-encode, and pull the stacks of the
//! three *unperturbed* feature blocks of (x, x_aug) together with the
//! temperature-scaled cross-entropy loss over the batch. Total loss is
//! alpha * contrastive + beta * reconstruction.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{no_grad, Tensor};
use crate::error::{Error, Result};
use crate::nets::{Block, FeatureSet, Model, NetConfig, SceneBatch, ALL_BLOCKS};
use crate::render::{render, CameraIntrinsics, RenderConfig};
use crate::scalar::Scalar;
use crate::scene::{ranges, Dataset, SceneParams, Split};

/// Augmentation families: none, light only, light and view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LooccMode {
    None,
    LooccL,
    LooccLv,
}

impl LooccMode {
    pub fn name(self) -> &'static str {
        match self {
            LooccMode::None => "none",
            LooccMode::LooccL => "loocc-l",
            LooccMode::LooccLv => "loocc-lv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(LooccMode::None),
            "loocc-l" => Ok(LooccMode::LooccL),
            "loocc-lv" => Ok(LooccMode::LooccLv),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected none, loocc-l, loocc-lv)"
            ))),
        }
    }
}

/// Which scene parameter a perturbation touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbed {
    Light,
    Camera,
}

/// Uniform sampling half-widths for physical augmentation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PerturbRanges {
    pub ambient_delta: f64,
    pub diffuse_delta: f64,
    pub light_pitch_delta: f64,
    pub light_yaw_delta: f64,
    pub camera_pitch_delta: f64,
    pub camera_yaw_delta: f64,
}

impl Default for PerturbRanges {
    fn default() -> Self {
        PerturbRanges {
            ambient_delta: 0.5,
            diffuse_delta: 0.5,
            light_pitch_delta: 45.0,
            light_yaw_delta: 45.0,
            camera_pitch_delta: 22.5,
            camera_yaw_delta: 45.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LooccConfig {
    pub mode: LooccMode,
    pub temperature: f64,
    pub alpha: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Treat the augmented image as a constant input to the second
    /// encoding instead of backpropagating through the render cycle.
    pub detach_aug: bool,
    pub perturb: PerturbRanges,
}

impl Default for LooccConfig {
    fn default() -> Self {
        LooccConfig {
            mode: LooccMode::None,
            temperature: 0.5,
            alpha: 0.01,
            beta: 1.0,
            batch_size: 16,
            learning_rate: 1e-3,
            patience: 10,
            max_epochs: 100,
            detach_aug: false,
            perturb: PerturbRanges::default(),
        }
    }
}

impl LooccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::InvalidConfig(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidConfig("alpha and beta must be >= 0".into()));
        }
        if self.mode != LooccMode::None && self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// physical augmentation
// ---------------------------------------------------------------------------

/// Draw which parameter to perturb for the given mode.
pub fn choose_perturbed(mode: LooccMode, rng: &mut ChaCha20Rng) -> Result<Perturbed> {
    match mode {
        LooccMode::None => Err(Error::InvalidConfig("perturb requires a contrastive mode".into())),
        LooccMode::LooccL => Ok(Perturbed::Light),
        LooccMode::LooccLv => Ok(if rng.random_range(0..2u32) == 0 {
            Perturbed::Camera
        } else {
            Perturbed::Light
        }),
    }
}

/// Perturb exactly one of light or camera by additive uniform deltas,
/// clamped back into the parameter ranges. Geometry and albedo pass
/// through untouched (bit-identical tensors).
pub fn perturb_forced<T: Scalar>(
    params: &SceneParams<T>,
    which: Perturbed,
    ranges_cfg: &PerturbRanges,
    rng: &mut ChaCha20Rng,
) -> SceneParams<T> {
    let draw = |rng: &mut ChaCha20Rng, half: f64| {
        if half == 0.0 {
            0.0
        } else {
            rng.random_range(-half..half)
        }
    };
    match which {
        Perturbed::Light => {
            // all four light components jointly, in order
            let d = [
                draw(rng, ranges_cfg.ambient_delta),
                draw(rng, ranges_cfg.diffuse_delta),
                draw(rng, ranges_cfg.light_pitch_delta),
                draw(rng, ranges_cfg.light_yaw_delta),
            ];
            let light = params.light.reshape(&[4]);
            let parts = [
                light.slice(0, 0, 1).add_scalar(d[0]).clamp(ranges::LIGHT_INTENSITY_MIN, ranges::LIGHT_INTENSITY_MAX),
                light.slice(0, 1, 1).add_scalar(d[1]).clamp(ranges::LIGHT_INTENSITY_MIN, ranges::LIGHT_INTENSITY_MAX),
                light.slice(0, 2, 1).add_scalar(d[2]).clamp(ranges::LIGHT_ANGLE_MIN, ranges::LIGHT_ANGLE_MAX),
                light.slice(0, 3, 1).add_scalar(d[3]).clamp(ranges::LIGHT_ANGLE_MIN, ranges::LIGHT_ANGLE_MAX),
            ];
            SceneParams {
                depth: params.depth.clone(),
                albedo: params.albedo.clone(),
                light: Tensor::concat(&parts, 0),
                camera: params.camera.clone(),
            }
        }
        Perturbed::Camera => {
            // pitch (rx) and yaw (ry) only; roll and translation untouched
            let dp = draw(rng, ranges_cfg.camera_pitch_delta);
            let dy = draw(rng, ranges_cfg.camera_yaw_delta);
            let cam = params.camera.reshape(&[6]);
            let parts = [
                cam.slice(0, 0, 1).add_scalar(dp).clamp(ranges::CAMERA_ROT_MIN, ranges::CAMERA_ROT_MAX),
                cam.slice(0, 1, 1).add_scalar(dy).clamp(ranges::CAMERA_ROT_MIN, ranges::CAMERA_ROT_MAX),
                cam.slice(0, 2, 4),
            ];
            SceneParams {
                depth: params.depth.clone(),
                albedo: params.albedo.clone(),
                light: params.light.clone(),
                camera: Tensor::concat(&parts, 0),
            }
        }
    }
}

/// Randomly select and perturb either the light or camera parameter.
pub fn perturb<T: Scalar>(
    params: &SceneParams<T>,
    mode: LooccMode,
    ranges_cfg: &PerturbRanges,
    rng: &mut ChaCha20Rng,
) -> Result<(SceneParams<T>, Perturbed)> {
    let which = choose_perturbed(mode, rng)?;
    Ok((perturb_forced(params, which, ranges_cfg, rng), which))
}

// ---------------------------------------------------------------------------
// cyclic encoding and the leave-one-out stack
// ---------------------------------------------------------------------------

/// Render every decoded sample and stack the images into [N,3,H,W].
fn render_batch<T: Scalar>(
    batch: &SceneBatch<T>,
    intr: &CameraIntrinsics,
    rcfg: &RenderConfig,
) -> Tensor<T> {
    let images: Vec<Tensor<T>> = (0..batch.len())
        .map(|i| {
            let sp = batch.sample(i);
            let img = render(&sp, intr, rcfg);
            crate::nets::image_to_net(&img)
        })
        .collect();
    Tensor::concat(&images, 0)
}

/// Encode, decode, perturb one scene parameter (one draw per call, deltas
/// per sample), re-render, re-encode.
pub fn cyclic_encode<T: Scalar>(
    x: &Tensor<T>,
    model: &Model<T>,
    intr: &CameraIntrinsics,
    rcfg: &RenderConfig,
    cfg: &LooccConfig,
    rng: &mut ChaCha20Rng,
) -> Result<(FeatureSet<T>, FeatureSet<T>, Perturbed)> {
    let z_x = model.encode(x)?;
    let decoded = model.decode(&z_x);
    let which = choose_perturbed(cfg.mode, rng)?;
    let aug: Vec<Tensor<T>> = (0..decoded.len())
        .map(|i| {
            let sp = perturb_forced(&decoded.sample(i), which, &cfg.perturb, rng);
            crate::nets::image_to_net(&render(&sp, intr, rcfg))
        })
        .collect();
    let mut x_aug = Tensor::concat(&aug, 0);
    if cfg.detach_aug {
        x_aug = x_aug.detach();
    }
    let z_aug = model.encode(&x_aug)?;
    Ok((z_x, z_aug, which))
}

/// Stack of the three unperturbed feature blocks, L2-normalized per row:
/// [N, 3F].
pub fn leave_one_out<T: Scalar>(z: &FeatureSet<T>, which: Perturbed) -> Tensor<T> {
    let excluded = match which {
        Perturbed::Light => Block::Light,
        Perturbed::Camera => Block::Cam,
    };
    let kept: Vec<Tensor<T>> = ALL_BLOCKS
        .iter()
        .filter(|&&b| b != excluded)
        .map(|&b| z.block(b).clone())
        .collect();
    Tensor::concat(&kept, 1).l2_normalize(1)
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

/// Normalized temperature-scaled cross entropy over 2N views: anchor i's
/// positive is its counterpart in the other batch; all other 2N-1 views
/// are negatives. Similarity is cosine.
pub fn nt_xent<T: Scalar>(u: &Tensor<T>, u_aug: &Tensor<T>, temperature: f64) -> Result<Tensor<T>> {
    assert!(
        u.ndim() == 2 && u.shape() == u_aug.shape(),
        "nt_xent expects matching [N,D] batches, got {:?} and {:?}",
        u.shape(),
        u_aug.shape()
    );
    let n = u.shape()[0];
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let m = 2 * n;
    let z = Tensor::concat(&[u.clone(), u_aug.clone()], 0).l2_normalize(1);
    let sims = z.matmul(&z.permute(&[1, 0])).mul_scalar(1.0 / temperature);

    // positive logit per anchor: pairs (i, i+N)
    let mut pos = vec![T::zero(); m * m];
    let mut not_self = vec![T::zero(); m * m];
    for i in 0..m {
        pos[i * m + (i + n) % m] = T::one();
        for k in 0..m {
            if k != i {
                not_self[i * m + k] = T::one();
            }
        }
    }
    let pos_logit = sims.mul(&Tensor::from_vec(pos, &[m, m])).sum_axis(1, false);
    let denom = sims
        .exp()
        .mul(&Tensor::from_vec(not_self, &[m, m]))
        .sum_axis(1, false)
        .log();
    Ok(denom.sub(&pos_logit).mean_all())
}

/// Mean absolute error over all pixels.
pub fn reconstruction_loss<T: Scalar>(x: &Tensor<T>, x_recon: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != x_recon.shape() {
        return Err(Error::ImageShape { got: x_recon.shape().to_vec(), expected: x.shape().to_vec() });
    }
    Ok(x.sub(x_recon).abs().mean_all())
}

/// Per-batch loss terms, as plain numbers for logging.
#[derive(Debug, Clone, Serialize)]
pub struct LossDiagnostics {
    pub recon: f64,
    pub cont: Option<f64>,
    pub total: f64,
    pub perturbed: Option<Perturbed>,
}

/// Full training objective on one batch: beta * L1(x, recon(x)) plus, in
/// contrastive modes with N >= 2, alpha * nt_xent over leave-one-out
/// stacks of the cyclic encoding.
pub fn total_loss<T: Scalar>(
    x: &Tensor<T>,
    model: &Model<T>,
    intr: &CameraIntrinsics,
    rcfg: &RenderConfig,
    cfg: &LooccConfig,
    rng: &mut ChaCha20Rng,
) -> Result<(Tensor<T>, LossDiagnostics)> {
    cfg.validate()?;
    let n = x.shape()[0];
    let z_x = model.encode(x)?;
    let decoded = model.decode(&z_x);
    let x_recon = render_batch(&decoded, intr, rcfg);
    let recon = reconstruction_loss(x, &x_recon)?;

    let contrastive = if cfg.mode != LooccMode::None && n >= 2 {
        let which = choose_perturbed(cfg.mode, rng)?;
        let aug: Vec<Tensor<T>> = (0..n)
            .map(|i| {
                let sp = perturb_forced(&decoded.sample(i), which, &cfg.perturb, rng);
                crate::nets::image_to_net(&render(&sp, intr, rcfg))
            })
            .collect();
        let mut x_aug = Tensor::concat(&aug, 0);
        if cfg.detach_aug {
            x_aug = x_aug.detach();
        }
        let z_aug = model.encode(&x_aug)?;
        let u = leave_one_out(&z_x, which);
        let u_aug = leave_one_out(&z_aug, which);
        Some((nt_xent(&u, &u_aug, cfg.temperature)?, which))
    } else {
        None
    };

    let weighted_recon = recon.mul_scalar(cfg.beta);
    let (total, diag) = match contrastive {
        Some((cont, which)) => {
            let total = weighted_recon.add(&cont.mul_scalar(cfg.alpha));
            let diag = LossDiagnostics {
                recon: recon.item().as_f64(),
                cont: Some(cont.item().as_f64()),
                total: total.item().as_f64(),
                perturbed: Some(which),
            };
            (total, diag)
        }
        None => {
            let diag = LossDiagnostics {
                recon: recon.item().as_f64(),
                cont: None,
                total: weighted_recon.item().as_f64(),
                perturbed: None,
            };
            (weighted_recon, diag)
        }
    };
    Ok((total, diag))
}

// ---------------------------------------------------------------------------
// optimizer, early stopping, training loop
// ---------------------------------------------------------------------------

/// Adam with bias correction.
pub struct Adam<T: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: usize,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, param_sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: param_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: param_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    /// Apply one update from the accumulated gradients, then clear them.
    pub fn step(&mut self, params: &[(String, Tensor<T>)]) {
        assert_eq!(params.len(), self.m.len(), "optimizer state/param mismatch");
        self.step_count += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let corr1 = T::of(1.0 - self.beta1.powi(self.step_count as i32));
        let corr2 = T::of(1.0 - self.beta2.powi(self.step_count as i32));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        for (idx, (_, p)) in params.iter().enumerate() {
            let g = p.grad().expect("parameter without gradient accumulator");
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let mut data = p.data_mut();
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mhat = m[i] / corr1;
                let vhat = v[i] / corr2;
                data[i] = data[i] - lr * mhat / (vhat.sqrt() + eps);
            }
            p.zero_grad();
        }
    }
}

/// Stop after `patience + 1` consecutive epochs without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Observe one validation loss; returns true when training should stop.
    pub fn observe(&mut self, epoch: usize, val: f64) -> bool {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale > self.patience
    }
}

/// One line of the per-epoch metrics log. Epoch 0 is the pre-training
/// validation pass, so its train fields are null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_recon: Option<f64>,
    pub train_cont: Option<f64>,
    pub val_recon: f64,
    pub lr: f64,
    pub seconds: f64,
}

/// Everything the training loop owns; persisted to checkpoints.
pub struct TrainState<T: Scalar> {
    pub model: Model<T>,
    pub adam: Adam<T>,
    pub epoch: usize,
    pub stopper: EarlyStopper,
    pub rng: ChaCha20Rng,
    /// Snapshot of the best-validation parameter values.
    pub best_params: Vec<Vec<T>>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(net: &NetConfig, loocc: &LooccConfig, init_seed: u64, train_seed: u64) -> Result<Self> {
        loocc.validate()?;
        let model = Model::new(net, init_seed)?;
        let sizes: Vec<usize> = model.params().iter().map(|(_, p)| p.len()).collect();
        let best_params = model.params().iter().map(|(_, p)| p.to_vec()).collect();
        Ok(TrainState {
            model,
            adam: Adam::new(loocc.learning_rate, &sizes),
            epoch: 0,
            stopper: EarlyStopper::new(loocc.patience),
            rng: ChaCha20Rng::seed_from_u64(train_seed),
            best_params,
        })
    }

    fn snapshot_best(&mut self) {
        self.best_params = self.model.params().iter().map(|(_, p)| p.to_vec()).collect();
    }

    /// Write the best-validation snapshot into the live parameters. The
    /// training loop leaves the model at its last-epoch state so a resumed
    /// run continues exactly; call this before evaluating the artifact.
    pub fn restore_best(&self) {
        for ((_, p), saved) in self.model.params().iter().zip(self.best_params.iter()) {
            p.data_mut().copy_from_slice(saved);
        }
    }
}

/// Mean validation reconstruction loss (no gradients).
pub fn validation_recon<T: Scalar>(
    dataset: &Dataset<T>,
    indices: &[usize],
    model: &Model<T>,
    intr: &CameraIntrinsics,
    rcfg: &RenderConfig,
) -> Result<f64> {
    let _guard = no_grad();
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(16) {
        let x = assemble_batch(dataset, chunk);
        let z = model.encode(&x)?;
        let recon = render_batch(&model.decode(&z), intr, rcfg);
        let l1 = reconstruction_loss(&x, &recon)?.item().as_f64();
        total += l1 * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Stack dataset images (stored [H,W,3]) into a network batch [N,3,H,W].
pub fn assemble_batch<T: Scalar>(dataset: &Dataset<T>, indices: &[usize]) -> Tensor<T> {
    let images: Vec<Tensor<T>> = indices
        .iter()
        .map(|&i| crate::nets::image_to_net(&dataset.examples[i].scene.image))
        .collect();
    Tensor::concat(&images, 0)
}

/// Train until early stopping or the epoch cap, calling `sink` once per
/// metrics line (including epoch 0). The model ends at its last-epoch
/// parameters (so checkpointed runs resume exactly); the best-validation
/// snapshot is in `state.best_params`, restorable with
/// [`TrainState::restore_best`]. Fully deterministic given the seeds in
/// `state`.
pub fn train<T: Scalar>(
    state: &mut TrainState<T>,
    dataset: &Dataset<T>,
    loocc: &LooccConfig,
    intr: &CameraIntrinsics,
    rcfg: &RenderConfig,
    mut sink: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    loocc.validate()?;
    let train_idx = dataset.indices(Split::Train);
    let val_idx = dataset.indices(Split::Val);
    if train_idx.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::EmptySplit("val".into()));
    }

    let mut history = Vec::new();
    let mut emit = |state: &mut TrainState<T>,
                    history: &mut Vec<EpochMetrics>,
                    sink: &mut dyn FnMut(&EpochMetrics),
                    m: EpochMetrics|
     -> bool {
        let stop = state.stopper.observe(m.epoch, m.val_recon);
        if state.stopper.best_epoch == m.epoch && state.stopper.stale == 0 {
            state.snapshot_best();
        }
        sink(&m);
        history.push(m);
        stop
    };

    if state.epoch == 0 {
        let t0 = Instant::now();
        let val = validation_recon(dataset, &val_idx, &state.model, intr, rcfg)?;
        let m = EpochMetrics {
            epoch: 0,
            train_recon: None,
            train_cont: None,
            val_recon: val,
            lr: loocc.learning_rate,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if emit(state, &mut history, &mut sink, m) {
            return Ok(history);
        }
    }

    let params = state.model.params();
    while state.epoch < loocc.max_epochs {
        state.epoch += 1;
        let t0 = Instant::now();
        let mut order = train_idx.clone();
        deterministic_shuffle(&mut order, &mut state.rng);

        let mut recon_sum = 0.0;
        let mut cont_sum = 0.0;
        let mut cont_batches = 0usize;
        let mut seen = 0usize;
        for chunk in order.chunks(loocc.batch_size.max(1)) {
            let x = assemble_batch(dataset, chunk);
            for (_, p) in &params {
                p.zero_grad();
            }
            let (loss, diag) = total_loss(&x, &state.model, intr, rcfg, loocc, &mut state.rng)?;
            loss.backward()?;
            state.adam.step(&params);
            recon_sum += diag.recon * chunk.len() as f64;
            if let Some(c) = diag.cont {
                cont_sum += c;
                cont_batches += 1;
            }
            seen += chunk.len();
        }

        let val = validation_recon(dataset, &val_idx, &state.model, intr, rcfg)?;
        let m = EpochMetrics {
            epoch: state.epoch,
            train_recon: Some(recon_sum / seen as f64),
            train_cont: if cont_batches > 0 { Some(cont_sum / cont_batches as f64) } else { None },
            val_recon: val,
            lr: loocc.learning_rate,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if emit(state, &mut history, &mut sink, m) {
            break;
        }
    }
    Ok(history)
}

fn deterministic_shuffle(items: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    fn test_params() -> SceneParams<f64> {
        SceneParams {
            depth: T64::full(&[8, 8], 1.0),
            albedo: T64::full(&[8, 8, 3], 0.5),
            light: T64::from_vec(vec![0.5, 0.5, 10.0, -20.0], &[4]),
            camera: T64::from_vec(vec![5.0, -10.0, 0.0, 0.01, 0.0, 0.0], &[6]),
        }
    }

    #[test]
    fn zero_width_perturbation_is_identity() {
        let ranges = PerturbRanges {
            ambient_delta: 0.0,
            diffuse_delta: 0.0,
            light_pitch_delta: 0.0,
            light_yaw_delta: 0.0,
            camera_pitch_delta: 0.0,
            camera_yaw_delta: 0.0,
        };
        let p = test_params();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (aug, _) = perturb(&p, LooccMode::LooccLv, &ranges, &mut rng).unwrap();
        assert_eq!(aug.light.to_vec(), p.light.to_vec());
        assert_eq!(aug.camera.to_vec(), p.camera.to_vec());
    }

    #[test]
    fn mode_l_always_perturbs_light() {
        let p = test_params();
        let ranges = PerturbRanges::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (aug, which) = perturb(&p, LooccMode::LooccL, &ranges, &mut rng).unwrap();
            assert_eq!(which, Perturbed::Light);
            assert_eq!(aug.camera.to_vec(), p.camera.to_vec());
        }
    }

    #[test]
    fn lv_mode_choice_is_near_uniform() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut camera = 0usize;
        let draws = 10_000;
        for _ in 0..draws {
            if choose_perturbed(LooccMode::LooccLv, &mut rng).unwrap() == Perturbed::Camera {
                camera += 1;
            }
        }
        let f = camera as f64 / draws as f64;
        assert!((0.48..=0.52).contains(&f), "camera frequency {f}");
    }

    #[test]
    fn perturbation_touches_only_the_chosen_parameter() {
        let p = test_params();
        let ranges = PerturbRanges::default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (aug, which) = perturb(&p, LooccMode::LooccLv, &ranges, &mut rng).unwrap();
            // geometry and albedo share the exact tensors
            assert_eq!(aug.depth.to_vec(), p.depth.to_vec());
            assert_eq!(aug.albedo.to_vec(), p.albedo.to_vec());
            match which {
                Perturbed::Light => assert_eq!(aug.camera.to_vec(), p.camera.to_vec()),
                Perturbed::Camera => {
                    assert_eq!(aug.light.to_vec(), p.light.to_vec());
                    // roll and translations never move
                    assert_eq!(aug.camera.to_vec()[2..6], p.camera.to_vec()[2..6]);
                }
            }
            aug.validate().unwrap();
        }
    }

    #[test]
    fn leave_one_out_excludes_the_perturbed_block() {
        let n = 2;
        let f = 3;
        let block = |v: f64| T64::from_vec(vec![v; n * f], &[n, f]);
        let z = FeatureSet {
            z_geom: block(1.0),
            z_alb: block(2.0),
            z_cam: block(3.0),
            z_light: block(4.0),
        };
        let u = leave_one_out(&z, Perturbed::Camera);
        assert_eq!(u.shape(), &[n, 3 * f]);
        // stacking order geom, alb, light; camera absent
        let row = u.slice(0, 0, 1).to_vec();
        let pre_norm: Vec<f64> = vec![1.0; 3].into_iter().chain(vec![2.0; 3]).chain(vec![4.0; 3]).collect();
        let norm = pre_norm.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (a, b) in row.iter().zip(pre_norm.iter()) {
            assert!((a - b / norm).abs() < 1e-12);
        }
        let u_light = leave_one_out(&z, Perturbed::Light);
        let row = u_light.slice(0, 0, 1).to_vec();
        assert!((row[2 * f] - 3.0 / (1.0f64 * 3.0 + 4.0 * 3.0 + 9.0 * 3.0).sqrt()).abs() < 1e-12);
        // unit norm
        for i in 0..n {
            let r = u.slice(0, i, 1).to_vec();
            let nrm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nrm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nt_xent_matches_hand_computed_orthogonal_case() {
        // pairs (e1,e1) and (e2,e2) with e1 orthogonal to e2, tau = 0.5:
        // every anchor sees positive sim 1 and two negatives at 0, one at 1
        // -> loss = log(1 + 2 e^{-2})
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        let u = T64::from_vec([e1.clone(), e2.clone()].concat(), &[2, 2]);
        let u_aug = T64::from_vec([e1, e2].concat(), &[2, 2]);
        let loss = nt_xent(&u, &u_aug, 0.5).unwrap().item();
        let expected = (1.0 + 2.0 * (-2.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
    }

    #[test]
    fn nt_xent_is_scale_invariant() {
        let u = T64::from_vec(vec![0.3, -1.2, 0.8, 0.4, 2.0, -0.5], &[2, 3]);
        let v = T64::from_vec(vec![0.1, 0.9, -0.7, 1.1, -0.2, 0.6], &[2, 3]);
        let a = nt_xent(&u, &v, 0.5).unwrap().item();
        let b = nt_xent(&u.mul_scalar(3.0), &v.mul_scalar(3.0), 0.5).unwrap().item();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn nt_xent_rejects_singleton_batch() {
        let u = T64::from_vec(vec![1.0, 0.0], &[1, 2]);
        assert!(matches!(nt_xent(&u, &u, 0.5), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn raising_a_negative_similarity_never_decreases_the_loss() {
        // move one negative pair closer together and watch the loss
        let mk = |t: f64| {
            let e1 = vec![1.0, 0.0];
            // second pair rotates toward the first as t -> 0
            let e2 = vec![t.cos(), t.sin()];
            let u = T64::from_vec([e1.clone(), e2.clone()].concat(), &[2, 2]);
            nt_xent(&u, &u, 0.5).unwrap().item()
        };
        let mut prev = mk(std::f64::consts::FRAC_PI_2);
        for k in 1..8 {
            let angle = std::f64::consts::FRAC_PI_2 * (1.0 - k as f64 / 8.0);
            let cur = mk(angle);
            assert!(cur >= prev - 1e-12, "loss decreased as negatives got closer");
            prev = cur;
        }
    }

    #[test]
    fn reconstruction_loss_matches_bruteforce_l1() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..48).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..48).map(|_| rng.random_range(0.0..1.0)).collect();
        let manual: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 48.0;
        let loss = reconstruction_loss(
            &T64::from_vec(a, &[4, 4, 3]),
            &T64::from_vec(b, &[4, 4, 3]),
        )
        .unwrap()
        .item();
        assert!((loss - manual).abs() < 1e-12);
        assert_eq!(
            reconstruction_loss(&T64::zeros(&[2, 2, 3]), &T64::zeros(&[2, 2, 3])).unwrap().item(),
            0.0
        );
        assert_eq!(
            reconstruction_loss(&T64::zeros(&[2, 2, 3]), &T64::ones(&[2, 2, 3])).unwrap().item(),
            1.0
        );
    }

    #[test]
    fn early_stop_triggers_after_patience_plus_one_stagnant_epochs() {
        let mut stopper = EarlyStopper::new(3);
        assert!(!stopper.observe(0, 1.0)); // improvement over infinity
        assert!(!stopper.observe(1, 1.0)); // stale 1
        assert!(!stopper.observe(2, 1.0)); // stale 2
        assert!(!stopper.observe(3, 1.0)); // stale 3 == patience
        assert!(stopper.observe(4, 1.0)); // stale 4 == patience + 1: stop
        assert_eq!(stopper.best_epoch, 0);

        let mut improving = EarlyStopper::new(2);
        assert!(!improving.observe(0, 1.0));
        assert!(!improving.observe(1, 0.9));
        assert!(!improving.observe(2, 1.1));
        assert!(!improving.observe(3, 0.8)); // reset
        assert!(!improving.observe(4, 0.9));
        assert!(!improving.observe(5, 0.9));
        assert!(improving.observe(6, 0.9));
        assert_eq!(improving.best_epoch, 3);
    }
}
