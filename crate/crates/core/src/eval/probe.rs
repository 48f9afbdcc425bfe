//! Linear classification probes over extracted representations: a single
//! linear layer (optionally one hidden layer) trained with softmax cross
//! entropy, with the backbone frozen or finetuned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{no_grad, Tensor};
use crate::error::{Error, Result};
use crate::loocc::Adam;
use crate::nets::{extract_representation, Block, Model};
use crate::scalar::Scalar;
use crate::scene::{Dataset, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    Frozen,
    Finetune,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ProbeConfig {
    pub n_train: usize,
    pub mode: ProbeMode,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Optional hidden layer width; a plain linear classifier when absent.
    pub hidden: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            n_train: 100,
            mode: ProbeMode::Frozen,
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            hidden: None,
        }
    }
}

/// Which ground-truth label a task predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Shape,
    Albedo,
}

impl LabelKind {
    pub fn of<T: Scalar>(self, dataset: &Dataset<T>, index: usize) -> usize {
        let scene = &dataset.examples[index].scene;
        match self {
            LabelKind::Shape => scene.shape_class,
            LabelKind::Albedo => scene.albedo_class,
        }
    }

    pub fn class_count<T: Scalar>(self, dataset: &Dataset<T>) -> usize {
        match self {
            LabelKind::Shape => dataset.config.generator.k_shape,
            LabelKind::Albedo => dataset.config.generator.k_albedo,
        }
    }
}

/// The probe head: linear, or linear-relu-linear when `hidden` is set.
pub struct ProbeHead<T: Scalar> {
    layers: Vec<(Tensor<T>, Tensor<T>)>, // (w, b)
}

impl<T: Scalar> ProbeHead<T> {
    /// The output layer starts at zero (the problem is convex for a plain
    /// linear head, and zero logits start at uniform class probabilities);
    /// a hidden layer, when configured, gets fan-in uniform init.
    fn new(rng: &mut ChaCha20Rng, d_in: usize, classes: usize, hidden: Option<usize>) -> Self {
        let mut dims = vec![d_in];
        if let Some(h) = hidden {
            dims.push(h);
        }
        dims.push(classes);
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let weights: Vec<T> = if i + 1 == n_layers {
                    vec![T::zero(); w[0] * w[1]]
                } else {
                    let bound = 1.0 / (w[0] as f64).sqrt();
                    (0..w[0] * w[1]).map(|_| T::of(rng.random_range(-bound..bound))).collect()
                };
                (
                    Tensor::param(weights, &[w[0], w[1]]),
                    Tensor::param(vec![T::zero(); w[1]], &[1, w[1]]),
                )
            })
            .collect();
        ProbeHead { layers }
    }

    /// Class logits for feature rows [N,D].
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut h = x.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.matmul(w).add(b);
            if i + 1 < self.layers.len() {
                h = h.relu();
            }
        }
        h
    }

    /// Argmax class per row.
    pub fn predict(&self, x: &Tensor<T>) -> Vec<usize> {
        let logits = self.forward(x);
        let classes = logits.shape()[1];
        let v = logits.to_vec();
        (0..logits.shape()[0])
            .map(|i| {
                let row = &v[i * classes..(i + 1) * classes];
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap()
            })
            .collect()
    }

    fn params(&self) -> Vec<(String, Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, (w, b))| {
                [(format!("head.l{i}.w"), w.clone()), (format!("head.l{i}.b"), b.clone())]
            })
            .collect()
    }
}

fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize], classes: usize) -> Tensor<T> {
    let n = labels.len();
    let mut onehot = vec![T::zero(); n * classes];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * classes + l] = T::one();
    }
    let target = Tensor::from_vec(onehot, &[n, classes]);
    logits.log_softmax(1).mul(&target).sum_all().mul_scalar(-1.0 / n as f64)
}

fn accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> f64 {
    let classes = logits.shape()[1];
    let v = logits.to_vec();
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(i, &l)| {
            let row = &v[i * classes..(i + 1) * classes];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap();
            argmax == l
        })
        .count();
    correct as f64 / labels.len() as f64
}

/// Fit a probe head on precomputed feature rows (the frozen path: only
/// the head's parameters move).
pub fn fit_probe_head<T: Scalar>(
    train_x: &Tensor<T>,
    train_y: &[usize],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeHead<T>> {
    if train_x.shape()[0] != train_y.len() {
        return Err(Error::Other("feature/label length mismatch".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let head = ProbeHead::new(&mut rng, train_x.shape()[1], classes, cfg.hidden);
    let params = head.params();
    let sizes: Vec<usize> = params.iter().map(|(_, p)| p.len()).collect();
    let mut adam = Adam::new(cfg.learning_rate, &sizes);
    let n = train_y.len();
    let batch = cfg.batch_size.max(1).min(n);
    for _ in 0..cfg.epochs {
        let mut start = 0usize;
        while start < n {
            let end = (start + batch).min(n);
            for (_, p) in &params {
                p.zero_grad();
            }
            let xb = train_x.slice(0, start, end - start);
            let loss = cross_entropy(&head.forward(&xb), &train_y[start..end], classes);
            loss.backward()?;
            adam.step(&params);
            start = end;
        }
    }
    Ok(head)
}

/// Train a probe on precomputed feature rows and return test accuracy.
pub fn probe_features<T: Scalar>(
    train_x: &Tensor<T>,
    train_y: &[usize],
    test_x: &Tensor<T>,
    test_y: &[usize],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<f64> {
    if test_x.shape()[0] != test_y.len() {
        return Err(Error::Other("feature/label length mismatch".into()));
    }
    let head = fit_probe_head(train_x, train_y, classes, cfg)?;
    let _guard = no_grad();
    Ok(accuracy(&head.forward(test_x), test_y))
}

/// The full probe protocol over a dataset: take `n_train` labeled training
/// samples (seeded shuffle of the train split), train the head for
/// `epochs`, and report accuracy on the test split. Frozen mode leaves the
/// encoders untouched; finetune mode updates them jointly with the head.
pub fn linear_probe<T: Scalar>(
    model: &Model<T>,
    dataset: &Dataset<T>,
    label: LabelKind,
    blocks: &[Block],
    cfg: &ProbeConfig,
) -> Result<f64> {
    let mut train_idx = dataset.indices(Split::Train);
    let test_idx = dataset.indices(Split::Test);
    if test_idx.is_empty() {
        return Err(Error::EmptySplit("test".into()));
    }
    if cfg.n_train > train_idx.len() {
        return Err(Error::NotEnoughLabeled { requested: cfg.n_train, available: train_idx.len() });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    for i in (1..train_idx.len()).rev() {
        let j = rng.random_range(0..=i);
        train_idx.swap(i, j);
    }
    train_idx.truncate(cfg.n_train);
    let train_y: Vec<usize> = train_idx.iter().map(|&i| label.of(dataset, i)).collect();
    let test_y: Vec<usize> = test_idx.iter().map(|&i| label.of(dataset, i)).collect();
    let classes = label.class_count(dataset);

    let features_of = |indices: &[usize], model: &Model<T>| -> Result<Tensor<T>> {
        let x = crate::loocc::assemble_batch(dataset, indices);
        let z = model.encode(&x)?;
        extract_representation(&z, blocks)
    };

    match cfg.mode {
        ProbeMode::Frozen => {
            let _guard = no_grad();
            let train_x = features_of(&train_idx, model)?;
            let test_x = features_of(&test_idx, model)?;
            drop(_guard);
            probe_features(&train_x, &train_y, &test_x, &test_y, classes, cfg)
        }
        ProbeMode::Finetune => {
            let head = ProbeHead::new(&mut rng, blocks.len() * model.config.feature_dim, classes, cfg.hidden);
            let mut params = head.params();
            params.extend(model.params());
            let sizes: Vec<usize> = params.iter().map(|(_, p)| p.len()).collect();
            let mut adam = Adam::new(cfg.learning_rate, &sizes);
            for _ in 0..cfg.epochs {
                for chunk in train_idx.chunks(cfg.batch_size.max(1)) {
                    let y: Vec<usize> = chunk.iter().map(|&i| label.of(dataset, i)).collect();
                    for (_, p) in &params {
                        p.zero_grad();
                    }
                    let feats = features_of(chunk, model)?;
                    let loss = cross_entropy(&head.forward(&feats), &y, classes);
                    loss.backward()?;
                    adam.step(&params);
                }
            }
            let _guard = no_grad();
            let test_x = features_of(&test_idx, model)?;
            Ok(accuracy(&head.forward(&test_x), &test_y))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    fn blob_features(seed: u64, per_class: usize, classes: usize, d: usize, sep: f64) -> (T64, Vec<usize>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..per_class {
                for t in 0..d {
                    let center = if t == c % d { sep * (c as f64 + 1.0) } else { 0.0 };
                    rows.push(center + rng.random_range(-0.5..0.5));
                }
                labels.push(c);
            }
        }
        (T64::from_vec(rows, &[per_class * classes, d]), labels)
    }

    #[test]
    fn separable_classes_reach_high_accuracy() {
        let (train_x, train_y) = blob_features(1, 30, 2, 4, 5.0);
        let (test_x, test_y) = blob_features(2, 30, 2, 4, 5.0);
        let cfg = ProbeConfig { epochs: 100, ..Default::default() };
        let train_acc =
            probe_features(&train_x, &train_y, &train_x, &train_y, 2, &cfg).unwrap();
        let test_acc = probe_features(&train_x, &train_y, &test_x, &test_y, 2, &cfg).unwrap();
        assert_eq!(train_acc, 1.0, "separable training data must fit exactly");
        assert!(test_acc >= 0.95, "test accuracy {test_acc}");
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let classes = 4;
        let (x, mut y) = blob_features(3, 50, classes, 6, 3.0);
        // destroy the feature-label relationship deterministically
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for i in (1..y.len()).rev() {
            let j = rng.random_range(0..=i);
            y.swap(i, j);
        }
        let (tx, ty) = blob_features(4, 50, classes, 6, 3.0);
        let mut ty_shuffled = ty;
        for i in (1..ty_shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            ty_shuffled.swap(i, j);
        }
        let cfg = ProbeConfig { epochs: 60, ..Default::default() };
        let acc = probe_features(&x, &y, &tx, &ty_shuffled, classes, &cfg).unwrap();
        let chance = 1.0 / classes as f64;
        assert!(
            (chance - 0.1..=chance + 0.1).contains(&acc),
            "accuracy {acc} not within 0.1 of chance {chance}"
        );
    }

    #[test]
    fn probe_is_deterministic_given_seed() {
        let (x, y) = blob_features(5, 20, 3, 5, 2.0);
        let cfg = ProbeConfig { epochs: 30, seed: 42, ..Default::default() };
        let a = probe_features(&x, &y, &x, &y, 3, &cfg).unwrap();
        let b = probe_features(&x, &y, &x, &y, 3, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
