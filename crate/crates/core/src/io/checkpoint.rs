//! Checkpoint persistence: model parameters, optimizer moments, RNG
//! position, early-stop state, and a config echo. Tensor payloads are PDRT
//! containers, so a save/load roundtrip is bit-exact.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io::pdrt;
use crate::loocc::{Adam, EarlyStopper, LooccMode, TrainState};
use crate::nets::Model;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    version: u32,
    dtype: String,
    mode: LooccMode,
    config: ExperimentConfig,
    epoch: usize,
    best_val: f64,
    best_epoch: usize,
    stale_epochs: usize,
    adam_step_count: usize,
    rng_seed_hex: String,
    rng_word_pos: String,
    param_names: Vec<String>,
    param_count: usize,
    architecture: String,
}

fn dtype_name<T: Scalar>() -> &'static str {
    match T::DTYPE {
        crate::scalar::Dtype::F32 => "f32",
        crate::scalar::Dtype::F64 => "f64",
    }
}

fn tensor_file(name: &str) -> String {
    format!("{}.pdrt", name.replace('.', "_"))
}

/// Write a training state: last-epoch parameters under `params/`, the
/// best-validation snapshot under `best/`, optimizer moments under
/// `optim/`.
pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    state: &TrainState<T>,
    config: &ExperimentConfig,
    mode: LooccMode,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params = state.model.params();
    for (name, p) in &params {
        pdrt::write_file(&dir.join("params").join(tensor_file(name)), p)?;
    }
    for ((name, _), best) in params.iter().zip(state.best_params.iter()) {
        let t = crate::ad::Tensor::from_vec(best.clone(), &[best.len()]);
        pdrt::write_file(&dir.join("best").join(tensor_file(name)), &t)?;
    }
    for (idx, (name, _)) in params.iter().enumerate() {
        let m = crate::ad::Tensor::from_vec(state.adam.m[idx].clone(), &[state.adam.m[idx].len()]);
        let v = crate::ad::Tensor::from_vec(state.adam.v[idx].clone(), &[state.adam.v[idx].len()]);
        pdrt::write_file(&dir.join("optim").join(format!("m_{}", tensor_file(name))), &m)?;
        pdrt::write_file(&dir.join("optim").join(format!("v_{}", tensor_file(name))), &v)?;
    }
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        dtype: dtype_name::<T>().to_string(),
        mode,
        config: config.clone(),
        epoch: state.epoch,
        best_val: state.stopper.best,
        best_epoch: state.stopper.best_epoch,
        stale_epochs: state.stopper.stale,
        adam_step_count: state.adam.step_count,
        rng_seed_hex: hex_encode(&state.rng.get_seed()),
        rng_word_pos: state.rng.get_word_pos().to_string(),
        param_names: params.iter().map(|(n, _)| n.clone()).collect(),
        param_count: state.model.param_count(),
        architecture: state.model.descriptor(),
    };
    let path = dir.join("checkpoint.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Other(format!("checkpoint serialization: {e}")))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Load a checkpoint saved by [`save_checkpoint`]. Returns the rebuilt
/// training state, the config echo, and the training mode.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(TrainState<T>, ExperimentConfig, LooccMode)> {
    let path = dir.join("checkpoint.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "checkpoint manifest",
        path: path.clone(),
        detail: e.to_string(),
    })?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            what: "checkpoint manifest",
            path,
            detail: format!("version {} unsupported", manifest.version),
        });
    }
    if manifest.dtype != dtype_name::<T>() {
        return Err(Error::Format {
            what: "checkpoint manifest",
            path,
            detail: format!("dtype {} does not match requested {}", manifest.dtype, dtype_name::<T>()),
        });
    }

    let model = Model::<T>::new(&manifest.config.net, 0)?;
    let expected: Vec<String> = model.params().iter().map(|(n, _)| n.clone()).collect();
    if expected != manifest.param_names {
        return Err(Error::Format {
            what: "checkpoint manifest",
            path,
            detail: "parameter names do not match the configured architecture".into(),
        });
    }
    let mut adam = Adam::new(manifest.config.loocc.learning_rate, &[]);
    adam.step_count = manifest.adam_step_count;
    let mut best_params = Vec::new();
    for (name, p) in model.params() {
        let stored = pdrt::read_file::<T>(&dir.join("params").join(tensor_file(&name)))?;
        if stored.shape() != p.shape() {
            return Err(Error::Other(format!(
                "checkpoint tensor {name} has shape {:?}, expected {:?}",
                stored.shape(),
                p.shape()
            )));
        }
        p.data_mut().copy_from_slice(&stored.data());
        let best = pdrt::read_file::<T>(&dir.join("best").join(tensor_file(&name)))?;
        best_params.push(best.to_vec());
        let m = pdrt::read_file::<T>(&dir.join("optim").join(format!("m_{}", tensor_file(&name))))?;
        let v = pdrt::read_file::<T>(&dir.join("optim").join(format!("v_{}", tensor_file(&name))))?;
        adam.m.push(m.to_vec());
        adam.v.push(v.to_vec());
    }

    let seed_bytes = hex_decode(&manifest.rng_seed_hex).ok_or_else(|| Error::Format {
        what: "checkpoint manifest",
        path: dir.join("checkpoint.json"),
        detail: "bad rng seed hex".into(),
    })?;
    let mut rng = ChaCha20Rng::from_seed(seed_bytes);
    let word_pos: u128 = manifest.rng_word_pos.parse().map_err(|_| Error::Format {
        what: "checkpoint manifest",
        path: dir.join("checkpoint.json"),
        detail: "bad rng word position".into(),
    })?;
    rng.set_word_pos(word_pos);

    let state = TrainState {
        model,
        adam,
        epoch: manifest.epoch,
        stopper: EarlyStopper {
            patience: manifest.config.loocc.patience,
            best: manifest.best_val,
            best_epoch: manifest.best_epoch,
            stale: manifest.stale_epochs,
        },
        rng,
        best_params,
    };
    Ok((state, manifest.config, manifest.mode))
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_decode(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for i in 0..32 {
        out[i] = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut config = ExperimentConfig::default();
        config.generator.image_size = 16;
        config.net = crate::nets::NetConfig {
            image_size: 16,
            feature_dim: 16,
            base_width: 4,
            mlp_hidden: 8,
        };
        let mut state =
            TrainState::<f32>::new(&config.net, &config.loocc, 7, 11).unwrap();
        // make the rng and optimizer state nontrivial
        let _: u64 = state.rng.random();
        let _: u64 = state.rng.random();
        state.adam.step_count = 5;
        for m in state.adam.m.iter_mut() {
            for (i, v) in m.iter_mut().enumerate() {
                *v = (i as f32 * 0.01).sin();
            }
        }
        state.epoch = 3;
        state.stopper.best = 0.123;
        state.stopper.best_epoch = 2;
        state.stopper.stale = 1;

        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &state, &config, LooccMode::LooccLv).unwrap();
        let (loaded, cfg_echo, mode) = load_checkpoint::<f32>(dir.path()).unwrap();

        assert_eq!(mode, LooccMode::LooccLv);
        assert_eq!(cfg_echo, config);
        assert_eq!(loaded.epoch, 3);
        assert_eq!(loaded.stopper.best, 0.123);
        assert_eq!(loaded.stopper.stale, 1);
        assert_eq!(loaded.adam.step_count, 5);
        assert_eq!(loaded.rng.get_word_pos(), state.rng.get_word_pos());
        for ((_, a), (_, b)) in state.model.params().iter().zip(loaded.model.params().iter()) {
            let bits = |t: &crate::ad::Tensor<f32>| -> Vec<u32> {
                t.data().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(a), bits(b));
        }
        for (a, b) in state.adam.m.iter().zip(loaded.adam.m.iter()) {
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<u32>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<u32>>()
            );
        }
        // the loaded rng continues the stream identically
        let mut orig = state.rng.clone();
        let mut back = loaded.rng.clone();
        let a: u64 = orig.random();
        let b: u64 = back.random();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_dtype_rejected() {
        let mut config = ExperimentConfig::default();
        config.generator.image_size = 16;
        config.net =
            crate::nets::NetConfig { image_size: 16, feature_dim: 8, base_width: 4, mlp_hidden: 8 };
        let state = TrainState::<f32>::new(&config.net, &config.loocc, 1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &state, &config, LooccMode::None).unwrap();
        assert!(load_checkpoint::<f64>(dir.path()).is_err());
    }
}
