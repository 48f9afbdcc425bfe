//! Dataset container and on-disk persistence.
//!
//! Layout: `manifest.json` plus one PDRT container per array under
//! `tensors/`. The manifest carries the full generator/dataset config echo
//! and per-example seeds and labels, so any example can be regenerated
//! bit-exactly without the tensor files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::pdrt;
use crate::scalar::Scalar;
use crate::scene::{GeneratorConfig, LabeledScene, SceneParams};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetConfig {
    pub n: usize,
    /// train/val/test fractions; must sum to 1.
    pub fractions: [f64; 3],
    pub seed: u64,
    pub generator: GeneratorConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n: 1000,
            fractions: [0.8, 0.1, 0.1],
            seed: 0,
            generator: GeneratorConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::DatasetTooSmall { n: self.n, min: 10 });
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.fractions.iter().any(|&f| f < 0.0) {
            return Err(Error::BadSplitFractions(self.fractions));
        }
        self.generator.validate()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetExample<T: Scalar> {
    pub scene: LabeledScene<T>,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Dataset<T: Scalar> {
    pub config: DatasetConfig,
    pub examples: Vec<DatasetExample<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.examples.iter().filter(|e| e.split == split).count()
    }

    pub fn image_size(&self) -> usize {
        self.config.generator.image_size
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    dtype: String,
    dataset: DatasetConfig,
    examples: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    index: usize,
    seed: u64,
    shape_class: usize,
    albedo_class: usize,
    split: Split,
    tensors: TensorFiles,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorFiles {
    image: String,
    depth: String,
    albedo: String,
    light: String,
    camera: String,
}

fn dtype_name<T: Scalar>() -> &'static str {
    match T::DTYPE {
        crate::scalar::Dtype::F32 => "f32",
        crate::scalar::Dtype::F64 => "f64",
    }
}

/// Write the dataset directory: manifest plus one PDRT file per array.
pub fn save_dataset<T: Scalar>(dir: &Path, dataset: &Dataset<T>) -> Result<()> {
    let tensor_dir = dir.join("tensors");
    fs::create_dir_all(&tensor_dir).map_err(|e| Error::io(&tensor_dir, e))?;

    let mut entries = Vec::with_capacity(dataset.examples.len());
    for (index, example) in dataset.examples.iter().enumerate() {
        let stem = format!("ex{index:05}");
        let files = TensorFiles {
            image: format!("tensors/{stem}_image.pdrt"),
            depth: format!("tensors/{stem}_depth.pdrt"),
            albedo: format!("tensors/{stem}_albedo.pdrt"),
            light: format!("tensors/{stem}_light.pdrt"),
            camera: format!("tensors/{stem}_camera.pdrt"),
        };
        let scene = &example.scene;
        pdrt::write_file(&dir.join(&files.image), &scene.image)?;
        pdrt::write_file(&dir.join(&files.depth), &scene.params.depth)?;
        pdrt::write_file(&dir.join(&files.albedo), &scene.params.albedo)?;
        pdrt::write_file(&dir.join(&files.light), &scene.params.light)?;
        pdrt::write_file(&dir.join(&files.camera), &scene.params.camera)?;
        entries.push(ManifestEntry {
            index,
            seed: scene.seed,
            shape_class: scene.shape_class,
            albedo_class: scene.albedo_class,
            split: example.split,
            tensors: files,
        });
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        dtype: dtype_name::<T>().to_string(),
        dataset: dataset.config.clone(),
        examples: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Other(format!("manifest serialization: {e}")))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Load a dataset directory written by [`save_dataset`]. The stored dtype
/// must match `T`.
pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "dataset manifest",
        path: path.clone(),
        detail: e.to_string(),
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Format {
            what: "dataset manifest",
            path,
            detail: format!("version {} unsupported", manifest.version),
        });
    }
    if manifest.dtype != dtype_name::<T>() {
        return Err(Error::Format {
            what: "dataset manifest",
            path,
            detail: format!("dtype {} does not match requested {}", manifest.dtype, dtype_name::<T>()),
        });
    }
    let mut examples = Vec::with_capacity(manifest.examples.len());
    for entry in &manifest.examples {
        let load = |rel: &str| -> Result<_> { pdrt::read_file::<T>(&dir.join(rel)) };
        let scene = LabeledScene {
            image: load(&entry.tensors.image)?,
            params: SceneParams {
                depth: load(&entry.tensors.depth)?,
                albedo: load(&entry.tensors.albedo)?,
                light: load(&entry.tensors.light)?,
                camera: load(&entry.tensors.camera)?,
            },
            shape_class: entry.shape_class,
            albedo_class: entry.albedo_class,
            seed: entry.seed,
        };
        examples.push(DatasetExample { scene, split: entry.split });
    }
    Ok(Dataset { config: manifest.dataset, examples })
}

/// Convenience: path of the manifest inside a dataset directory.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::build_dataset;

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let cfg = DatasetConfig {
            n: 10,
            fractions: [0.8, 0.1, 0.1],
            seed: 9,
            generator: GeneratorConfig { image_size: 16, ..Default::default() },
        };
        let ds = build_dataset::<f32>(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset::<f32>(dir.path()).unwrap();
        assert_eq!(back.examples.len(), ds.examples.len());
        for (a, b) in ds.examples.iter().zip(back.examples.iter()) {
            assert_eq!(a.split, b.split);
            assert_eq!(a.scene.seed, b.scene.seed);
            let bits = |t: &crate::ad::Tensor<f32>| -> Vec<u32> {
                t.data().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(&a.scene.image), bits(&b.scene.image));
            assert_eq!(bits(&a.scene.params.depth), bits(&b.scene.params.depth));
            assert_eq!(bits(&a.scene.params.albedo), bits(&b.scene.params.albedo));
            assert_eq!(bits(&a.scene.params.light), bits(&b.scene.params.light));
            assert_eq!(bits(&a.scene.params.camera), bits(&b.scene.params.camera));
        }
    }

    #[test]
    fn bad_fractions_rejected() {
        let cfg = DatasetConfig {
            n: 20,
            fractions: [0.5, 0.2, 0.2],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::BadSplitFractions(_))));
    }

    #[test]
    fn tiny_dataset_rejected() {
        let cfg = DatasetConfig { n: 5, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::DatasetTooSmall { .. })));
    }

    #[test]
    fn wrong_dtype_load_fails() {
        let cfg = DatasetConfig {
            n: 10,
            seed: 2,
            fractions: [0.8, 0.1, 0.1],
            generator: GeneratorConfig { image_size: 8, ..Default::default() },
        };
        let ds = build_dataset::<f32>(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        assert!(load_dataset::<f64>(dir.path()).is_err());
    }
}
