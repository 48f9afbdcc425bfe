//! Procedural scene generation.
//!
//! Depth maps are smooth analytic height fields: one of five parametric
//! templates (dome, ridge, pyramid, saddle, twin-bump) plus up to four
//! seeded Gaussian bumps, min-max normalized into the depth range. Albedo
//! is one of four patterns (flat, horizontal stripes, checker, radial
//! gradient) with seeded hue jitter. Light and camera are sampled uniformly
//! around the canonical frontal pose. Everything is a pure function of
//! (seed, classes, config).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::render::{render, CameraIntrinsics, RenderConfig};
use crate::scalar::Scalar;

use super::dataset::{Dataset, DatasetConfig, DatasetExample, Split};
use super::ranges;
use super::{LabeledScene, SceneParams};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Image side length; 64 by default, 16 and 32 are the fast-test sizes.
    pub image_size: usize,
    pub fov_deg: f64,
    pub k_shape: usize,
    pub k_albedo: usize,
    pub render: RenderConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            image_size: 64,
            fov_deg: 30.0,
            k_shape: 5,
            k_albedo: 4,
            render: RenderConfig::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::new(self.image_size, self.fov_deg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 {
            return Err(Error::InvalidConfig(format!(
                "image_size {} too small (minimum 8)",
                self.image_size
            )));
        }
        if self.k_shape == 0 || self.k_shape > 5 || self.k_albedo == 0 || self.k_albedo > 4 {
            return Err(Error::InvalidConfig(format!(
                "k_shape must be 1..=5 and k_albedo 1..=4, got {} and {}",
                self.k_shape, self.k_albedo
            )));
        }
        self.render.validate()
    }
}

/// Deterministic per-scene RNG: the stream is a function of the seed and
/// both class indices.
fn scene_rng(seed: u64, shape_class: usize, albedo_class: usize) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(shape_class as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(albedo_class as u64).to_le_bytes());
    key[24..32].copy_from_slice(&0x5ce4e5eed_u64.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

fn base_template(class: usize, u: f64, v: f64) -> f64 {
    match class {
        // dome
        0 => (-(u * u + v * v) / 0.5).exp(),
        // vertical ridge
        1 => (-(u * u) / 0.18).exp(),
        // pyramid
        2 => (1.0 - u.abs().max(v.abs()) / 0.9).max(0.0),
        // saddle
        3 => 0.5 + 0.5 * (u * u - v * v),
        // twin bump
        4 => {
            let a = (-((u - 0.45) * (u - 0.45) + v * v) / 0.12).exp();
            let b = (-((u + 0.45) * (u + 0.45) + v * v) / 0.12).exp();
            a + b
        }
        _ => unreachable!("shape class checked by caller"),
    }
}

fn depth_field(rng: &mut ChaCha20Rng, shape_class: usize, size: usize) -> Vec<f64> {
    // up to 4 seeded Gaussian bumps jitter the template
    let n_bumps = rng.random_range(1..=4usize);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..n_bumps)
        .map(|_| {
            let cu = rng.random_range(-0.8..0.8);
            let cv = rng.random_range(-0.8..0.8);
            let sigma: f64 = rng.random_range(0.15..0.4);
            let amp = rng.random_range(-0.25..0.25);
            (cu, cv, sigma, amp)
        })
        .collect();
    let mut field = vec![0.0f64; size * size];
    for r in 0..size {
        for c in 0..size {
            let u = 2.0 * c as f64 / (size as f64 - 1.0) - 1.0;
            let v = 2.0 * r as f64 / (size as f64 - 1.0) - 1.0;
            let mut h = base_template(shape_class, u, v);
            for &(cu, cv, sigma, amp) in &bumps {
                let d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
                h += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            field[r * size + c] = h;
        }
    }
    // min-max normalize, then map height to depth: taller means closer
    let lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    for h in field.iter_mut() {
        let norm = (*h - lo) / span;
        *h = ranges::DEPTH_MAX - (ranges::DEPTH_MAX - ranges::DEPTH_MIN) * norm;
    }
    field
}

fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h_deg.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

fn albedo_field(rng: &mut ChaCha20Rng, albedo_class: usize, size: usize) -> Vec<f64> {
    let hue = rng.random_range(0.0..360.0);
    let hue2 = hue + rng.random_range(120.0..240.0);
    let sat = rng.random_range(0.55..0.95);
    let val = rng.random_range(0.6..0.95);
    let c1 = hsv_to_rgb(hue, sat, val);
    let c2 = hsv_to_rgb(hue2, sat, val);
    let n_stripes = rng.random_range(3..=6usize) as f64;
    let mut field = vec![0.0f64; size * size * 3];
    for r in 0..size {
        for c in 0..size {
            let fu = c as f64 / (size as f64 - 1.0);
            let fv = r as f64 / (size as f64 - 1.0);
            let color = match albedo_class {
                // flat color
                0 => c1,
                // horizontal stripes
                1 => {
                    if (fv * n_stripes) as usize % 2 == 0 {
                        c1
                    } else {
                        c2
                    }
                }
                // checker
                2 => {
                    if ((fu * n_stripes) as usize + (fv * n_stripes) as usize) % 2 == 0 {
                        c1
                    } else {
                        c2
                    }
                }
                // radial gradient
                3 => {
                    let t = (((fu - 0.5).powi(2) + (fv - 0.5).powi(2)).sqrt() / 0.7071).min(1.0);
                    [
                        c1[0] * (1.0 - t) + c2[0] * t,
                        c1[1] * (1.0 - t) + c2[1] * t,
                        c1[2] * (1.0 - t) + c2[2] * t,
                    ]
                }
                _ => unreachable!("albedo class checked by caller"),
            };
            let base = (r * size + c) * 3;
            field[base..base + 3].copy_from_slice(&color);
        }
    }
    field
}

/// Generate one labeled scene. Deterministic in (seed, classes, config);
/// the image is produced by the renderer from the sampled parameters.
pub fn generate_scene<T: Scalar>(
    seed: u64,
    shape_class: usize,
    albedo_class: usize,
    cfg: &GeneratorConfig,
) -> Result<LabeledScene<T>> {
    cfg.validate()?;
    if shape_class >= cfg.k_shape {
        return Err(Error::ClassOutOfRange { index: shape_class, count: cfg.k_shape });
    }
    if albedo_class >= cfg.k_albedo {
        return Err(Error::ClassOutOfRange { index: albedo_class, count: cfg.k_albedo });
    }
    let size = cfg.image_size;
    let mut rng = scene_rng(seed, shape_class, albedo_class);

    // sampling order is fixed: depth, albedo, light, camera
    let depth = depth_field(&mut rng, shape_class, size);
    let albedo = albedo_field(&mut rng, albedo_class, size);
    let light = [
        0.5 + rng.random_range(-ranges::GEN_LIGHT_INTENSITY_DELTA..ranges::GEN_LIGHT_INTENSITY_DELTA),
        0.5 + rng.random_range(-ranges::GEN_LIGHT_INTENSITY_DELTA..ranges::GEN_LIGHT_INTENSITY_DELTA),
        rng.random_range(-ranges::GEN_LIGHT_ANGLE_DELTA..ranges::GEN_LIGHT_ANGLE_DELTA),
        rng.random_range(-ranges::GEN_LIGHT_ANGLE_DELTA..ranges::GEN_LIGHT_ANGLE_DELTA),
    ];
    let camera = [
        rng.random_range(-ranges::GEN_CAMERA_PITCH_DELTA..ranges::GEN_CAMERA_PITCH_DELTA),
        rng.random_range(-ranges::GEN_CAMERA_YAW_DELTA..ranges::GEN_CAMERA_YAW_DELTA),
        0.0,
        0.0,
        0.0,
        0.0,
    ];

    let params = SceneParams {
        depth: Tensor::from_vec(depth.iter().map(|&v| T::of(v)).collect(), &[size, size]),
        albedo: Tensor::from_vec(albedo.iter().map(|&v| T::of(v)).collect(), &[size, size, 3]),
        light: Tensor::from_vec(light.iter().map(|&v| T::of(v)).collect(), &[4]),
        camera: Tensor::from_vec(camera.iter().map(|&v| T::of(v)).collect(), &[6]),
    };
    params.validate()?;
    let image = render(&params, &cfg.intrinsics(), &cfg.render);
    Ok(LabeledScene { image, params, shape_class, albedo_class, seed })
}

/// Generate a full dataset with stratified train/val/test splits.
///
/// Per-example seeds and class labels come from a ChaCha stream over the
/// master seed. Splits are stratified by shape class: each split's class
/// histogram is within one count of the proportional target, and split
/// sizes match the fractions exactly (largest-remainder rounding).
pub fn build_dataset<T: Scalar>(cfg: &DatasetConfig) -> Result<Dataset<T>> {
    build_dataset_with_threads(cfg, 1)
}

/// [`build_dataset`] with scene generation fanned out over `threads`
/// worker threads. Every scene is a pure function of its own seed, so the
/// output is bit-identical for any thread count.
pub fn build_dataset_with_threads<T: Scalar>(cfg: &DatasetConfig, threads: usize) -> Result<Dataset<T>> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;

    // the label stream is drawn up front so the split rng below sees the
    // same state regardless of how generation is scheduled
    let specs: Vec<(u64, usize, usize)> = (0..n)
        .map(|_| {
            let seed: u64 = rng.random();
            let shape_class = rng.random_range(0..cfg.generator.k_shape);
            let albedo_class = rng.random_range(0..cfg.generator.k_albedo);
            (seed, shape_class, albedo_class)
        })
        .collect();

    let scenes: Vec<LabeledScene<T>> = if threads <= 1 {
        let mut out = Vec::with_capacity(n);
        for &(seed, shape, albedo) in &specs {
            out.push(generate_scene::<T>(seed, shape, albedo, &cfg.generator)?);
        }
        out
    } else {
        // tensors are not Send; workers return plain buffers and the main
        // thread reassembles
        type Raw<S> = (Vec<S>, Vec<S>, Vec<S>, Vec<S>, Vec<S>, u64, usize, usize);
        let chunk = n.div_ceil(threads);
        let mut slots: Vec<Option<Result<Raw<T>>>> = (0..n).map(|_| None).collect();
        std::thread::scope(|scope| {
            for (spec_chunk, slot_chunk) in specs.chunks(chunk).zip(slots.chunks_mut(chunk)) {
                scope.spawn(move || {
                    for (&(seed, shape, albedo), slot) in spec_chunk.iter().zip(slot_chunk.iter_mut()) {
                        *slot = Some(generate_scene::<T>(seed, shape, albedo, &cfg.generator).map(
                            |s| {
                                (
                                    s.image.to_vec(),
                                    s.params.depth.to_vec(),
                                    s.params.albedo.to_vec(),
                                    s.params.light.to_vec(),
                                    s.params.camera.to_vec(),
                                    s.seed,
                                    s.shape_class,
                                    s.albedo_class,
                                )
                            },
                        ));
                    }
                });
            }
        });
        let size = cfg.generator.image_size;
        slots
            .into_iter()
            .map(|s| {
                s.expect("every slot filled").map(
                    |(image, depth, albedo, light, camera, seed, shape_class, albedo_class)| {
                        LabeledScene {
                            image: Tensor::from_vec(image, &[size, size, 3]),
                            params: SceneParams {
                                depth: Tensor::from_vec(depth, &[size, size]),
                                albedo: Tensor::from_vec(albedo, &[size, size, 3]),
                                light: Tensor::from_vec(light, &[4]),
                                camera: Tensor::from_vec(camera, &[6]),
                            },
                            shape_class,
                            albedo_class,
                            seed,
                        }
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?
    };

    let split_of = assign_splits(&scenes, cfg.fractions, &mut rng);
    let examples = scenes
        .into_iter()
        .zip(split_of)
        .map(|(scene, split)| DatasetExample { scene, split })
        .collect();
    Ok(Dataset { config: cfg.clone(), examples })
}

/// Largest-remainder split sizing, by class, then global repair moves that
/// keep every class within +-1 of its proportional share.
fn assign_splits<T: Scalar>(
    scenes: &[LabeledScene<T>],
    fractions: [f64; 3],
    rng: &mut ChaCha20Rng,
) -> Vec<Split> {
    let n = scenes.len();
    let k_shape = scenes.iter().map(|s| s.shape_class).max().unwrap_or(0) + 1;
    let global_target = largest_remainder(n, fractions);

    // per class: desired counts per split
    let mut class_members: Vec<Vec<usize>> = vec![Vec::new(); k_shape];
    for (i, s) in scenes.iter().enumerate() {
        class_members[s.shape_class].push(i);
    }
    let mut counts: Vec<[usize; 3]> = class_members
        .iter()
        .map(|members| largest_remainder(members.len(), fractions))
        .collect();

    // repair pass: make global sizes exact while staying within +-1 per class
    loop {
        let totals: [usize; 3] = [0, 1, 2].map(|s| counts.iter().map(|c| c[s]).sum());
        let Some(over) = (0..3).find(|&s| totals[s] > global_target[s]) else { break };
        let under = (0..3)
            .find(|&s| totals[s] < global_target[s])
            .expect("split totals sum to n, so an overfull split implies an underfull one");
        // pick the class with the most slack in the overfull split
        let (class, _) = counts
            .iter()
            .enumerate()
            .filter(|(c, k)| k[over] > 0 && class_members[*c].len() > 0)
            .map(|(c, k)| {
                let nc = class_members[c].len() as f64;
                (c, k[over] as f64 - fractions[over] * nc)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .expect("some class must have members in the overfull split");
        counts[class][over] -= 1;
        counts[class][under] += 1;
    }

    // deterministic shuffle within each class, then assign by counted order
    let mut split_of = vec![Split::Train; n];
    for (class, members) in class_members.iter().enumerate() {
        let mut order = members.clone();
        shuffle(&mut order, rng);
        let [n_train, n_val, _] = counts[class];
        for (rank, &idx) in order.iter().enumerate() {
            split_of[idx] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    split_of
}

fn largest_remainder(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut remainder = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).partial_cmp(&(raw[a] - raw[a].floor())).unwrap());
    for &i in order.iter() {
        if remainder == 0 {
            break;
        }
        sizes[i] += 1;
        remainder -= 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

fn shuffle(items: &mut [usize], rng: &mut ChaCha20Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}


#[cfg(test)]
mod thread_tests {
    use super::*;

    #[test]
    fn parallel_generation_is_bit_identical_to_sequential() {
        let cfg = DatasetConfig {
            n: 17,
            fractions: [0.8, 0.1, 0.1],
            seed: 33,
            generator: GeneratorConfig { image_size: 16, ..Default::default() },
        };
        let seq = build_dataset_with_threads::<f32>(&cfg, 1).unwrap();
        let par = build_dataset_with_threads::<f32>(&cfg, 4).unwrap();
        for (a, b) in seq.examples.iter().zip(par.examples.iter()) {
            assert_eq!(a.split, b.split);
            assert_eq!(a.scene.seed, b.scene.seed);
            let bits = |t: &crate::ad::Tensor<f32>| -> Vec<u32> {
                t.data().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(&a.scene.image), bits(&b.scene.image));
            assert_eq!(bits(&a.scene.params.depth), bits(&b.scene.params.depth));
        }
    }
}
