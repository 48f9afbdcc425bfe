//! Scene parameterization and procedural generation of labeled synthetic
//! scenes: parametric depth templates, albedo patterns, and uniformly
//! sampled light/camera around a canonical frontal pose.

mod dataset;
mod generate;

pub use dataset::{load_dataset, save_dataset, Dataset, DatasetConfig, DatasetExample, Split};
pub use generate::{build_dataset, build_dataset_with_threads, generate_scene, GeneratorConfig};

use crate::ad::Tensor;
use crate::scalar::Scalar;

/// Explicit scene description: the renderer's input and the decoders'
/// target. Depth [H,W], albedo [H,W,3], light [4] as (k_ambient, k_diffuse,
/// pitch deg, yaw deg), camera [6] as (rx, ry, rz deg, tx, ty, tz).
#[derive(Debug, Clone)]
pub struct SceneParams<T: Scalar> {
    pub depth: Tensor<T>,
    pub albedo: Tensor<T>,
    pub light: Tensor<T>,
    pub camera: Tensor<T>,
}

/// Central definition of every parameter range. Scene generation samples
/// inside these, decoder squashing maps into them, and perturbation clamps
/// back to them.
pub mod ranges {
    /// Camera standoff d0: canonical distance from camera to surface.
    pub const DEPTH_STANDOFF: f64 = 1.0;
    /// Depth values live in [0.9, 1.1] * d0.
    pub const DEPTH_MIN: f64 = 0.9 * DEPTH_STANDOFF;
    pub const DEPTH_MAX: f64 = 1.1 * DEPTH_STANDOFF;

    pub const LIGHT_INTENSITY_MIN: f64 = 0.0;
    pub const LIGHT_INTENSITY_MAX: f64 = 1.0;
    pub const LIGHT_ANGLE_MIN: f64 = -90.0;
    pub const LIGHT_ANGLE_MAX: f64 = 90.0;

    /// Decoder codomain for camera rotations, degrees.
    pub const CAMERA_ROT_MIN: f64 = -60.0;
    pub const CAMERA_ROT_MAX: f64 = 60.0;
    /// Decoder codomain for camera translations, scene units.
    pub const CAMERA_TRANS_MIN: f64 = -0.3;
    pub const CAMERA_TRANS_MAX: f64 = 0.3;

    /// Dataset sampling half-ranges around the canonical pose (the same
    /// ranges used for training-time augmentation).
    pub const GEN_LIGHT_INTENSITY_DELTA: f64 = 0.5;
    pub const GEN_LIGHT_ANGLE_DELTA: f64 = 45.0;
    pub const GEN_CAMERA_PITCH_DELTA: f64 = 22.5;
    pub const GEN_CAMERA_YAW_DELTA: f64 = 45.0;
}

impl<T: Scalar> SceneParams<T> {
    /// Check every range invariant; depth must be strictly positive.
    /// Bounds are compared after conversion to `T`, so values produced in
    /// f64 and rounded into f32 still validate (rounding is monotonic).
    pub fn validate(&self) -> crate::Result<()> {
        use ranges::*;
        let bad = |what: &str| crate::Error::Other(format!("scene params out of range: {what}"));
        let within = |v: T, lo: f64, hi: f64| v >= T::of(lo) && v <= T::of(hi);
        if self.depth.ndim() != 2 {
            return Err(bad("depth must be [H,W]"));
        }
        if self.albedo.shape() != [self.depth.shape()[0], self.depth.shape()[1], 3] {
            return Err(bad("albedo must be [H,W,3] matching depth"));
        }
        for &d in self.depth.data().iter() {
            if !(d > T::zero() && within(d, DEPTH_MIN, DEPTH_MAX)) {
                return Err(bad("depth"));
            }
        }
        for &a in self.albedo.data().iter() {
            if !within(a, 0.0, 1.0) {
                return Err(bad("albedo"));
            }
        }
        let l = self.light.to_vec();
        if l.len() != 4 {
            return Err(bad("light must have 4 components"));
        }
        if !within(l[0], LIGHT_INTENSITY_MIN, LIGHT_INTENSITY_MAX)
            || !within(l[1], LIGHT_INTENSITY_MIN, LIGHT_INTENSITY_MAX)
            || !within(l[2], LIGHT_ANGLE_MIN, LIGHT_ANGLE_MAX)
            || !within(l[3], LIGHT_ANGLE_MIN, LIGHT_ANGLE_MAX)
        {
            return Err(bad("light"));
        }
        let c = self.camera.to_vec();
        if c.len() != 6 {
            return Err(bad("camera must have 6 components"));
        }
        if c[0..3].iter().any(|&v| !within(v, CAMERA_ROT_MIN, CAMERA_ROT_MAX)) {
            return Err(bad("camera rotation"));
        }
        if c[3..6].iter().any(|&v| !within(v, CAMERA_TRANS_MIN, CAMERA_TRANS_MAX)) {
            return Err(bad("camera translation"));
        }
        Ok(())
    }

    /// Detached copy with all four fields cut from any graph.
    pub fn detach(&self) -> SceneParams<T> {
        SceneParams {
            depth: self.depth.detach(),
            albedo: self.albedo.detach(),
            light: self.light.detach(),
            camera: self.camera.detach(),
        }
    }
}

/// A rendered image with its generating parameters and class labels.
#[derive(Debug, Clone)]
pub struct LabeledScene<T: Scalar> {
    pub image: Tensor<T>,
    pub params: SceneParams<T>,
    pub shape_class: usize,
    pub albedo_class: usize,
    pub seed: u64,
}
