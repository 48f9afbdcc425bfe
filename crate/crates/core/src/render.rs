//! Differentiable renderer: depth-map Lambertian shading in the canonical
//! frame, followed by soft point-splat reprojection into the target view.
//!
//! Every stage is built from tensor ops, so the whole image-formation chain
//! is differentiable w.r.t. depth, albedo, light, and camera. Splatting
//! distributes each source pixel onto its four nearest target pixels with
//! bilinear weights times a soft visibility term exp(-(z - z_near)/sigma_z),
//! where z_near is the nearest contributing depth at that target pixel
//! (held constant during backprop; it cancels in the normalized blend, so
//! gradients are unaffected). Target pixels whose total weight falls below
//! `eps_w` take the background color.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::ad::{ScatterSpec, Tensor};
use crate::scalar::Scalar;
use crate::scene::SceneParams;

/// Pinhole camera shared by the canonical and target views.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Image side length (square images).
    pub size: usize,
    /// Full field of view in degrees; focal length derives from it.
    pub fov_deg: f64,
}

impl CameraIntrinsics {
    pub fn new(size: usize, fov_deg: f64) -> Self {
        assert!(size >= 2, "image size must be at least 2");
        assert!(fov_deg > 0.0 && fov_deg < 180.0, "fov {fov_deg} out of (0, 180)");
        CameraIntrinsics { size, fov_deg }
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        (self.size as f64 / 2.0) / (self.fov_deg.to_radians() / 2.0).tan()
    }

    /// Principal point (pixel centers at integer coordinates).
    pub fn center(&self) -> f64 {
        (self.size as f64 - 1.0) / 2.0
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics::new(64, 30.0)
    }
}

/// Splat and coverage controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Soft visibility temperature in scene units.
    pub sigma_z: f64,
    /// Coverage threshold below which a pixel takes the background color.
    pub eps_w: f64,
    /// Background color.
    pub background: [f64; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { sigma_z: 0.02, eps_w: 1e-3, background: [0.5, 0.5, 0.5] }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.sigma_z <= 0.0 || self.eps_w <= 0.0 {
            return Err(crate::Error::InvalidConfig(format!(
                "sigma_z and eps_w must be positive, got {} and {}",
                self.sigma_z, self.eps_w
            )));
        }
        Ok(())
    }
}

/// Unit surface normals from a depth map.
///
/// n(u,v) = normalize((-dd/du, -dd/dv, 1)), central differences inside and
/// one-sided at the borders. The constant z component keeps the
/// normalization denominator >= 1.
pub fn normals_from_depth<T: Scalar>(depth: &Tensor<T>) -> Tensor<T> {
    assert!(depth.ndim() == 2, "depth must be [H,W], got {:?}", depth.shape());
    let (h, w) = (depth.shape()[0], depth.shape()[1]);
    assert!(h >= 2 && w >= 2, "depth map too small: {:?}", depth.shape());

    // shift-left/right along u: edge columns repeat so the weighted
    // difference degrades to a one-sided difference there
    let left = Tensor::concat(&[depth.slice(1, 1, w - 1), depth.slice(1, w - 1, 1)], 1);
    let right = Tensor::concat(&[depth.slice(1, 0, 1), depth.slice(1, 0, w - 1)], 1);
    let mut wu = vec![T::of(0.5); w];
    wu[0] = T::one();
    wu[w - 1] = T::one();
    let du = left.sub(&right).mul(&Tensor::from_vec(wu, &[1, w]));

    let up = Tensor::concat(&[depth.slice(0, 1, h - 1), depth.slice(0, h - 1, 1)], 0);
    let down = Tensor::concat(&[depth.slice(0, 0, 1), depth.slice(0, 0, h - 1)], 0);
    let mut wv = vec![T::of(0.5); h];
    wv[0] = T::one();
    wv[h - 1] = T::one();
    let dv = up.sub(&down).mul(&Tensor::from_vec(wv, &[h, 1]));

    let parts = [
        du.neg().reshape(&[h, w, 1]),
        dv.neg().reshape(&[h, w, 1]),
        Tensor::ones(&[h, w, 1]),
    ];
    Tensor::concat(&parts, 2).l2_normalize(2)
}

/// Unit light direction from pitch and yaw scalars in degrees:
/// l = (cos p sin y, sin p, cos p cos y).
pub fn light_direction<T: Scalar>(pitch_deg: &Tensor<T>, yaw_deg: &Tensor<T>) -> Tensor<T> {
    assert!(pitch_deg.len() == 1 && yaw_deg.len() == 1, "angles must be scalars");
    let deg = std::f64::consts::PI / 180.0;
    let p = pitch_deg.reshape(&[1]).mul_scalar(deg);
    let y = yaw_deg.reshape(&[1]).mul_scalar(deg);
    let lx = p.cos().mul(&y.sin());
    let ly = p.sin();
    let lz = p.cos().mul(&y.cos());
    Tensor::concat(&[lx, ly, lz], 0)
}

/// Lambertian shading in the canonical frame:
/// albedo * clamp(k_amb + k_diff * max(0, n . l), 0, 1).
pub fn shade<T: Scalar>(albedo: &Tensor<T>, normals: &Tensor<T>, light: &Tensor<T>) -> Tensor<T> {
    assert!(
        albedo.ndim() == 3 && albedo.shape()[2] == 3,
        "albedo must be [H,W,3], got {:?}",
        albedo.shape()
    );
    assert!(
        albedo.shape() == normals.shape(),
        "albedo {:?} vs normals {:?}",
        albedo.shape(),
        normals.shape()
    );
    let light = light.reshape(&[4]);
    let k_amb = light.slice(0, 0, 1).reshape(&[]);
    let k_diff = light.slice(0, 1, 1).reshape(&[]);
    let l = light_direction(&light.slice(0, 2, 1), &light.slice(0, 3, 1)).reshape(&[1, 1, 3]);
    let ndotl = normals.mul(&l).sum_axis(2, true);
    let shading = k_amb.add(&k_diff.mul(&ndotl.relu())).clamp(0.0, 1.0);
    albedo.mul(&shading)
}

/// Euler rotation matrix entries for R = Rz(rz) * Ry(ry) * Rx(rx), angles
/// in degrees, returned as nine scalar tensors in row-major order.
fn rotation_entries<T: Scalar>(camera: &Tensor<T>) -> [Tensor<T>; 9] {
    let deg = std::f64::consts::PI / 180.0;
    let cam = camera.reshape(&[6]);
    let rx = cam.slice(0, 0, 1).mul_scalar(deg);
    let ry = cam.slice(0, 1, 1).mul_scalar(deg);
    let rz = cam.slice(0, 2, 1).mul_scalar(deg);
    let (sx, cx) = (rx.sin(), rx.cos());
    let (sy, cy) = (ry.sin(), ry.cos());
    let (sz, cz) = (rz.sin(), rz.cos());
    [
        cz.mul(&cy),
        cz.mul(&sy).mul(&sx).sub(&sz.mul(&cx)),
        cz.mul(&sy).mul(&cx).add(&sz.mul(&sx)),
        sz.mul(&cy),
        sz.mul(&sy).mul(&sx).add(&cz.mul(&cx)),
        sz.mul(&sy).mul(&cx).sub(&cz.mul(&sx)),
        sy.neg(),
        cy.mul(&sx),
        cy.mul(&cx),
    ]
}

/// Reproject a canonically shaded image into the view given by `camera`
/// (rx, ry, rz in degrees; tx, ty, tz in scene units) by soft point
/// splatting. Rotations pivot about the canonical object center
/// (0, 0, d0), so a yaw turns the object in place instead of sweeping it
/// out of the narrow frustum: p' = R (p - c) + c + t. Out-of-frame
/// projections contribute nothing.
pub fn reproject<T: Scalar>(
    canonical: &Tensor<T>,
    depth: &Tensor<T>,
    camera: &Tensor<T>,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> Tensor<T> {
    let (h, w) = (depth.shape()[0], depth.shape()[1]);
    assert!(
        canonical.shape() == [h, w, 3],
        "canonical image {:?} vs depth {:?}",
        canonical.shape(),
        depth.shape()
    );
    assert!(
        h == intr.size && w == intr.size,
        "depth {:?} vs intrinsics size {}",
        depth.shape(),
        intr.size
    );
    let k = h * w;
    let focal = intr.focal();
    let center = intr.center();

    // back-project pixel centers to camera space
    let us = Tensor::from_vec((0..k).map(|i| T::of((i % w) as f64)).collect(), &[h, w]);
    let vs = Tensor::from_vec((0..k).map(|i| T::of((i / w) as f64)).collect(), &[h, w]);
    let x = us.add_scalar(-center).mul_scalar(1.0 / focal).mul(depth);
    let y = vs.add_scalar(-center).mul_scalar(1.0 / focal).mul(depth);

    // rigid transform about the object center c = (0, 0, d0)
    let r = rotation_entries(camera);
    let cam = camera.reshape(&[6]);
    let (tx, ty, tz) = (cam.slice(0, 3, 1), cam.slice(0, 4, 1), cam.slice(0, 5, 1));
    let standoff = crate::scene::ranges::DEPTH_STANDOFF;
    let zc = depth.add_scalar(-standoff);
    let xp = x.mul(&r[0]).add(&y.mul(&r[1])).add(&zc.mul(&r[2])).add(&tx);
    let yp = x.mul(&r[3]).add(&y.mul(&r[4])).add(&zc.mul(&r[5])).add(&ty);
    let zp = x.mul(&r[6]).add(&y.mul(&r[7])).add(&zc.mul(&r[8])).add_scalar(standoff).add(&tz);

    // project; depth stays positive for in-range cameras, the clamp only
    // guards pathological inputs
    let zs = zp.clamp_min(1e-4);
    let up = zs_pixel(&xp, &zs, focal, center).reshape(&[k]);
    let vp = zs_pixel(&yp, &zs, focal, center).reshape(&[k]);
    let zflat = zs.reshape(&[k]);

    // integer corner anchors from forward values
    let (iu0, iv0): (Vec<f64>, Vec<f64>) = {
        let uv = up.data();
        let vv = vp.data();
        (
            uv.iter().map(|v| v.as_f64().floor()).collect(),
            vv.iter().map(|v| v.as_f64().floor()).collect(),
        )
    };

    // nearest contributing depth per target pixel (forward values only)
    let mut near_z = vec![f64::INFINITY; k];
    {
        let zv = zflat.data();
        for s in 0..k {
            for (du, dv) in CORNERS {
                let tu = iu0[s] as i64 + du;
                let tv = iv0[s] as i64 + dv;
                if tu < 0 || tv < 0 || tu >= w as i64 || tv >= h as i64 {
                    continue;
                }
                let t = (tv as usize) * w + tu as usize;
                let z = zv[s].as_f64();
                if z < near_z[t] {
                    near_z[t] = z;
                }
            }
        }
    }

    let colors = canonical.reshape(&[k, 3]);
    let fu = up.sub(&Tensor::from_vec(iu0.iter().map(|&v| T::of(v)).collect(), &[k]));
    let fv = vp.sub(&Tensor::from_vec(iv0.iter().map(|&v| T::of(v)).collect(), &[k]));
    let one_minus_fu = fu.neg().add_scalar(1.0);
    let one_minus_fv = fv.neg().add_scalar(1.0);

    let mut accum: Option<Tensor<T>> = None;
    for (du, dv) in CORNERS {
        let mut indices = vec![0usize; k];
        let mut mask = vec![T::zero(); k];
        let mut zoff = vec![T::zero(); k];
        for s in 0..k {
            let tu = iu0[s] as i64 + du;
            let tv = iv0[s] as i64 + dv;
            if tu >= 0 && tv >= 0 && tu < w as i64 && tv < h as i64 {
                let t = (tv as usize) * w + tu as usize;
                indices[s] = t;
                mask[s] = T::one();
                zoff[s] = T::of(near_z[t]);
            }
        }
        let wu = if du == 0 { &one_minus_fu } else { &fu };
        let wv = if dv == 0 { &one_minus_fv } else { &fv };
        let vis = Tensor::from_vec(zoff, &[k])
            .sub(&zflat)
            .mul_scalar(1.0 / cfg.sigma_z)
            .exp();
        let weight = wu.mul(wv).mul(&vis).mul(&Tensor::from_vec(mask, &[k]));
        let weighted_rgb = colors.mul(&weight.reshape(&[k, 1]));
        let payload = Tensor::concat(&[weighted_rgb, weight.reshape(&[k, 1])], 1);
        let splat = payload.scatter_add(&ScatterSpec::new(indices, k));
        accum = Some(match accum {
            Some(prev) => prev.add(&splat),
            None => splat,
        });
    }
    let accum = accum.unwrap();

    let wsum = accum.slice(1, 3, 1);
    let rgb = accum.slice(1, 0, 3);
    let blended = rgb.div(&wsum.clamp_min(cfg.eps_w));

    let covered: Vec<bool> = {
        let wv = wsum.data();
        let eps = T::of(cfg.eps_w);
        let mut m = Vec::with_capacity(k * 3);
        for i in 0..k {
            let c = wv[i] >= eps;
            m.extend_from_slice(&[c, c, c]);
        }
        m
    };
    let background = Tensor::from_vec(
        (0..k).flat_map(|_| cfg.background.iter().map(|&b| T::of(b))).collect(),
        &[k, 3],
    );
    Tensor::select(Rc::new(covered), &blended, &background).reshape(&[h, w, 3])
}

const CORNERS: [(i64, i64); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

fn zs_pixel<T: Scalar>(x: &Tensor<T>, z: &Tensor<T>, focal: f64, center: f64) -> Tensor<T> {
    x.div(z).mul_scalar(focal).add_scalar(center)
}

/// Full image formation: shade the canonical frame, then reproject.
pub fn render<T: Scalar>(
    params: &SceneParams<T>,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> Tensor<T> {
    let normals = normals_from_depth(&params.depth);
    let canonical = shade(&params.albedo, &normals, &params.light);
    reproject(&canonical, &params.depth, &params.camera, intr, cfg)
}
