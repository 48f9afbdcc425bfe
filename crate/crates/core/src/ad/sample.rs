//! Bilinear grid sampling (gather) and scatter-add, the two halves of
//! differentiable warping. Sampling pulls values at fractional coordinates;
//! scatter-add pushes values onto integer targets, with gather as its
//! backward rule. Ties at identical targets accumulate.

use std::rc::Rc;

use crate::scalar::Scalar;

use super::Tensor;

/// Constant index set for a scatter: row `k` of the source lands on row
/// `indices[k]` of the output. Indices are data, not graph inputs.
#[derive(Clone)]
pub struct ScatterSpec {
    pub indices: Rc<Vec<usize>>,
    pub out_rows: usize,
}

impl ScatterSpec {
    pub fn new(indices: Vec<usize>, out_rows: usize) -> Self {
        ScatterSpec { indices: Rc::new(indices), out_rows }
    }
}

struct SampleSite<T> {
    corners: [usize; 4], // flat pixel bases: (y0,x0) (y0,x1) (y1,x0) (y1,x1)
    fx: T,
    fy: T,
    in_x: bool,
    in_y: bool,
}

impl<T: Scalar> Tensor<T> {
    /// Bilinear sampling of `self` [H,W,C] at `grid` [Ho,Wo,2] holding
    /// (x, y) in [-1, 1] normalized coordinates, align-corners convention:
    /// -1 maps to pixel 0 and +1 to pixel W-1 (resp. H-1). Coordinates
    /// outside [-1, 1] are clamped to the border; clamped coordinates
    /// contribute zero gradient to the grid.
    pub fn grid_sample(&self, grid: &Tensor<T>) -> Tensor<T> {
        assert!(
            self.ndim() == 3 && grid.ndim() == 3 && grid.shape()[2] == 2,
            "grid_sample expects image [H,W,C] and grid [Ho,Wo,2], got {:?} and {:?}",
            self.shape(),
            grid.shape()
        );
        let (h, w, c) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (ho, wo) = (grid.shape()[0], grid.shape()[1]);
        let n_out = ho * wo;
        let mut sites = Vec::with_capacity(n_out);
        let mut data = vec![T::zero(); n_out * c];
        {
            let img = self.data();
            let gv = grid.data();
            for q in 0..n_out {
                let gx = gv[q * 2];
                let gy = gv[q * 2 + 1];
                let site = resolve_site(gx, gy, h, w);
                for ch in 0..c {
                    let [c00, c01, c10, c11] = site.corners;
                    let (fx, fy) = (site.fx, site.fy);
                    let top = (T::one() - fx) * img[c00 * c + ch] + fx * img[c01 * c + ch];
                    let bot = (T::one() - fx) * img[c10 * c + ch] + fx * img[c11 * c + ch];
                    data[q * c + ch] = (T::one() - fy) * top + fy * bot;
                }
                sites.push(site);
            }
        }
        let img_t = self.clone();
        let half_sx = T::of((w - 1) as f64 * 0.5);
        let half_sy = T::of((h - 1) as f64 * 0.5);
        let back = move |g: &[T], slot: usize, acc: &mut [T]| {
            if slot == 0 {
                for (q, site) in sites.iter().enumerate() {
                    let [c00, c01, c10, c11] = site.corners;
                    let (fx, fy) = (site.fx, site.fy);
                    let w00 = (T::one() - fx) * (T::one() - fy);
                    let w01 = fx * (T::one() - fy);
                    let w10 = (T::one() - fx) * fy;
                    let w11 = fx * fy;
                    for ch in 0..c {
                        let gq = g[q * c + ch];
                        acc[c00 * c + ch] += gq * w00;
                        acc[c01 * c + ch] += gq * w01;
                        acc[c10 * c + ch] += gq * w10;
                        acc[c11 * c + ch] += gq * w11;
                    }
                }
            } else {
                let img = img_t.data();
                for (q, site) in sites.iter().enumerate() {
                    let [c00, c01, c10, c11] = site.corners;
                    let (fx, fy) = (site.fx, site.fy);
                    let mut dpx = T::zero();
                    let mut dpy = T::zero();
                    for ch in 0..c {
                        let gq = g[q * c + ch];
                        let i00 = img[c00 * c + ch];
                        let i01 = img[c01 * c + ch];
                        let i10 = img[c10 * c + ch];
                        let i11 = img[c11 * c + ch];
                        dpx += gq * ((T::one() - fy) * (i01 - i00) + fy * (i11 - i10));
                        dpy += gq * ((T::one() - fx) * (i10 - i00) + fx * (i11 - i01));
                    }
                    if site.in_x {
                        acc[q * 2] += dpx * half_sx;
                    }
                    if site.in_y {
                        acc[q * 2 + 1] += dpy * half_sy;
                    }
                }
            }
        };
        Tensor::from_op(
            "grid_sample",
            vec![ho, wo, c],
            data,
            vec![self.clone(), grid.clone()],
            Box::new(back),
        )
    }

    /// Scatter-add: row `k` of `self` ([K] or [K,C]) is added onto row
    /// `spec.indices[k]` of a zero-initialized output ([M] or [M,C]).
    /// Backward is the gather of the output gradient through the indices.
    pub fn scatter_add(&self, spec: &ScatterSpec) -> Tensor<T> {
        assert!(
            self.ndim() == 1 || self.ndim() == 2,
            "scatter_add expects [K] or [K,C], got {:?}",
            self.shape()
        );
        let k = self.shape()[0];
        let c = if self.ndim() == 2 { self.shape()[1] } else { 1 };
        assert!(
            spec.indices.len() == k,
            "scatter_add: {} indices for {} source rows",
            spec.indices.len(),
            k
        );
        let m = spec.out_rows;
        if let Some(bad) = spec.indices.iter().find(|&&i| i >= m) {
            panic!("scatter_add index {} out of range [0, {})", bad, m);
        }
        let mut data = vec![T::zero(); m * c];
        {
            let src = self.data();
            for (row, &target) in spec.indices.iter().enumerate() {
                for ch in 0..c {
                    data[target * c + ch] += src[row * c + ch];
                }
            }
        }
        let out_shape = if self.ndim() == 2 { vec![m, c] } else { vec![m] };
        let indices = Rc::clone(&spec.indices);
        let back = move |g: &[T], _slot: usize, acc: &mut [T]| {
            for (row, &target) in indices.iter().enumerate() {
                for ch in 0..c {
                    acc[row * c + ch] += g[target * c + ch];
                }
            }
        };
        Tensor::from_op("scatter_add", out_shape, data, vec![self.clone()], Box::new(back))
    }
}

fn resolve_site<T: Scalar>(gx: T, gy: T, h: usize, w: usize) -> SampleSite<T> {
    let half = T::of(0.5);
    let in_x = gx >= -T::one() && gx <= T::one();
    let in_y = gy >= -T::one() && gy <= T::one();
    let px = (gx.max(-T::one()).min(T::one()) + T::one()) * half * T::of((w - 1) as f64);
    let py = (gy.max(-T::one()).min(T::one()) + T::one()) * half * T::of((h - 1) as f64);
    let x0 = px.floor().as_f64() as usize;
    let y0 = py.floor().as_f64() as usize;
    let x0 = x0.min(w - 1);
    let y0 = y0.min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = px - T::of(x0 as f64);
    let fy = py - T::of(y0 as f64);
    SampleSite {
        corners: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
        fx,
        fy,
        in_x,
        in_y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    fn grid_at_pixels(coords: &[(f64, f64)], h: usize, w: usize) -> T64 {
        // build a normalized grid pointing exactly at the given pixel coords
        let mut g = Vec::with_capacity(coords.len() * 2);
        for &(x, y) in coords {
            g.push(2.0 * x / (w as f64 - 1.0) - 1.0);
            g.push(2.0 * y / (h as f64 - 1.0) - 1.0);
        }
        T64::from_vec(g, &[1, coords.len(), 2])
    }

    #[test]
    fn integer_coords_return_exact_pixels() {
        let img = T64::from_vec((0..12).map(|v| v as f64).collect(), &[2, 2, 3]);
        let grid = grid_at_pixels(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)], 2, 2);
        let out = img.grid_sample(&grid);
        assert_eq!(out.to_vec(), img.to_vec());
    }

    #[test]
    fn midpoint_interpolates() {
        let img = T64::from_vec(vec![0.0, 2.0, 4.0, 6.0], &[2, 2, 1]);
        let grid = grid_at_pixels(&[(0.5, 0.5)], 2, 2);
        let out = img.grid_sample(&grid);
        assert!((out.to_vec()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_clamps_to_border() {
        let img = T64::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2, 1]);
        let grid = T64::from_vec(vec![-5.0, -5.0, 5.0, 5.0], &[1, 2, 2]);
        let out = img.grid_sample(&grid);
        assert_eq!(out.to_vec(), vec![1.0, 4.0]);
    }

    #[test]
    fn scatter_add_accumulates_ties() {
        let src = T64::from_vec(vec![1.0, 2.0, 3.0], &[3]);
        let spec = ScatterSpec::new(vec![0, 2, 0], 4);
        let out = src.scatter_add(&spec);
        assert_eq!(out.to_vec(), vec![4.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn scatter_add_backward_is_gather() {
        let src = T64::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let spec = ScatterSpec::new(vec![1, 1], 3);
        let out = src.scatter_add(&spec);
        // weight the output so each position has a distinct gradient
        let wgt = T64::from_vec(vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0], &[3, 2]);
        let loss = out.mul(&wgt).sum_all();
        loss.backward().unwrap();
        assert_eq!(src.grad().unwrap(), vec![30.0, 40.0, 30.0, 40.0]);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn scatter_add_rejects_bad_index() {
        let src = T64::from_vec(vec![1.0], &[1]);
        let spec = ScatterSpec::new(vec![5], 3);
        let _ = src.scatter_add(&spec);
    }
}
