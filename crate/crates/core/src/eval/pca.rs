//! PCA projection for the raw-pixel baseline. Uses the Gram-matrix trick
//! (N x N eigendecomposition) since the sample count is far below the
//! pixel dimension at desk scale.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub struct Pca {
    pub mean: Vec<f64>,
    /// Row-major [k, d] orthonormal components, by descending variance.
    pub components: Vec<f64>,
    pub k: usize,
    pub d: usize,
}

/// Fit up to `k` principal components; the effective count is capped by
/// the data rank bound min(k, n, d).
pub fn fit_pca<T: Scalar>(x: &Tensor<T>, k: usize) -> Result<Pca> {
    assert!(x.ndim() == 2, "PCA input must be [N,D], got {:?}", x.shape());
    let (n, d) = (x.shape()[0], x.shape()[1]);
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, min: 2 });
    }
    let data: Vec<f64> = x.data().iter().map(|v| v.as_f64()).collect();
    let mut mean = vec![0.0; d];
    for row in data.chunks(d) {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered: Vec<f64> = data
        .chunks(d)
        .flat_map(|row| row.iter().zip(mean.iter()).map(|(v, m)| v - m).collect::<Vec<f64>>())
        .collect();

    // gram = C C^T / n, eigenvectors u give components v = C^T u / ||C^T u||
    let c = DMatrix::from_row_slice(n, d, &centered);
    let gram = &c * c.transpose() / n as f64;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let k_eff = k.min(n).min(d);
    let mut components = Vec::with_capacity(k_eff * d);
    let mut kept = 0usize;
    for &idx in &order {
        if kept == k_eff {
            break;
        }
        if eig.eigenvalues[idx] <= 1e-12 {
            break; // rank exhausted
        }
        let u = eig.eigenvectors.column(idx);
        let v = c.transpose() * u;
        let norm = v.norm();
        components.extend(v.iter().map(|x| x / norm));
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::Other("PCA found no varying direction".into()));
    }
    Ok(Pca { mean, components, k: kept, d })
}

impl Pca {
    /// Project rows of `x` into the component space: [N, k].
    pub fn transform<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        assert!(x.ndim() == 2 && x.shape()[1] == self.d, "PCA transform on {:?}", x.shape());
        let n = x.shape()[0];
        let data: Vec<f64> = x.data().iter().map(|v| v.as_f64()).collect();
        let mut out = vec![T::zero(); n * self.k];
        for (i, row) in data.chunks(self.d).enumerate() {
            for c in 0..self.k {
                let comp = &self.components[c * self.d..(c + 1) * self.d];
                let mut acc = 0.0;
                for j in 0..self.d {
                    acc += (row[j] - self.mean[j]) * comp[j];
                }
                out[i * self.k + c] = T::of(acc);
            }
        }
        Tensor::from_vec(out, &[n, self.k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_projection_preserves_pairwise_distances() {
        let mut state = 3u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let (n, d) = (12, 6);
        let x = Tensor::<f64>::from_vec((0..n * d).map(|_| next()).collect(), &[n, d]);
        let pca = fit_pca(&x, d).unwrap();
        let y = pca.transform(&x);
        let dist = |t: &Tensor<f64>, i: usize, j: usize| -> f64 {
            let v = t.to_vec();
            let w = t.shape()[1];
            (0..w).map(|c| (v[i * w + c] - v[j * w + c]).powi(2)).sum::<f64>().sqrt()
        };
        for i in 0..n {
            for j in (i + 1)..n {
                assert!((dist(&x, i, j) - dist(&y, i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn first_component_captures_dominant_direction() {
        // points spread along (1,1)/sqrt(2) with small orthogonal noise
        let mut rows = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 4.0;
            let noise = ((i * 7) % 5) as f64 * 0.01;
            rows.extend_from_slice(&[t + noise, t - noise]);
        }
        let x = Tensor::<f64>::from_vec(rows, &[40, 2]);
        let pca = fit_pca(&x, 1).unwrap();
        let c = &pca.components[0..2];
        let alignment = (c[0] * c[1]).abs() / (c[0].powi(2) + c[1].powi(2)) * 2.0;
        assert!(alignment > 0.999, "component {:?} not along (1,1)", c);
    }
}
