//! Dense 2-D matrix multiplication.

use crate::scalar::Scalar;

use super::Tensor;

/// out += a @ b, with a: [m,k], b: [k,n], out: [m,n].
pub(crate) fn gemm_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// out += a @ b^T, with a: [m,n], b: [k,n], out: [m,k].
pub(crate) fn gemm_nt_acc<T: Scalar>(m: usize, n: usize, k: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for j in 0..n {
                acc += arow[j] * brow[j];
            }
            orow[p] += acc;
        }
    }
}

/// out += a^T @ b, with a: [m,k], b: [m,n], out: [k,n].
pub(crate) fn gemm_tn_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// Matrix product of two 2-D tensors: [m,k] @ [k,n] -> [m,n].
    pub fn matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        assert!(
            self.ndim() == 2 && other.ndim() == 2,
            "matmul expects 2-D operands, got {:?} and {:?}",
            self.shape(),
            other.shape()
        );
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (other.shape()[0], other.shape()[1]);
        assert!(
            k == k2,
            "matmul inner dimensions differ: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
        let mut data = vec![T::zero(); m * n];
        gemm_acc(m, k, n, &self.data(), &other.data(), &mut data);
        let a = self.clone();
        let b = other.clone();
        let back = move |g: &[T], slot: usize, acc: &mut [T]| {
            if slot == 0 {
                // dA = g @ B^T
                gemm_nt_acc(m, n, k, g, &b.data(), acc);
            } else {
                // dB = A^T @ g
                gemm_tn_acc(m, k, n, &a.data(), g, acc);
            }
        };
        Tensor::from_op(
            "matmul",
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(back),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn identity_passthrough() {
        let eye = T64::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[3, 3]);
        let a = T64::from_vec((1..=9).map(|v| v as f64).collect(), &[3, 3]);
        let out = eye.matmul(&a);
        assert_eq!(out.to_vec(), a.to_vec());
    }

    #[test]
    fn known_product() {
        let a = T64::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = T64::from_vec(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]);
        let c = a.matmul(&b);
        assert_eq!(c.to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    #[should_panic(expected = "inner dimensions differ")]
    fn mismatched_inner_dims_panic_with_shapes() {
        let a = T64::zeros(&[2, 3]);
        let b = T64::zeros(&[2, 3]);
        let _ = a.matmul(&b);
    }

    #[test]
    fn matmul_gradients() {
        let a = T64::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = T64::param(vec![0.5, -1.0, 2.0, 1.5], &[2, 2]);
        let y = a.matmul(&b).sum_all();
        y.backward().unwrap();
        // d/dA sum(AB) = rowwise sums of B^T: each row of dA is [sum(B row j)]
        assert_eq!(a.grad().unwrap(), vec![-0.5, 3.5, -0.5, 3.5]);
        assert_eq!(b.grad().unwrap(), vec![4.0, 4.0, 6.0, 6.0]);
    }
}
