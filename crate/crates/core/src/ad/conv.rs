//! 2-D convolution and transposed convolution, NCHW layout.
//!
//! Both directions are built on the same im2col/col2im pair: convolution is
//! a GEMM over unfolded patches, and the transposed convolution scatters
//! GEMM output back through col2im. Backward reuses the opposite routine.

use crate::scalar::Scalar;

use super::linalg::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::Tensor;

pub(crate) fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    assert!(
        input + 2 * pad >= kernel,
        "kernel {} larger than padded input {}",
        kernel,
        input + 2 * pad
    );
    (input + 2 * pad - kernel) / stride + 1
}

/// Unfold `src` [C,H,W] into [C*kh*kw, ho*wo] patch columns, zero padding.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    src: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    debug_assert_eq!(cols.len(), c * kh * kw * ho * wo);
    for v in cols.iter_mut() {
        *v = T::zero();
    }
    let plane = ho * wo;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * plane;
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let src_row = (ci * h + ii as usize) * w;
                    let dst_row = row + oi * wo;
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        cols[dst_row + oj] = src[src_row + jj as usize];
                    }
                }
            }
        }
    }
}

/// Fold patch columns back, accumulating: dst[ci, oi*s+ki-p, oj*s+kj-p] += cols[...].
#[allow(clippy::too_many_arguments)]
fn col2im_acc<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    dst: &mut [T],
) {
    debug_assert_eq!(dst.len(), c * h * w);
    let plane = ho * wo;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * plane;
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let dst_row = (ci * h + ii as usize) * w;
                    let src_row = row + oi * wo;
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        dst[dst_row + jj as usize] += cols[src_row + oj];
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// 2-D convolution (cross-correlation): x [N,Ci,H,W] * w [Co,Ci,kh,kw]
    /// -> [N,Co,Ho,Wo]. Bias, if wanted, is a broadcast add by the caller.
    pub fn conv2d(&self, weight: &Tensor<T>, stride: usize, pad: usize) -> Tensor<T> {
        assert!(stride >= 1, "stride must be >= 1");
        assert!(
            self.ndim() == 4 && weight.ndim() == 4,
            "conv2d expects 4-D input and weight, got {:?} and {:?}",
            self.shape(),
            weight.shape()
        );
        let (n, ci, h, w) = shape4(self.shape());
        let (co, ci_w, kh, kw) = shape4(weight.shape());
        assert!(
            ci == ci_w,
            "conv2d channel mismatch: input {:?} vs weight {:?}",
            self.shape(),
            weight.shape()
        );
        let ho = conv_out_dim(h, kh, stride, pad);
        let wo = conv_out_dim(w, kw, stride, pad);
        let krows = ci * kh * kw;
        let mut data = vec![T::zero(); n * co * ho * wo];
        let mut cols = vec![T::zero(); krows * ho * wo];
        {
            let xv = self.data();
            let wv = weight.data();
            for s in 0..n {
                im2col(&xv[s * ci * h * w..(s + 1) * ci * h * w], ci, h, w, kh, kw, stride, pad, ho, wo, &mut cols);
                gemm_acc(co, krows, ho * wo, &wv, &cols, &mut data[s * co * ho * wo..(s + 1) * co * ho * wo]);
            }
        }
        let x = self.clone();
        let wt = weight.clone();
        let back = move |g: &[T], slot: usize, acc: &mut [T]| {
            let mut cols = vec![T::zero(); krows * ho * wo];
            if slot == 0 {
                // dx = col2im(w^T @ g)
                let wv = wt.data();
                for s in 0..n {
                    for v in cols.iter_mut() {
                        *v = T::zero();
                    }
                    gemm_tn_acc(co, krows, ho * wo, &wv, &g[s * co * ho * wo..(s + 1) * co * ho * wo], &mut cols);
                    col2im_acc(&cols, ci, h, w, kh, kw, stride, pad, ho, wo, &mut acc[s * ci * h * w..(s + 1) * ci * h * w]);
                }
            } else {
                // dw = g @ cols^T, accumulated over the batch
                let xv = x.data();
                for s in 0..n {
                    im2col(&xv[s * ci * h * w..(s + 1) * ci * h * w], ci, h, w, kh, kw, stride, pad, ho, wo, &mut cols);
                    gemm_nt_acc(co, ho * wo, krows, &g[s * co * ho * wo..(s + 1) * co * ho * wo], &cols, acc);
                }
            }
        };
        Tensor::from_op(
            "conv2d",
            vec![n, co, ho, wo],
            data,
            vec![self.clone(), weight.clone()],
            Box::new(back),
        )
    }

    /// Transposed 2-D convolution: x [N,Ci,H,W] with w [Ci,Co,kh,kw]
    /// -> [N,Co,(H-1)*stride - 2*pad + kh, (W-1)*stride - 2*pad + kw].
    pub fn conv_transpose2d(&self, weight: &Tensor<T>, stride: usize, pad: usize) -> Tensor<T> {
        assert!(stride >= 1, "stride must be >= 1");
        assert!(
            self.ndim() == 4 && weight.ndim() == 4,
            "conv_transpose2d expects 4-D input and weight, got {:?} and {:?}",
            self.shape(),
            weight.shape()
        );
        let (n, ci, h, w) = shape4(self.shape());
        let (ci_w, co, kh, kw) = shape4(weight.shape());
        assert!(
            ci == ci_w,
            "conv_transpose2d channel mismatch: input {:?} vs weight {:?}",
            self.shape(),
            weight.shape()
        );
        let ho = (h - 1) * stride + kh - 2 * pad;
        let wo = (w - 1) * stride + kw - 2 * pad;
        let krows = co * kh * kw;
        let mut data = vec![T::zero(); n * co * ho * wo];
        let mut cols = vec![T::zero(); krows * h * w];
        {
            let xv = self.data();
            let wv = weight.data();
            for s in 0..n {
                for v in cols.iter_mut() {
                    *v = T::zero();
                }
                // cols = w^T @ x, viewing w as [Ci, Co*kh*kw]
                gemm_tn_acc(ci, krows, h * w, &wv, &xv[s * ci * h * w..(s + 1) * ci * h * w], &mut cols);
                col2im_acc(&cols, co, ho, wo, kh, kw, stride, pad, h, w, &mut data[s * co * ho * wo..(s + 1) * co * ho * wo]);
            }
        }
        let x = self.clone();
        let wt = weight.clone();
        let back = move |g: &[T], slot: usize, acc: &mut [T]| {
            let mut cols = vec![T::zero(); krows * h * w];
            if slot == 0 {
                // dx = w @ im2col(g)
                let wv = wt.data();
                for s in 0..n {
                    im2col(&g[s * co * ho * wo..(s + 1) * co * ho * wo], co, ho, wo, kh, kw, stride, pad, h, w, &mut cols);
                    gemm_acc(ci, krows, h * w, &wv, &cols, &mut acc[s * ci * h * w..(s + 1) * ci * h * w]);
                }
            } else {
                // dw = x @ im2col(g)^T
                let xv = x.data();
                for s in 0..n {
                    im2col(&g[s * co * ho * wo..(s + 1) * co * ho * wo], co, ho, wo, kh, kw, stride, pad, h, w, &mut cols);
                    gemm_nt_acc(ci, h * w, krows, &xv[s * ci * h * w..(s + 1) * ci * h * w], &cols, acc);
                }
            }
        };
        Tensor::from_op(
            "conv_transpose2d",
            vec![n, co, ho, wo],
            data,
            vec![self.clone(), weight.clone()],
            Box::new(back),
        )
    }
}

fn shape4(s: &[usize]) -> (usize, usize, usize, usize) {
    (s[0], s[1], s[2], s[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn delta_kernel_is_identity() {
        // 3x3 kernel with 1 at the center, stride 1, same padding
        let x = T64::from_vec((0..16).map(|v| v as f64 * 0.5).collect(), &[1, 1, 4, 4]);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = T64::from_vec(k, &[1, 1, 3, 3]);
        let y = x.conv2d(&w, 1, 1);
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn stride_two_halves_spatial_dims() {
        let x = T64::zeros(&[2, 3, 8, 8]);
        let w = T64::zeros(&[5, 3, 3, 3]);
        let y = x.conv2d(&w, 2, 1);
        assert_eq!(y.shape(), &[2, 5, 4, 4]);
    }

    #[test]
    fn transpose_doubles_spatial_dims() {
        let x = T64::zeros(&[1, 4, 4, 4]);
        let w = T64::zeros(&[4, 2, 4, 4]);
        let y = x.conv_transpose2d(&w, 2, 1);
        assert_eq!(y.shape(), &[1, 2, 8, 8]);
    }

    #[test]
    fn conv_and_transpose_are_adjoint() {
        // <conv(x), y> == <x, conv_transpose(y)> with shared weights.
        // Sizes chosen so the shapes match exactly: k3 s2 p1 maps 5 -> 3
        // and its transpose maps 3 -> 5.
        let mut state = 0x12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let x: Vec<f64> = (0..2 * 3 * 5 * 5).map(|_| next()).collect();
        let wv: Vec<f64> = (0..4 * 3 * 3 * 3).map(|_| next()).collect();
        let y: Vec<f64> = (0..2 * 4 * 3 * 3).map(|_| next()).collect();
        let xt = T64::from_vec(x.clone(), &[2, 3, 5, 5]);
        // conv reads this as [Co=4,Ci=3,kh,kw]; the transpose of the same map
        // reads the identical buffer as [Ci'=4,Co'=3,kh,kw]
        let w = T64::from_vec(wv, &[4, 3, 3, 3]);
        let yt = T64::from_vec(y.clone(), &[2, 4, 3, 3]);
        let cy = xt.conv2d(&w, 2, 1);
        let xty = yt.conv_transpose2d(&w, 2, 1);
        assert_eq!(xty.shape(), xt.shape());
        let lhs: f64 = cy.to_vec().iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(xty.to_vec().iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "lhs {} rhs {}", lhs, rhs);
    }
}
