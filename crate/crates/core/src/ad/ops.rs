//! Elementwise ops, broadcasting, reductions, and shape manipulation.
//!
//! Broadcasting follows the usual trailing-dimension rules: shapes align
//! from the right, and a dimension of 1 stretches. Backward sums gradient
//! contributions over stretched dimensions.

use std::rc::Rc;

use crate::scalar::Scalar;

use super::Tensor;

// ---------------------------------------------------------------------------
// broadcasting helpers
// ---------------------------------------------------------------------------

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let ndim = a.len().max(b.len());
    let mut out = vec![0usize; ndim];
    for i in 0..ndim {
        let da = if i < ndim - a.len() { 1 } else { a[i - (ndim - a.len())] };
        let db = if i < ndim - b.len() { 1 } else { b[i - (ndim - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            panic!("shapes {:?} and {:?} are not broadcast-compatible", a, b);
        };
    }
    out
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Strides of `shape` viewed as `out_shape`, with 0 where a dimension
/// stretches. `shape` aligns to the right of `out_shape`.
fn bcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let strides = row_major_strides(shape);
    let offset = out_shape.len() - shape.len();
    let mut out = vec![0usize; out_shape.len()];
    for i in 0..out_shape.len() {
        if i >= offset {
            let d = shape[i - offset];
            out[i] = if d == 1 { 0 } else { strides[i - offset] };
        }
    }
    out
}

/// Visit every element of `out_shape`, yielding flat indices into the
/// output and into two broadcast operands.
fn for_each_bcast(
    out_shape: &[usize],
    a_shape: &[usize],
    b_shape: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out_shape.iter().product();
    if out_shape == a_shape && out_shape == b_shape {
        for i in 0..n {
            f(i, i, i);
        }
        return;
    }
    let sa = bcast_strides(a_shape, out_shape);
    let sb = bcast_strides(b_shape, out_shape);
    let ndim = out_shape.len();
    let mut idx = vec![0usize; ndim];
    let mut ai = 0usize;
    let mut bi = 0usize;
    for oi in 0..n {
        f(oi, ai, bi);
        // odometer increment
        for d in (0..ndim).rev() {
            idx[d] += 1;
            ai += sa[d];
            bi += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            ai -= sa[d] * out_shape[d];
            bi -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise binary ops
// ---------------------------------------------------------------------------

impl<T: Scalar> Tensor<T> {
    /// Shared machinery for broadcasting binary ops. `fwd` returns the value
    /// and the partial derivatives w.r.t. each operand at that element.
    fn binary_op(
        &self,
        other: &Tensor<T>,
        op: &'static str,
        fwd: impl Fn(T, T) -> (T, T, T),
    ) -> Tensor<T> {
        let out_shape = broadcast_shape(self.shape(), other.shape());
        let n: usize = out_shape.iter().product();
        let mut data = vec![T::zero(); n];
        let mut da = vec![T::zero(); n];
        let mut db = vec![T::zero(); n];
        {
            let av = self.data();
            let bv = other.data();
            for_each_bcast(&out_shape, self.shape(), other.shape(), |oi, ai, bi| {
                let (v, ga, gb) = fwd(av[ai], bv[bi]);
                data[oi] = v;
                da[oi] = ga;
                db[oi] = gb;
            });
        }
        let a_shape = self.shape().to_vec();
        let b_shape = other.shape().to_vec();
        let os = out_shape.clone();
        let back = move |g: &[T], slot: usize, acc: &mut [T]| {
            let deriv = if slot == 0 { &da } else { &db };
            for_each_bcast(&os, &a_shape, &b_shape, |oi, ai, bi| {
                let ii = if slot == 0 { ai } else { bi };
                acc[ii] += g[oi] * deriv[oi];
            });
        };
        Tensor::from_op(op, out_shape, data, vec![self.clone(), other.clone()], Box::new(back))
    }

    pub fn add(&self, other: &Tensor<T>) -> Tensor<T> {
        self.binary_op(other, "add", |a, b| (a + b, T::one(), T::one()))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Tensor<T> {
        self.binary_op(other, "sub", |a, b| (a - b, T::one(), -T::one()))
    }

    pub fn mul(&self, other: &Tensor<T>) -> Tensor<T> {
        self.binary_op(other, "mul", |a, b| (a * b, b, a))
    }

    pub fn div(&self, other: &Tensor<T>) -> Tensor<T> {
        self.binary_op(other, "div", |a, b| (a / b, T::one() / b, -a / (b * b)))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<T> {
        let c = T::of(c);
        self.unary_op("add_scalar", |x| (x + c, T::one()))
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor<T> {
        let c = T::of(c);
        self.unary_op("mul_scalar", |x| (x * c, c))
    }

    // -----------------------------------------------------------------------
    // elementwise unary ops
    // -----------------------------------------------------------------------

    /// `fwd` returns (value, dvalue/dx); the derivative buffer is saved for
    /// backward, so backward is a single fused multiply-add.
    fn unary_op(&self, op: &'static str, fwd: impl Fn(T) -> (T, T)) -> Tensor<T> {
        let n = self.len();
        let mut data = vec![T::zero(); n];
        let mut deriv = vec![T::zero(); n];
        {
            let xv = self.data();
            for i in 0..n {
                let (v, d) = fwd(xv[i]);
                data[i] = v;
                deriv[i] = d;
            }
        }
        let back = move |g: &[T], _slot: usize, acc: &mut [T]| {
            for i in 0..g.len() {
                acc[i] += g[i] * deriv[i];
            }
        };
        Tensor::from_op(op, self.shape().to_vec(), data, vec![self.clone()], Box::new(back))
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary_op("neg", |x| (-x, -T::one()))
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary_op("relu", |x| {
            if x > T::zero() {
                (x, T::one())
            } else {
                (T::zero(), T::zero())
            }
        })
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary_op("tanh", |x| {
            let y = x.tanh();
            (y, T::one() - y * y)
        })
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary_op("sigmoid", |x| {
            let y = T::one() / (T::one() + (-x).exp());
            (y, y * (T::one() - y))
        })
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary_op("exp", |x| {
            let y = x.exp();
            (y, y)
        })
    }

    pub fn log(&self) -> Tensor<T> {
        self.unary_op("log", |x| (x.ln(), T::one() / x))
    }

    pub fn sqrt(&self) -> Tensor<T> {
        self.unary_op("sqrt", |x| {
            let y = x.sqrt();
            let half = T::of(0.5);
            (y, half / y)
        })
    }

    pub fn sin(&self) -> Tensor<T> {
        self.unary_op("sin", |x| (x.sin(), x.cos()))
    }

    pub fn cos(&self) -> Tensor<T> {
        self.unary_op("cos", |x| (x.cos(), -x.sin()))
    }

    pub fn abs(&self) -> Tensor<T> {
        self.unary_op("abs", |x| {
            if x >= T::zero() {
                (x, T::one())
            } else {
                (-x, -T::one())
            }
        })
    }

    /// Clamp to `[lo, hi]`. Gradient passes through strictly inside the
    /// interval and is zero outside (subgradient 0 at the kinks).
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor<T> {
        let lo = T::of(lo);
        let hi = T::of(hi);
        self.unary_op("clamp", move |x| {
            if x < lo {
                (lo, T::zero())
            } else if x > hi {
                (hi, T::zero())
            } else {
                (x, T::one())
            }
        })
    }

    pub fn clamp_min(&self, lo: f64) -> Tensor<T> {
        self.clamp(lo, f64::INFINITY)
    }

    pub fn clamp_max(&self, hi: f64) -> Tensor<T> {
        self.clamp(f64::NEG_INFINITY, hi)
    }

    // -----------------------------------------------------------------------
    // reductions
    // -----------------------------------------------------------------------

    /// Sum of all elements, as a scalar (shape `[]`).
    pub fn sum_all(&self) -> Tensor<T> {
        let total = self.data().iter().fold(T::zero(), |a, &b| a + b);
        let back = move |g: &[T], _slot: usize, acc: &mut [T]| {
            for a in acc.iter_mut() {
                *a += g[0];
            }
        };
        Tensor::from_op("sum_all", vec![], vec![total], vec![self.clone()], Box::new(back))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean_all(&self) -> Tensor<T> {
        let n = self.len();
        self.sum_all().mul_scalar(1.0 / n as f64)
    }

    /// Sum along one axis. With `keepdim` the axis stays with size 1.
    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Tensor<T> {
        let shape = self.shape().to_vec();
        assert!(axis < shape.len(), "axis {} out of range for shape {:?}", axis, shape);
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![T::zero(); outer * inner];
        {
            let xv = self.data();
            for o in 0..outer {
                for m in 0..mid {
                    let base = (o * mid + m) * inner;
                    let obase = o * inner;
                    for i in 0..inner {
                        data[obase + i] += xv[base + i];
                    }
                }
            }
        }
        let mut out_shape: Vec<usize> = shape[..axis].to_vec();
        if keepdim {
            out_shape.push(1);
        }
        out_shape.extend_from_slice(&shape[axis + 1..]);
        let back = move |g: &[T], _slot: usize, acc: &mut [T]| {
            for o in 0..outer {
                for m in 0..mid {
                    let base = (o * mid + m) * inner;
                    let gbase = o * inner;
                    for i in 0..inner {
                        acc[base + i] += g[gbase + i];
                    }
                }
            }
        };
        Tensor::from_op("sum_axis", out_shape, data, vec![self.clone()], Box::new(back))
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Tensor<T> {
        let d = self.shape()[axis];
        self.sum_axis(axis, keepdim).mul_scalar(1.0 / d as f64)
    }

    // -----------------------------------------------------------------------
    // shape ops
    // -----------------------------------------------------------------------

    pub fn reshape(&self, shape: &[usize]) -> Tensor<T> {
        let n: usize = shape.iter().product();
        assert!(
            n == self.len(),
            "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
            self.shape(),
            self.len(),
            shape,
            n
        );
        let back = move |g: &[T], _slot: usize, acc: &mut [T]| {
            for i in 0..g.len() {
                acc[i] += g[i];
            }
        };
        Tensor::from_op("reshape", shape.to_vec(), self.to_vec(), vec![self.clone()], Box::new(back))
    }

    /// Permute axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Tensor<T> {
        let shape = self.shape().to_vec();
        assert!(perm.len() == shape.len(), "permute {:?} on shape {:?}", perm, shape);
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            assert!(p < perm.len() && !seen[p], "invalid permutation {:?}", perm);
            seen[p] = true;
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let in_strides = row_major_strides(&shape);
        let map = permutation_map(&out_shape, perm, &in_strides);
        let mut data = vec![T::zero(); self.len()];
        {
            let xv = self.data();
            for (oi, &ii) in map.iter().enumerate() {
                data[oi] = xv[ii];
            }
        }
        let back = move |g: &[T], _slot: usize, acc: &mut [T]| {
            for (oi, &ii) in map.iter().enumerate() {
                acc[ii] += g[oi];
            }
        };
        Tensor::from_op("permute", out_shape, data, vec![self.clone()], Box::new(back))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Tensor<T> {
        let shape = self.shape().to_vec();
        assert!(axis < shape.len(), "axis {} out of range for shape {:?}", axis, shape);
        assert!(
            start + len <= shape[axis] && len > 0,
            "slice [{}, {}) out of range for axis {} of shape {:?}",
            start,
            start + len,
            axis,
            shape
        );
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut data = vec![T::zero(); outer * len * inner];
        {
            let xv = self.data();
            for o in 0..outer {
                for m in 0..len {
                    let src = (o * mid + start + m) * inner;
                    let dst = (o * len + m) * inner;
                    data[dst..dst + inner].copy_from_slice(&xv[src..src + inner]);
                }
            }
        }
        let back = move |g: &[T], _slot: usize, acc: &mut [T]| {
            for o in 0..outer {
                for m in 0..len {
                    let dst = (o * mid + start + m) * inner;
                    let src = (o * len + m) * inner;
                    for i in 0..inner {
                        acc[dst + i] += g[src + i];
                    }
                }
            }
        };
        Tensor::from_op("slice", out_shape, data, vec![self.clone()], Box::new(back))
    }

    /// Concatenate along `axis`. All other dimensions must match.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let first = parts[0].shape().to_vec();
        assert!(axis < first.len(), "axis {} out of range for shape {:?}", axis, first);
        let mut axis_total = 0usize;
        for p in parts {
            let s = p.shape();
            assert!(
                s.len() == first.len()
                    && s.iter().zip(first.iter()).enumerate().all(|(d, (a, b))| d == axis || a == b),
                "concat shapes {:?} vs {:?} differ off-axis {}",
                s,
                first,
                axis
            );
            axis_total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let mut data = vec![T::zero(); outer * axis_total * inner];
        let mut offsets = Vec::with_capacity(parts.len());
        {
            let mut offset = 0usize;
            for p in parts {
                let mid = p.shape()[axis];
                offsets.push((offset, mid));
                let pv = p.data();
                for o in 0..outer {
                    for m in 0..mid {
                        let src = (o * mid + m) * inner;
                        let dst = (o * axis_total + offset + m) * inner;
                        data[dst..dst + inner].copy_from_slice(&pv[src..src + inner]);
                    }
                }
                offset += mid;
            }
        }
        let back = move |g: &[T], slot: usize, acc: &mut [T]| {
            let (offset, mid) = offsets[slot];
            for o in 0..outer {
                for m in 0..mid {
                    let dst = (o * mid + m) * inner;
                    let src = (o * axis_total + offset + m) * inner;
                    for i in 0..inner {
                        acc[dst + i] += g[src + i];
                    }
                }
            }
        };
        Tensor::from_op("concat", out_shape, data, parts.to_vec(), Box::new(back))
    }

    /// Stack 1-D tensors of equal length into a `[n, d]` matrix.
    pub fn stack_rows(rows: &[Tensor<T>]) -> Tensor<T> {
        let shaped: Vec<Tensor<T>> = rows.iter().map(|r| r.reshape(&[1, r.len()])).collect();
        Tensor::concat(&shaped, 0)
    }

    // -----------------------------------------------------------------------
    // composites
    // -----------------------------------------------------------------------

    /// Numerically stable softmax along `axis`. Uses the shift invariance
    /// softmax(x) = softmax(x - c) with a detached per-slice max, so the
    /// gradient is exact.
    pub fn softmax(&self, axis: usize) -> Tensor<T> {
        let shifted = self.sub(&self.max_axis_detached(axis));
        let e = shifted.exp();
        let denom = e.sum_axis(axis, true);
        e.div(&denom)
    }

    /// log(softmax(x)) along `axis`, computed stably.
    pub fn log_softmax(&self, axis: usize) -> Tensor<T> {
        let shifted = self.sub(&self.max_axis_detached(axis));
        let lse = shifted.exp().sum_axis(axis, true).log();
        shifted.sub(&lse)
    }

    /// Per-slice maximum along `axis` as a detached constant, shaped with
    /// the axis kept at size 1.
    fn max_axis_detached(&self, axis: usize) -> Tensor<T> {
        let shape = self.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![T::neg_infinity(); outer * inner];
        {
            let xv = self.data();
            for o in 0..outer {
                for m in 0..mid {
                    let base = (o * mid + m) * inner;
                    for i in 0..inner {
                        let v = xv[base + i];
                        if v > data[o * inner + i] {
                            data[o * inner + i] = v;
                        }
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        Tensor::from_vec(data, &out_shape)
    }

    /// L2 normalization along `axis`: x / max(||x||, eps).
    pub fn l2_normalize(&self, axis: usize) -> Tensor<T> {
        let norm = self.mul(self).sum_axis(axis, true).sqrt().clamp_min(1e-30);
        self.div(&norm)
    }

    /// Elementwise select with a constant mask: `mask ? a : b`. The mask is
    /// data, not a graph input; gradients route to the chosen branch.
    pub fn select(mask: Rc<Vec<bool>>, a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        assert!(
            a.shape() == b.shape() && mask.len() == a.len(),
            "select: mask len {} vs shapes {:?}, {:?}",
            mask.len(),
            a.shape(),
            b.shape()
        );
        let n = a.len();
        let mut data = vec![T::zero(); n];
        {
            let av = a.data();
            let bv = b.data();
            for i in 0..n {
                data[i] = if mask[i] { av[i] } else { bv[i] };
            }
        }
        let back = move |g: &[T], slot: usize, acc: &mut [T]| {
            for i in 0..g.len() {
                let taken = if slot == 0 { mask[i] } else { !mask[i] };
                if taken {
                    acc[i] += g[i];
                }
            }
        };
        Tensor::from_op("select", a.shape().to_vec(), data, vec![a.clone(), b.clone()], Box::new(back))
    }
}

fn permutation_map(out_shape: &[usize], perm: &[usize], in_strides: &[usize]) -> Vec<usize> {
    let n: usize = out_shape.iter().product();
    let mut map = vec![0usize; n];
    let ndim = out_shape.len();
    let mut idx = vec![0usize; ndim];
    for oi in 0..n {
        let mut ii = 0usize;
        for d in 0..ndim {
            ii += idx[d] * in_strides[perm[d]];
        }
        map[oi] = ii;
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

// operator sugar for references

impl<T: Scalar> std::ops::Add for &Tensor<T> {
    type Output = Tensor<T>;
    fn add(self, rhs: Self) -> Tensor<T> {
        Tensor::add(self, rhs)
    }
}

impl<T: Scalar> std::ops::Sub for &Tensor<T> {
    type Output = Tensor<T>;
    fn sub(self, rhs: Self) -> Tensor<T> {
        Tensor::sub(self, rhs)
    }
}

impl<T: Scalar> std::ops::Mul for &Tensor<T> {
    type Output = Tensor<T>;
    fn mul(self, rhs: Self) -> Tensor<T> {
        Tensor::mul(self, rhs)
    }
}

impl<T: Scalar> std::ops::Div for &Tensor<T> {
    type Output = Tensor<T>;
    fn div(self, rhs: Self) -> Tensor<T> {
        Tensor::div(self, rhs)
    }
}

impl<T: Scalar> std::ops::Neg for &Tensor<T> {
    type Output = Tensor<T>;
    fn neg(self) -> Tensor<T> {
        Tensor::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[3, 1], &[1, 4]), vec![3, 4]);
        assert_eq!(broadcast_shape(&[2, 3], &[3]), vec![2, 3]);
        assert_eq!(broadcast_shape(&[], &[5]), vec![5]);
    }

    #[test]
    #[should_panic(expected = "not broadcast-compatible")]
    fn incompatible_shapes_report_both() {
        let a = T64::zeros(&[2, 3]);
        let b = T64::zeros(&[2, 4]);
        let _ = a.add(&b);
    }

    #[test]
    fn broadcast_add_backward_sums_over_stretched_axes() {
        let a = T64::param(vec![1.0, 2.0], &[2, 1]);
        let b = T64::param(vec![10.0, 20.0, 30.0], &[1, 3]);
        let y = a.add(&b).sum_all();
        y.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![3.0, 3.0]);
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn sum_axis_values_and_shape() {
        let x = T64::from_vec((1..=6).map(|v| v as f64).collect(), &[2, 3]);
        let s0 = x.sum_axis(0, false);
        assert_eq!(s0.shape(), &[3]);
        assert_eq!(s0.to_vec(), vec![5.0, 7.0, 9.0]);
        let s1 = x.sum_axis(1, true);
        assert_eq!(s1.shape(), &[2, 1]);
        assert_eq!(s1.to_vec(), vec![6.0, 15.0]);
    }

    #[test]
    fn permute_roundtrip() {
        let x = T64::from_vec((0..24).map(|v| v as f64).collect(), &[2, 3, 4]);
        let y = x.permute(&[2, 0, 1]);
        assert_eq!(y.shape(), &[4, 2, 3]);
        let z = y.permute(&[1, 2, 0]);
        assert_eq!(z.to_vec(), x.to_vec());
    }

    #[test]
    fn slice_concat_roundtrip() {
        let x = T64::from_vec((0..12).map(|v| v as f64).collect(), &[3, 4]);
        let left = x.slice(1, 0, 2);
        let right = x.slice(1, 2, 2);
        let back = T64::concat(&[left, right], 1);
        assert_eq!(back.to_vec(), x.to_vec());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = T64::from_vec(vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0], &[2, 3]);
        let s = x.softmax(1);
        let sums = s.sum_axis(1, false).to_vec();
        for v in sums {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_invariant_to_shift() {
        let x = T64::from_vec(vec![1.0, 2.0, 3.0], &[3]);
        let y = x.add_scalar(100.0);
        let a = x.softmax(0).to_vec();
        let b = y.softmax(0).to_vec();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_normalize_unit_norm() {
        let x = T64::from_vec(vec![3.0, 4.0], &[1, 2]);
        let y = x.l2_normalize(1);
        assert!((y.to_vec()[0] - 0.6).abs() < 1e-12);
        assert!((y.to_vec()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn select_routes_gradient() {
        let a = T64::param(vec![1.0, 2.0], &[2]);
        let b = T64::param(vec![3.0, 4.0], &[2]);
        let mask = Rc::new(vec![true, false]);
        let y = T64::select(mask, &a, &b).sum_all();
        y.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 0.0]);
        assert_eq!(b.grad().unwrap(), vec![0.0, 1.0]);
    }
}
