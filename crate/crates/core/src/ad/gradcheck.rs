//! Central finite-difference gradient verification.
//!
//! The checker only ever calls the forward pass, so it is an oracle that is
//! independent of the backward rules it validates. Run it in f64: the
//! tolerances here are unreachable in f32.

use crate::scalar::Scalar;

use super::Tensor;

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// (parameter label, flat element index) of the worst relative error.
    pub worst: Option<(String, usize)>,
}

impl FdReport {
    fn empty() -> Self {
        FdReport { checked: 0, max_rel_err: 0.0, max_abs_err: 0.0, worst: None }
    }

    fn record(&mut self, label: &str, index: usize, analytic: f64, numeric: f64, floor: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(floor);
        self.checked += 1;
        if abs > self.max_abs_err {
            self.max_abs_err = abs;
        }
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst = Some((label.to_string(), index));
        }
    }
}

/// Element selection for [`check_loss_grads`]: all elements of every
/// parameter, or an explicit (parameter index, element index) subset.
pub enum FdSubset {
    All,
    Elements(Vec<(usize, usize)>),
}

/// Compare analytic gradients of a scalar loss against central finite
/// differences over the given leaf parameters.
///
/// `loss_fn` must rebuild the loss from the parameters' **current data** on
/// every call (and must be deterministic: reseed any internal randomness
/// per call). `eps` is the central-difference step; `denom_floor` guards
/// the relative-error denominator for near-zero gradients.
pub fn check_loss_grads<T: Scalar>(
    mut loss_fn: impl FnMut() -> Tensor<T>,
    params: &[(&str, Tensor<T>)],
    subset: FdSubset,
    eps: f64,
    denom_floor: f64,
) -> FdReport {
    for (_, p) in params {
        p.zero_grad();
    }
    let loss = loss_fn();
    loss.backward().expect("loss must be scalar");
    let analytic: Vec<Vec<T>> = params
        .iter()
        .map(|(name, p)| p.grad().unwrap_or_else(|| panic!("{name} has no gradient accumulator")))
        .collect();

    let elements: Vec<(usize, usize)> = match subset {
        FdSubset::All => params
            .iter()
            .enumerate()
            .flat_map(|(pi, (_, p))| (0..p.len()).map(move |ei| (pi, ei)))
            .collect(),
        FdSubset::Elements(v) => v,
    };

    let mut report = FdReport::empty();
    let step = T::of(eps);
    for (pi, ei) in elements {
        let (name, p) = &params[pi];
        let original = p.data()[ei];
        p.data_mut()[ei] = original + step;
        let f_plus = loss_fn().item().as_f64();
        p.data_mut()[ei] = original - step;
        let f_minus = loss_fn().item().as_f64();
        p.data_mut()[ei] = original;
        let numeric = (f_plus - f_minus) / (2.0 * eps);
        report.record(name, ei, analytic[pi][ei].as_f64(), numeric, denom_floor);
    }
    report
}

/// Central finite-difference gradient of a scalar function of one tensor,
/// returned densely. Used directly when no analytic path exists.
pub fn central_diff<T: Scalar>(
    mut f: impl FnMut(&Tensor<T>) -> T,
    x: &Tensor<T>,
    eps: f64,
) -> Vec<f64> {
    let step = T::of(eps);
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let original = x.data()[i];
        x.data_mut()[i] = original + step;
        let plus = f(x).as_f64();
        x.data_mut()[i] = original - step;
        let minus = f(x).as_f64();
        x.data_mut()[i] = original;
        out.push((plus - minus) / (2.0 * eps));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_matches() {
        let x = Tensor::<f64>::param(vec![3.0], &[]);
        let xc = x.clone();
        let report = check_loss_grads(
            move || xc.mul(&xc),
            &[("x", x.clone())],
            FdSubset::All,
            1e-5,
            1e-8,
        );
        assert_eq!(report.checked, 1);
        assert!(report.max_rel_err < 1e-9, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn central_diff_of_square() {
        let x = Tensor::<f64>::from_vec(vec![2.0, -4.0], &[2]);
        let g = central_diff(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] + 8.0).abs() < 1e-8);
    }
}
