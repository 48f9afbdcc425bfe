//! Integrated-gradients attribution over stacked feature vectors, with
//! per-block contribution percentages and the completeness residual.

use serde::Serialize;

use crate::ad::{no_grad, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named contiguous span of the input vector, e.g. one feature block.
#[derive(Debug, Clone, Serialize)]
pub struct BlockSpan {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributionReport {
    /// (block name, percentage); percentages sum to 100.
    pub contributions: Vec<(String, f64)>,
    pub raw_ig: Vec<f64>,
    /// |sum(IG) - (f(x) - f(baseline))|
    pub completeness_residual: f64,
    pub f_input: f64,
    pub f_baseline: f64,
    pub steps: usize,
}

/// Midpoint-Riemann integrated gradients of a differentiable scalar scorer
/// along the straight path from `baseline` to `input`.
///
/// The scorer must treat its argument as the only leaf it differentiates:
/// it is called once per step with a fresh parameter tensor.
pub fn integrated_gradients<T: Scalar>(
    scorer: impl Fn(&Tensor<T>) -> Tensor<T>,
    input: &Tensor<T>,
    baseline: &Tensor<T>,
    steps: usize,
    blocks: &[BlockSpan],
) -> Result<AttributionReport> {
    if steps < 1 {
        return Err(Error::ZeroSteps);
    }
    assert!(
        input.shape() == baseline.shape(),
        "input {:?} vs baseline {:?}",
        input.shape(),
        baseline.shape()
    );
    let d = input.len();
    let xv: Vec<f64> = input.data().iter().map(|v| v.as_f64()).collect();
    let bv: Vec<f64> = baseline.data().iter().map(|v| v.as_f64()).collect();

    let mut grad_sum = vec![0.0f64; d];
    for s in 0..steps {
        let alpha = (s as f64 + 0.5) / steps as f64;
        let point: Vec<T> = (0..d).map(|i| T::of(bv[i] + alpha * (xv[i] - bv[i]))).collect();
        let leaf = Tensor::param(point, input.shape());
        let y = scorer(&leaf);
        assert!(y.len() == 1, "scorer must return a scalar, got {:?}", y.shape());
        y.backward()?;
        let g = leaf.grad().expect("leaf gradient");
        for i in 0..d {
            grad_sum[i] += g[i].as_f64();
        }
    }

    let raw_ig: Vec<f64> = (0..d).map(|i| (xv[i] - bv[i]) * grad_sum[i] / steps as f64).collect();

    let (f_input, f_baseline) = {
        let _guard = no_grad();
        (
            scorer(&input.detach()).item().as_f64(),
            scorer(&baseline.detach()).item().as_f64(),
        )
    };
    let completeness_residual = (raw_ig.iter().sum::<f64>() - (f_input - f_baseline)).abs();

    let total_abs: f64 = raw_ig.iter().map(|v| v.abs()).sum();
    let contributions: Vec<(String, f64)> = blocks
        .iter()
        .map(|b| {
            let sum: f64 = raw_ig[b.start..b.start + b.len].iter().map(|v| v.abs()).sum();
            let pct = if total_abs > 0.0 {
                100.0 * sum / total_abs
            } else {
                // constant scorer: no attribution mass anywhere; split evenly
                // so the percentages still total 100
                100.0 / blocks.len() as f64
            };
            (b.name.clone(), pct)
        })
        .collect();

    Ok(AttributionReport {
        contributions,
        raw_ig,
        completeness_residual,
        f_input,
        f_baseline,
        steps,
    })
}

/// Spans for stacked equal-width feature blocks.
pub fn uniform_spans(names: &[&str], width: usize) -> Vec<BlockSpan> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| BlockSpan { name: n.to_string(), start: i * width, len: width })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn linear_scorer_is_exact_with_zero_residual() {
        // f(z) = w . z, baseline 0: IG = w ⊙ z exactly
        let w = vec![0.5, -1.5, 2.0, 0.25];
        let wt = T64::from_vec(w.clone(), &[4, 1]);
        let x = T64::from_vec(vec![1.0, 2.0, -3.0, 4.0], &[1, 4]);
        let baseline = T64::zeros(&[1, 4]);
        let report = integrated_gradients(
            |z| z.matmul(&wt).reshape(&[]),
            &x,
            &baseline,
            8,
            &uniform_spans(&["a", "b"], 2),
        )
        .unwrap();
        let expected = [0.5, -3.0, -6.0, 1.0];
        for (ig, e) in report.raw_ig.iter().zip(expected.iter()) {
            assert!((ig - e).abs() < 1e-12, "{ig} vs {e}");
        }
        assert!(report.completeness_residual < 1e-12);
    }

    #[test]
    fn contributions_sum_to_one_hundred() {
        let wt = T64::from_vec(vec![1.0, 1.0, 1.0, 1.0], &[4, 1]);
        let x = T64::from_vec(vec![0.3, -0.7, 0.2, 0.9], &[1, 4]);
        let report = integrated_gradients(
            |z| z.matmul(&wt).reshape(&[]),
            &x,
            &T64::zeros(&[1, 4]),
            4,
            &uniform_spans(&["g", "a", "c", "l"], 1),
        )
        .unwrap();
        let total: f64 = report.contributions.iter().map(|(_, p)| p).sum();
        assert!((total - 100.0).abs() < 1e-6, "total {total}");
    }

    #[test]
    fn residual_shrinks_as_steps_double_on_smooth_scorer() {
        // f(z) = sum(tanh(z) * weights): smooth and nonlinear
        let w = T64::from_vec(vec![0.7, -1.1, 0.4, 1.3], &[4]);
        let x = T64::from_vec(vec![1.2, -0.8, 0.5, 2.0], &[4]);
        let baseline = T64::from_vec(vec![-0.3, 0.2, -0.5, 0.1], &[4]);
        let scorer = |z: &T64| z.tanh().mul(&w).sum_all();
        let mut last = f64::INFINITY;
        for steps in [4usize, 16, 64, 256] {
            let r = integrated_gradients(scorer, &x, &baseline, steps, &uniform_spans(&["all"], 4)).unwrap();
            assert!(
                r.completeness_residual <= last * 1.05,
                "residual grew: {} -> {} at {steps} steps",
                last,
                r.completeness_residual
            );
            last = r.completeness_residual;
        }
        // high-step evaluation nails completeness
        let r = integrated_gradients(scorer, &x, &baseline, 1024, &uniform_spans(&["all"], 4)).unwrap();
        let delta = (r.f_input - r.f_baseline).abs();
        assert!(r.completeness_residual < 1e-4 * delta, "residual {} vs delta {delta}", r.completeness_residual);
    }

    #[test]
    fn zero_steps_rejected() {
        let x = T64::zeros(&[2]);
        assert!(matches!(
            integrated_gradients(|z| z.sum_all(), &x, &x, 0, &[]),
            Err(Error::ZeroSteps)
        ));
    }
}
