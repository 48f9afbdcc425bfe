//! Pairwise feature-block correlation as a disentanglement measure: for
//! each pair of blocks, the mean absolute Pearson correlation over all
//! dimension pairs, computed across samples.

use serde::Serialize;

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::nets::{FeatureSet, ALL_BLOCKS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize)]
pub struct PccReport {
    /// Symmetric 4x4 matrix over (geom, alb, cam, light); unit diagonal.
    pub matrix: [[f64; 4]; 4],
    /// Mean of the six distinct off-diagonal entries.
    pub mean_off_diagonal: f64,
    pub block_names: [&'static str; 4],
    /// Pairs whose value is undefined (a block with no varying dimension).
    pub undefined_pairs: Vec<(String, String)>,
    pub n_samples: usize,
}

/// Column-standardized matrix and a mask of valid (non-constant) columns.
fn standardize(x: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<bool>) {
    let mut out = vec![0.0; n * d];
    let mut valid = vec![false; d];
    for j in 0..d {
        let mean = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 1e-24 {
            valid[j] = true;
            let inv = 1.0 / (var * n as f64).sqrt();
            for i in 0..n {
                out[i * d + j] = (x[i * d + j] - mean) * inv;
            }
        }
    }
    (out, valid)
}

/// Mean |Pearson r| between every pair of feature blocks.
pub fn pcc_disentanglement<T: Scalar>(features: &FeatureSet<T>) -> Result<PccReport> {
    let n = features.batch_size();
    if n < 3 {
        return Err(Error::TooFewSamples { got: n, min: 3 });
    }
    let to64 = |t: &Tensor<T>| -> Vec<f64> { t.data().iter().map(|v| v.as_f64()).collect() };
    let blocks: Vec<(Vec<f64>, Vec<bool>, usize)> = ALL_BLOCKS
        .iter()
        .map(|&b| {
            let t = features.block(b);
            let d = t.shape()[1];
            let (std, valid) = standardize(&to64(t), n, d);
            (std, valid, d)
        })
        .collect();

    let mut matrix = [[1.0f64; 4]; 4];
    let mut undefined = Vec::new();
    let mut off_sum = 0.0;
    let mut off_count = 0usize;
    for a in 0..4 {
        for b in (a + 1)..4 {
            let (xa, va, da) = &blocks[a];
            let (xb, vb, db) = &blocks[b];
            // with standardized columns, r(i,j) = sum_s xa[s,i] * xb[s,j]
            let mut total = 0.0;
            let mut pairs = 0usize;
            for i in 0..*da {
                if !va[i] {
                    continue;
                }
                for j in 0..*db {
                    if !vb[j] {
                        continue;
                    }
                    let mut r = 0.0;
                    for s in 0..n {
                        r += xa[s * da + i] * xb[s * db + j];
                    }
                    total += r.abs().min(1.0);
                    pairs += 1;
                }
            }
            if pairs == 0 {
                matrix[a][b] = f64::NAN;
                matrix[b][a] = f64::NAN;
                undefined.push((ALL_BLOCKS[a].name().to_string(), ALL_BLOCKS[b].name().to_string()));
            } else {
                let v = total / pairs as f64;
                matrix[a][b] = v;
                matrix[b][a] = v;
                off_sum += v;
                off_count += 1;
            }
        }
    }
    if off_count == 0 {
        return Err(Error::Other("all block pairs undefined (constant features)".into()));
    }
    Ok(PccReport {
        matrix,
        mean_off_diagonal: off_sum / off_count as f64,
        block_names: [
            ALL_BLOCKS[0].name(),
            ALL_BLOCKS[1].name(),
            ALL_BLOCKS[2].name(),
            ALL_BLOCKS[3].name(),
        ],
        undefined_pairs: undefined,
        n_samples: n,
    })
}
