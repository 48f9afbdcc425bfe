//! Hierarchical agglomerative clustering with Ward (minimum variance)
//! linkage via the Lance-Williams update on squared Euclidean distances.
//!
//! Conventions (shared with the brute-force test oracle): clusters live in
//! slots 0..n; a merge writes into the smaller slot and retires the larger;
//! the next merge is the active pair with minimal distance, ties broken by
//! lexicographically smallest (i, j). Final assignments are relabeled
//! 0..k-1 by smallest member index.

use serde::Serialize;

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub k: usize,
    /// Merge history as (slot_i, slot_j, height) with height = sqrt of the
    /// Ward linkage distance; non-decreasing along the sequence.
    pub merges: Vec<(usize, usize, f64)>,
}

/// Ward-linkage HAC from singletons down to `k` clusters.
pub fn hac_ward<T: Scalar>(features: &Tensor<T>, k: usize) -> Result<ClusteringResult> {
    assert!(features.ndim() == 2, "features must be [N,D], got {:?}", features.shape());
    let n = features.shape()[0];
    let d = features.shape()[1];
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { requested: k, available: n });
    }
    let x: Vec<f64> = features.data().iter().map(|v| v.as_f64()).collect();

    // full symmetric matrix of squared distances
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for t in 0..d {
                let diff = x[i * d + t] - x[j * d + t];
                s += diff * diff;
            }
            dist[i * n + j] = s;
            dist[j * n + i] = s;
        }
    }

    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut member_of = (0..n).collect::<Vec<usize>>(); // point -> slot
    let mut merges = Vec::with_capacity(n - k);

    for _ in 0..(n - k) {
        // minimal active pair, lexicographic tie-break
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let dij = dist[i * n + j];
                if best.map_or(true, |(_, _, b)| dij < b) {
                    best = Some((i, j, dij));
                }
            }
        }
        let (i, j, dij) = best.expect("more than k active clusters remain");
        merges.push((i, j, dij.max(0.0).sqrt()));

        // Lance-Williams ward update into slot i
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for h in 0..n {
            if !active[h] || h == i || h == j {
                continue;
            }
            let nh = size[h] as f64;
            let dhi = dist[h * n + i];
            let dhj = dist[h * n + j];
            let updated = ((ni + nh) * dhi + (nj + nh) * dhj - nh * dij) / (ni + nj + nh);
            dist[h * n + i] = updated;
            dist[i * n + h] = updated;
        }
        size[i] += size[j];
        active[j] = false;
        for m in member_of.iter_mut() {
            if *m == j {
                *m = i;
            }
        }
    }

    // canonical labels: order of first appearance
    let mut label_of_slot = vec![usize::MAX; n];
    let mut next = 0usize;
    let mut assignments = Vec::with_capacity(n);
    for &slot in &member_of {
        if label_of_slot[slot] == usize::MAX {
            label_of_slot[slot] = next;
            next += 1;
        }
        assignments.push(label_of_slot[slot]);
    }
    debug_assert_eq!(next, k);
    Ok(ClusteringResult { assignments, k, merges })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(rows: &[&[f64]]) -> Tensor<f64> {
        let d = rows[0].len();
        Tensor::from_vec(rows.iter().flat_map(|r| r.iter().copied()).collect(), &[rows.len(), d])
    }

    #[test]
    fn n_equals_k_gives_singletons() {
        let x = tensor(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]]);
        let r = hac_ward(&x, 3).unwrap();
        assert_eq!(r.assignments, vec![0, 1, 2]);
        assert!(r.merges.is_empty());
    }

    #[test]
    fn separated_blobs_recovered_exactly() {
        // two tight blobs 10 sigma apart
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut truth = Vec::new();
        let mut state = 1u64;
        let mut jitter = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 40) as f64 / (1u64 << 24) as f64 - 0.5
        };
        for i in 0..8 {
            let center = if i < 4 { 0.0 } else { 10.0 };
            rows.push(vec![center + jitter(), jitter()]);
            truth.push(usize::from(i >= 4));
        }
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let r = hac_ward(&tensor(&refs), 2).unwrap();
        // identical up to renaming
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(
                    r.assignments[i] == r.assignments[j],
                    truth[i] == truth[j],
                    "pair ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn merge_heights_are_non_decreasing() {
        let x = tensor(&[
            &[0.0, 0.0],
            &[0.4, 0.1],
            &[3.0, 3.0],
            &[3.3, 2.8],
            &[10.0, 0.0],
            &[10.2, 0.3],
        ]);
        let r = hac_ward(&x, 1).unwrap();
        for pair in r.merges.windows(2) {
            assert!(pair[1].2 >= pair[0].2 - 1e-12, "heights {:?}", r.merges);
        }
    }

    #[test]
    fn too_many_clusters_rejected() {
        let x = tensor(&[&[0.0], &[1.0]]);
        assert!(matches!(hac_ward(&x, 3), Err(Error::TooManyClusters { .. })));
    }
}
