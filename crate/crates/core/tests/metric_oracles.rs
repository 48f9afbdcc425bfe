//! Clustering against an independent from-scratch oracle.
//!
//! The oracle recomputes, at every merge step, the Ward cost
//! delta(A,B) = |A||B|/(|A|+|B|) * ||mean(A) - mean(B)||^2 directly from
//! the current point sets (no Lance-Williams recursion), with the same
//! slot/tie-break conventions as the implementation.

use pdr_core::ad::Tensor;
use pdr_core::eval::{cluster_accuracy, hac_ward, nmi, weighted_f1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn ward_oracle(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    let d = points[0].len();
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let delta = |a: &[usize], b: &[usize]| -> f64 {
        let mean = |idx: &[usize]| -> Vec<f64> {
            let mut m = vec![0.0; d];
            for &i in idx {
                for t in 0..d {
                    m[t] += points[i][t];
                }
            }
            for v in m.iter_mut() {
                *v /= idx.len() as f64;
            }
            m
        };
        let (ma, mb) = (mean(a), mean(b));
        let dist2: f64 = ma.iter().zip(mb.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        let (na, nb) = (a.len() as f64, b.len() as f64);
        na * nb / (na + nb) * dist2
    };
    for _ in 0..(n - k) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            let Some(a) = &members[i] else { continue };
            for j in (i + 1)..n {
                let Some(b) = &members[j] else { continue };
                let cost = delta(a, b);
                if best.map_or(true, |(_, _, c)| cost < c) {
                    best = Some((i, j, cost));
                }
            }
        }
        let (i, j, _) = best.unwrap();
        let moved = members[j].take().unwrap();
        members[i].as_mut().unwrap().extend(moved);
    }
    // canonical relabel by first appearance over original point order
    let mut owner = vec![usize::MAX; n];
    for (slot, m) in members.iter().enumerate() {
        if let Some(idx) = m {
            for &p in idx {
                owner[p] = slot;
            }
        }
    }
    let mut label_of = std::collections::HashMap::new();
    let mut next = 0usize;
    owner
        .iter()
        .map(|slot| {
            *label_of.entry(*slot).or_insert_with(|| {
                let l = next;
                next += 1;
                l
            })
        })
        .collect()
}

#[test]
fn hac_ward_matches_bruteforce_oracle_over_twenty_seeds() {
    for seed in 0..20u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(1000 + seed);
        let n = 30;
        let d = 4;
        let points: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        let x = Tensor::<f64>::from_vec(flat, &[n, d]);
        for k in [2usize, 3, 5, 10] {
            let ours = hac_ward(&x, k).unwrap().assignments;
            let oracle = ward_oracle(&points, k);
            assert_eq!(ours, oracle, "seed {seed} k {k}");
        }
    }
}

#[test]
fn hac_ward_is_row_order_invariant_up_to_relabeling() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let n = 24;
    let d = 3;
    let points: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let x = Tensor::<f64>::from_vec(flat, &[n, d]);
    let base = hac_ward(&x, 4).unwrap().assignments;

    // reverse the rows
    let rev_flat: Vec<f64> = points.iter().rev().flatten().copied().collect();
    let xr = Tensor::<f64>::from_vec(rev_flat, &[n, d]);
    let rev = hac_ward(&xr, 4).unwrap().assignments;
    for i in 0..n {
        for j in 0..n {
            assert_eq!(
                base[i] == base[j],
                rev[n - 1 - i] == rev[n - 1 - j],
                "co-membership must survive row reordering"
            );
        }
    }
}

#[test]
fn singleton_clustering_scores_perfect_accuracy_for_any_labels() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let n = 17;
    let assignments: Vec<usize> = (0..n).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4usize)).collect();
    assert_eq!(cluster_accuracy(&assignments, &labels).unwrap(), 1.0);
}

#[test]
fn metric_fixtures_match_hand_enumeration_exactly() {
    // clusters {A,A,B} and {B,B}
    let assignments = vec![0, 0, 0, 1, 1];
    let labels = vec![0, 0, 1, 1, 1];
    assert!((cluster_accuracy(&assignments, &labels).unwrap() - 0.8).abs() < 1e-12);
    assert!((weighted_f1(&assignments, &labels).unwrap() - 0.8).abs() < 1e-12);
    // one cluster, two balanced classes
    assert!((weighted_f1(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    // identical partitions
    assert!((nmi(&[0, 1, 2, 0, 1, 2], &[2, 0, 1, 2, 0, 1]).unwrap() - 1.0).abs() < 1e-12);
}
