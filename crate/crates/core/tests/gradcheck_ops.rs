//! Finite-difference verification of every differentiable op, in f64.
//!
//! Each op's output is projected to a scalar with fixed random weights so
//! every output element's gradient path is exercised. Inputs for kinked ops
//! (relu, clamp, abs, floor-based sampling) are sampled away from their
//! kinks; the checker itself never calls backward.

use pdr_core::ad::gradcheck::{check_loss_grads, FdReport, FdSubset};
use pdr_core::ad::{ScatterSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::rc::Rc;

type T64 = Tensor<f64>;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn rand_vec(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random vector avoiding a band around the given kink points.
fn rand_vec_away(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64, kinks: &[f64], margin: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let v = rng.random_range(lo..hi);
            if kinks.iter().all(|k| (v - k).abs() > margin) {
                break v;
            }
        })
        .collect()
}

fn weighted_sum(t: &T64, seed: u64) -> T64 {
    let mut r = rng(seed ^ 0x5eed);
    let w = T64::from_vec(rand_vec(&mut r, t.len(), -1.0, 1.0), t.shape());
    t.mul(&w).sum_all()
}

fn assert_ok(report: FdReport, op: &str) {
    assert!(
        report.max_rel_err < TOL,
        "{op}: max rel err {} at {:?} ({} elements checked)",
        report.max_rel_err,
        report.worst,
        report.checked
    );
}

fn check_unary(op: &str, seed: u64, domain: (f64, f64), kinks: &[f64], f: impl Fn(&T64) -> T64) {
    let mut r = rng(seed);
    let x = T64::param(rand_vec_away(&mut r, 12, domain.0, domain.1, kinks, 0.05), &[3, 4]);
    let xc = x.clone();
    let report = check_loss_grads(
        move || weighted_sum(&f(&xc), seed),
        &[("x", x)],
        FdSubset::All,
        EPS,
        1e-8,
    );
    assert_ok(report, op);
}

#[test]
fn unary_ops_match_finite_differences() {
    check_unary("neg", 1, (-2.0, 2.0), &[], |x| x.neg());
    check_unary("relu", 2, (-2.0, 2.0), &[0.0], |x| x.relu());
    check_unary("tanh", 3, (-2.0, 2.0), &[], |x| x.tanh());
    check_unary("sigmoid", 4, (-3.0, 3.0), &[], |x| x.sigmoid());
    check_unary("exp", 5, (-2.0, 2.0), &[], |x| x.exp());
    check_unary("log", 6, (0.2, 3.0), &[], |x| x.log());
    check_unary("sqrt", 7, (0.2, 3.0), &[], |x| x.sqrt());
    check_unary("sin", 8, (-3.0, 3.0), &[], |x| x.sin());
    check_unary("cos", 9, (-3.0, 3.0), &[], |x| x.cos());
    check_unary("abs", 10, (-2.0, 2.0), &[0.0], |x| x.abs());
    check_unary("clamp", 11, (-2.0, 2.0), &[-1.0, 1.0], |x| x.clamp(-1.0, 1.0));
    check_unary("add_scalar", 12, (-2.0, 2.0), &[], |x| x.add_scalar(0.7));
    check_unary("mul_scalar", 13, (-2.0, 2.0), &[], |x| x.mul_scalar(-1.3));
    check_unary("softmax", 14, (-2.0, 2.0), &[], |x| x.softmax(1));
    check_unary("log_softmax", 15, (-2.0, 2.0), &[], |x| x.log_softmax(1));
    check_unary("l2_normalize", 16, (0.3, 2.0), &[], |x| x.l2_normalize(1));
}

fn check_binary(op: &str, seed: u64, a_shape: &[usize], b_shape: &[usize], f: impl Fn(&T64, &T64) -> T64) {
    let mut r = rng(seed);
    let na: usize = a_shape.iter().product();
    let nb: usize = b_shape.iter().product();
    // keep |values| in [0.3, 2] so div never sits near a pole
    let mk = |r: &mut ChaCha20Rng, n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let sign = if r.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                sign * r.random_range(0.3..2.0)
            })
            .collect()
    };
    let a = T64::param(mk(&mut r, na), a_shape);
    let b = T64::param(mk(&mut r, nb), b_shape);
    let (ac, bc) = (a.clone(), b.clone());
    let report = check_loss_grads(
        move || weighted_sum(&f(&ac, &bc), seed),
        &[("a", a), ("b", b)],
        FdSubset::All,
        EPS,
        1e-8,
    );
    assert_ok(report, op);
}

#[test]
fn binary_ops_match_finite_differences() {
    for (seed, a_shape, b_shape) in [
        (20u64, vec![3, 4], vec![3, 4]),
        (21, vec![3, 1], vec![1, 4]),
        (22, vec![2, 3, 4], vec![4]),
        (23, vec![5], vec![]),
    ] {
        check_binary("add", seed, &a_shape, &b_shape, |a, b| a.add(b));
        check_binary("sub", seed + 100, &a_shape, &b_shape, |a, b| a.sub(b));
        check_binary("mul", seed + 200, &a_shape, &b_shape, |a, b| a.mul(b));
        check_binary("div", seed + 300, &a_shape, &b_shape, |a, b| a.div(b));
    }
}

#[test]
fn matmul_matches_finite_differences() {
    check_binary("matmul", 30, &[3, 4], &[4, 2], |a, b| a.matmul(b));
}

#[test]
fn reductions_and_shape_ops_match_finite_differences() {
    check_unary("sum_all", 40, (-2.0, 2.0), &[], |x| {
        x.sum_all().reshape(&[1])
    });
    check_unary("mean_all", 41, (-2.0, 2.0), &[], |x| x.mean_all().reshape(&[1]));
    check_unary("sum_axis0", 42, (-2.0, 2.0), &[], |x| x.sum_axis(0, false));
    check_unary("sum_axis1_keep", 43, (-2.0, 2.0), &[], |x| x.sum_axis(1, true));
    check_unary("reshape", 44, (-2.0, 2.0), &[], |x| x.reshape(&[2, 6]));
    check_unary("permute", 45, (-2.0, 2.0), &[], |x| x.permute(&[1, 0]));
    check_unary("slice", 46, (-2.0, 2.0), &[], |x| x.slice(1, 1, 2));
    check_binary("concat", 47, &[2, 3], &[2, 3], |a, b| T64::concat(&[a.clone(), b.clone()], 1));
}

#[test]
fn conv_ops_match_finite_differences() {
    for (seed, stride) in [(50u64, 1usize), (51, 2)] {
        let mut r = rng(seed);
        let x = T64::param(rand_vec(&mut r, 2 * 3 * 6 * 6, -1.0, 1.0), &[2, 3, 6, 6]);
        let w = T64::param(rand_vec(&mut r, 4 * 3 * 3 * 3, -0.5, 0.5), &[4, 3, 3, 3]);
        let (xc, wc) = (x.clone(), w.clone());
        let report = check_loss_grads(
            move || weighted_sum(&xc.conv2d(&wc, stride, 1), seed),
            &[("x", x), ("w", w)],
            FdSubset::All,
            EPS,
            1e-8,
        );
        assert_ok(report, &format!("conv2d stride {stride}"));
    }
    for (seed, stride) in [(52u64, 1usize), (53, 2)] {
        let mut r = rng(seed);
        let x = T64::param(rand_vec(&mut r, 2 * 3 * 4 * 4, -1.0, 1.0), &[2, 3, 4, 4]);
        let w = T64::param(rand_vec(&mut r, 3 * 2 * 4 * 4, -0.5, 0.5), &[3, 2, 4, 4]);
        let (xc, wc) = (x.clone(), w.clone());
        let report = check_loss_grads(
            move || weighted_sum(&xc.conv_transpose2d(&wc, stride, 1), seed),
            &[("x", x), ("w", w)],
            FdSubset::All,
            EPS,
            1e-8,
        );
        assert_ok(report, &format!("conv_transpose2d stride {stride}"));
    }
}

#[test]
fn grid_sample_matches_finite_differences() {
    let mut r = rng(60);
    let img = T64::param(rand_vec(&mut r, 5 * 5 * 2, 0.0, 1.0), &[5, 5, 2]);
    // grid coordinates away from pixel-lattice kinks and the border
    let n_pts = 7;
    let coords: Vec<f64> = (0..n_pts * 2)
        .map(|_| loop {
            let v: f64 = r.random_range(-0.85..0.85);
            let px = (v + 1.0) / 2.0 * 4.0;
            if (px - px.round()).abs() > 0.1 {
                break v;
            }
        })
        .collect();
    let grid = T64::param(coords, &[1, n_pts, 2]);
    let (ic, gc) = (img.clone(), grid.clone());
    let report = check_loss_grads(
        move || weighted_sum(&ic.grid_sample(&gc), 60),
        &[("img", img), ("grid", grid)],
        FdSubset::All,
        EPS,
        1e-8,
    );
    assert_ok(report, "grid_sample");
}

#[test]
fn scatter_add_and_select_match_finite_differences() {
    let mut r = rng(70);
    let src = T64::param(rand_vec(&mut r, 6 * 2, -1.0, 1.0), &[6, 2]);
    let spec = ScatterSpec::new(vec![0, 3, 3, 1, 4, 0], 5);
    let sc = src.clone();
    let report = check_loss_grads(
        move || weighted_sum(&sc.scatter_add(&spec), 70),
        &[("src", src)],
        FdSubset::All,
        EPS,
        1e-8,
    );
    assert_ok(report, "scatter_add");

    let a = T64::param(rand_vec(&mut r, 8, -1.0, 1.0), &[8]);
    let b = T64::param(rand_vec(&mut r, 8, -1.0, 1.0), &[8]);
    let mask = Rc::new((0..8).map(|i| i % 3 == 0).collect::<Vec<bool>>());
    let (ac, bc) = (a.clone(), b.clone());
    let report = check_loss_grads(
        move || weighted_sum(&T64::select(Rc::clone(&mask), &ac, &bc), 71),
        &[("a", a), ("b", b)],
        FdSubset::All,
        EPS,
        1e-8,
    );
    assert_ok(report, "select");
}

#[test]
fn two_layer_perceptron_grads_match_finite_differences() {
    // random 2-layer perceptron with exactly 10 parameters:
    // 3x2 weights (6) + bias (2) + 2x1 readout (2)
    let mut r = rng(80);
    let w1 = T64::param(rand_vec(&mut r, 6, -1.0, 1.0), &[3, 2]);
    let b1 = T64::param(rand_vec(&mut r, 2, -0.5, 0.5), &[1, 2]);
    let w2 = T64::param(rand_vec(&mut r, 2, -1.0, 1.0), &[2, 1]);
    let x = T64::from_vec(rand_vec(&mut r, 12, -1.0, 1.0), &[4, 3]);
    let (w1c, b1c, w2c) = (w1.clone(), b1.clone(), w2.clone());
    let report = check_loss_grads(
        move || x.matmul(&w1c).add(&b1c).tanh().matmul(&w2c).mean_all(),
        &[("w1", w1), ("b1", b1), ("w2", w2)],
        FdSubset::All,
        EPS,
        1e-8,
    );
    assert_eq!(report.checked, 10);
    assert_ok(report, "two-layer perceptron");
}

#[test]
fn backward_is_linear_in_the_loss() {
    // grad(a*f + b*g) == a*grad(f) + b*grad(g), elementwise on leaves
    let mut r = rng(90);
    let x = T64::param(rand_vec(&mut r, 6, 0.3, 1.5), &[6]);
    let (alpha, beta) = (1.7, -0.6);

    let f = |x: &T64| x.mul(x).sum_all();
    let g = |x: &T64| x.exp().mean_all();

    x.zero_grad();
    f(&x).backward().unwrap();
    let gf = x.grad().unwrap();
    x.zero_grad();
    g(&x).backward().unwrap();
    let gg = x.grad().unwrap();
    x.zero_grad();
    f(&x).mul_scalar(alpha).add(&g(&x).mul_scalar(beta)).backward().unwrap();
    let combined = x.grad().unwrap();
    for i in 0..6 {
        let expect = alpha * gf[i] + beta * gg[i];
        assert!((combined[i] - expect).abs() < 1e-12, "slot {i}: {} vs {}", combined[i], expect);
    }
}

#[test]
fn gradients_are_deterministic() {
    let run = || {
        let mut r = rng(100);
        let x = T64::param(rand_vec(&mut r, 20, -1.0, 1.0), &[4, 5]);
        let w = T64::param(rand_vec(&mut r, 15, -1.0, 1.0), &[5, 3]);
        let loss = x.matmul(&w).tanh().mul(&x.matmul(&w)).mean_all();
        loss.backward().unwrap();
        (x.grad().unwrap(), w.grad().unwrap(), loss.item())
    };
    let (gx1, gw1, l1) = run();
    let (gx2, gw2, l2) = run();
    assert!(l1 == l2 && gx1 == gx2 && gw1 == gw2, "identical graph + seed must give bit-identical results");
}
