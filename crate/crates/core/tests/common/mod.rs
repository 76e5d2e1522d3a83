#![allow(dead_code)]

use ewc_gan::{RngStream, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Reference product of row-major `a` (m x k) and `b` (k x n).
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// Leaf with entries uniform in `[lo, hi]`, random sign if `signed`.
pub fn rand_param(rows: usize, cols: usize, lo: f64, hi: f64, signed: bool, rng: &mut RngStream) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v = rng.uniform(lo, hi);
            if signed && rng.uniform(0.0, 1.0) < 0.5 {
                -v
            } else {
                v
            }
        })
        .collect();
    Tensor::param(rows, cols, data).unwrap()
}

/// Largest gap between the reverse-mode gradient of `loss` and central
/// differences, relative to the largest gradient entry.
pub fn grad_check(params: &[Tensor], loss: impl Fn() -> Tensor) -> f64 {
    for p in params {
        p.zero_grad();
    }
    loss().backward().unwrap();
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad().unwrap()).collect();
    let mut max_diff: f64 = 0.0;
    let mut scale: f64 = 1e-8;
    for (p, g) in params.iter().zip(&analytic) {
        for i in 0..p.numel() {
            let orig = p.data()[i];
            p.data_mut()[i] = orig + FD_STEP;
            let up = loss().item();
            p.data_mut()[i] = orig - FD_STEP;
            let down = loss().item();
            p.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            max_diff = max_diff.max((numeric - g[i]).abs());
            scale = scale.max(numeric.abs()).max(g[i].abs());
        }
    }
    max_diff / scale
}
