//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random row-stochastic `n×c` matrix with strictly positive entries.
pub fn random_probs(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, c), |_| rng.gen_range(0.01..1.0f64));
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// Exhaustive MSE minimum over every weight vector on the 0.01 grid of
/// `[0, 1]^4`, for two members and two classes.
///
/// For binary problems the mixture's first column is `A/(A+B)` with
/// `A = w00·a + w10·b` and `B = w01·(1−a) + w11·(1−b)`, so the two
/// column-weight pairs can be enumerated separately and combined.
pub fn grid_min_mse_p2c2(a: &Array2<f64>, b: &Array2<f64>, labels: &[usize]) -> f64 {
    const FLOOR: f64 = 1e-15;
    let n = labels.len();
    let steps: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let column = |c: usize| -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(101 * 101);
        for &u in &steps {
            for &v in &steps {
                out.push((0..n).map(|i| (u * a[[i, c]] + v * b[[i, c]]).max(FLOOR)).collect());
            }
        }
        out
    };
    let col0 = column(0);
    let col1 = column(1);
    let target: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { 0.0 }).collect();
    let mut best = f64::INFINITY;
    for av in &col0 {
        for bv in &col1 {
            let mut s = 0.0;
            for i in 0..n {
                let e = target[i] - av[i] / (av[i] + bv[i]);
                s += e * e;
            }
            if s < best {
                best = s;
            }
        }
    }
    2.0 * best / n as f64
}
