#![allow(dead_code)]

use ewens_stein::{EwensParams, RawMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn params(theta: f64, n: usize) -> EwensParams {
    EwensParams::new(theta, n).unwrap()
}

/// Symmetric matrix with i.i.d. uniform [0, 1) entries on and above the
/// diagonal.
pub fn uniform_symmetric(n: usize, seed: u64) -> RawMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let x: f64 = rng.random();
            rows[i][j] = x;
            rows[j][i] = x;
        }
    }
    RawMatrix::from_rows(rows).unwrap()
}

/// Symmetric matrix with i.i.d. integer entries in `lo..=hi`.
pub fn integer_symmetric(n: usize, seed: u64, lo: i64, hi: i64) -> RawMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let x = rng.random_range(lo..=hi) as f64;
            rows[i][j] = x;
            rows[j][i] = x;
        }
    }
    RawMatrix::from_rows(rows).unwrap()
}

/// |a − b| ≤ tol · max(|a|, |b|, floor).
pub fn close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
