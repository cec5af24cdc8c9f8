#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use stablecoin_collateral::market_data::PriceHistory;

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

pub fn testdata(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata").join(rel)
}

pub fn write_prices(history: &PriceHistory, path: &Path) {
    let file = std::fs::File::create(path).unwrap();
    history.write_csv(file).unwrap();
}

/// Random PSD matrix `AAᵀ + εI` with entries of `A` uniform in ±0.5.
pub fn random_covariance<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.5..0.5));
    &a * a.transpose() + DMatrix::identity(m, m) * 0.01
}

/// Skewed factor-model returns, `T × M`.
pub fn random_returns<R: Rng>(t: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    let loadings: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.2)).collect();
    let idio: Vec<f64> = (0..m).map(|_| rng.random_range(0.005..0.04)).collect();
    let skew: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.03)).collect();
    let mut r = DMatrix::zeros(t, m);
    for row in 0..t {
        let f: f64 = 0.02 * rng.sample::<f64, _>(StandardNormal);
        for j in 0..m {
            let crash = if rng.random::<f64>() < 0.05 { -skew[j] * 3.0 } else { skew[j] * 0.15 };
            r[(row, j)] = loadings[j] * f + idio[j] * rng.sample::<f64, _>(StandardNormal) + crash;
        }
    }
    r
}

/// `xᵀCx`.
pub fn quad(c: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| x[i] * c[(i, j)] * x[j]).sum::<f64>()).sum()
}

/// Every point of the capped simplex on a grid of `1/steps`, as integer
/// multiples of the step.
pub fn simplex_grid(m: usize, steps: u32, cap: f64, mut visit: impl FnMut(&[f64])) {
    let cap_units = (cap * steps as f64 + 1e-9).floor() as u32;
    let mut units = vec![0u32; m];
    fn rec(i: usize, left: u32, cap: u32, steps: u32, units: &mut [u32], visit: &mut dyn FnMut(&[f64])) {
        let m = units.len();
        if i == m - 1 {
            if left <= cap {
                units[i] = left;
                let x: Vec<f64> = units.iter().map(|u| *u as f64 / steps as f64).collect();
                visit(&x);
            }
            return;
        }
        for u in 0..=left.min(cap) {
            units[i] = u;
            rec(i + 1, left - u, cap, steps, units, visit);
        }
    }
    rec(0, steps, cap_units, steps, &mut units, &mut visit);
}
