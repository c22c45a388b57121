#![allow(dead_code)]

use nalgebra::DMatrix;
use onflow_core::market::{load_relatives, pair_preset};
use onflow_core::{DataFormat, MarketModel, PriceRelativeSeries};
use rand::Rng;

pub const NYSE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/nyse_o.csv");

pub fn nyse_pair(number: u8) -> PriceRelativeSeries {
    let preset = pair_preset(number).unwrap();
    load_relatives(NYSE, Some(&preset.assets), DataFormat::Relatives).unwrap()
}

pub fn random_vec<R: Rng>(rng: &mut R, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random point of the simplex with every weight at least `floor`.
pub fn random_interior<R: Rng>(rng: &mut R, k: usize, floor: f64) -> Vec<f64> {
    let raw = random_vec(rng, k, 0.0, 1.0);
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| floor + (1.0 - k as f64 * floor) * x / sum).collect()
}

/// `A^T A + shift I` with uniform entries in `A`.
pub fn random_spd<R: Rng>(rng: &mut R, k: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-0.5..0.5));
    a.transpose() * &a + DMatrix::identity(k, k) * shift
}

/// A model whose simplex-constrained optimum is `target`: with
/// `mu = Sigma target + c 1` the sum-constrained maximizer of the reward is
/// `target` for every `c`.
pub fn model_with_optimum<R: Rng>(rng: &mut R, target: &[f64]) -> MarketModel {
    let k = target.len();
    let cov = random_spd(rng, k, 0.1);
    let c = rng.random_range(-0.2..0.2);
    let mu: Vec<f64> = (0..k).map(|i| (0..k).map(|j| cov[(i, j)] * target[j]).sum::<f64>() + c).collect();
    MarketModel::from_covariance(mu, cov).unwrap()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Relative error with an absolute floor for near-zero entries.
pub fn rel_err(approx: &[f64], exact: &[f64]) -> f64 {
    let scale = exact.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-8);
    linf(approx, exact) / scale
}
