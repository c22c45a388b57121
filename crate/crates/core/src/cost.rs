//! Proportional transaction fees.
//!
//! Two views of the same fee model live here: the smoothed penalty that the
//! Onflow gradient flow differentiates, and the exact multiplicative factor
//! the backtest charges against wealth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simplex::{dot, jacobian_apply_unchecked, softmax_slice, Allocation, LogitVector};

/// Default pseudo-Huber smoothing width.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeeSchedule {
    /// Proportional fee rate charged on every unit traded (0.02 = 2%).
    pub xi: f64,
    /// Pseudo-Huber smoothing parameter.
    pub a: f64,
}

impl FeeSchedule {
    pub fn new(xi: f64, a: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&xi) {
            return Err(Error::invalid(format!("fee rate must lie in [0, 0.5), got {xi}")));
        }
        if a <= 0.0 || !a.is_finite() {
            return Err(Error::invalid(format!("smoothing parameter must be positive, got {a}")));
        }
        Ok(FeeSchedule { xi, a })
    }

    pub fn with_rate(xi: f64) -> Result<Self> {
        Self::new(xi, DEFAULT_SMOOTHING)
    }

    pub fn zero() -> Self {
        FeeSchedule { xi: 0.0, a: DEFAULT_SMOOTHING }
    }
}

pub(crate) fn check_relatives(f: &[f64]) -> Result<()> {
    match f.iter().position(|&x| x <= 0.0 || !x.is_finite()) {
        Some(k) => Err(Error::invalid(format!("price relative {k} is {}, expected a positive finite value", f[k]))),
        None => Ok(()),
    }
}

/// Weights after one period of price moves without trading:
/// `pi * f / <pi, f>`.
pub fn drifted_allocation(pi: &Allocation, f: &[f64]) -> Result<Allocation> {
    Error::check_dim(pi.len(), f.len())?;
    check_relatives(f)?;
    Ok(drift_unchecked(pi, f))
}

pub(crate) fn drift_unchecked(pi: &[f64], f: &[f64]) -> Allocation {
    Allocation::normalized(pi.iter().zip(f).map(|(p, x)| p * x).collect())
}

/// Smooth surrogate of `|x|`: `sqrt(x^2 + a^2) - a`.
pub fn huber_abs(x: f64, a: f64) -> f64 {
    x.hypot(a) - a
}

/// Smoothed fee penalty `xi * sum_k huber_abs(softmax(H)_k - pi_plus_k)`.
pub fn transaction_loss(h: &LogitVector, pi_plus: &Allocation, fees: &FeeSchedule) -> Result<f64> {
    Error::check_dim(h.len(), pi_plus.len())?;
    Ok(loss_unchecked(h, pi_plus, fees))
}

pub(crate) fn loss_unchecked(h: &[f64], pi_plus: &[f64], fees: &FeeSchedule) -> f64 {
    if fees.xi == 0.0 {
        return 0.0;
    }
    let pi = softmax_slice(h);
    fees.xi * pi.iter().zip(pi_plus).map(|(p, q)| huber_abs(p - q, fees.a)).sum::<f64>()
}

/// Gradient of [`transaction_loss`] with respect to the logits.
pub fn transaction_loss_grad(h: &LogitVector, pi_plus: &Allocation, fees: &FeeSchedule) -> Result<Vec<f64>> {
    Error::check_dim(h.len(), pi_plus.len())?;
    let pi = softmax_slice(h);
    Ok(loss_grad_at(&pi, pi_plus, fees))
}

/// Same gradient, evaluated at an already computed softmax `pi`.
pub(crate) fn loss_grad_at(pi: &[f64], pi_plus: &[f64], fees: &FeeSchedule) -> Vec<f64> {
    if fees.xi == 0.0 {
        return vec![0.0; pi.len()];
    }
    // derivative of the smoothed |x| at x = pi_k - pi_plus_k
    let slope: Vec<f64> = pi
        .iter()
        .zip(pi_plus)
        .map(|(p, q)| {
            let x = p - q;
            x / x.hypot(fees.a)
        })
        .collect();
    let mut g = jacobian_apply_unchecked(pi, &slope);
    g.iter_mut().for_each(|x| *x *= fees.xi);
    g
}

/// Exact wealth multiplier `1 - xi * |pi_from - pi_to|_1` for rebalancing.
pub fn rebalance_factor(pi_from: &Allocation, pi_to: &Allocation, xi: f64) -> Result<f64> {
    Error::check_dim(pi_from.len(), pi_to.len())?;
    if !(0.0..0.5).contains(&xi) {
        return Err(Error::invalid(format!("fee rate must lie in [0, 0.5), got {xi}")));
    }
    Ok(1.0 - xi * pi_from.l1_distance(pi_to))
}

/// Portfolio gross return `<pi, f>`.
pub(crate) fn gross_return(pi: &[f64], f: &[f64]) -> f64 {
    dot(pi, f)
}
