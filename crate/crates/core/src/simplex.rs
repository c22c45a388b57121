//! Points of the unit simplex and the softmax parametrization.
//!
//! Every strategy in the crate ends up producing an [`Allocation`]; the
//! Onflow engine and the log-normal laboratory work on unconstrained
//! [`LogitVector`]s and map them back with [`softmax`].

use std::ops::Deref;

use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute tolerance on the weight sum accepted by [`Allocation::new`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Long-only portfolio weights: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Allocation(Vec<f64>);

impl Allocation {
    /// Validates `weights` and renormalizes them by their sum.
    ///
    /// Entries must be finite and nonnegative and the sum must be within
    /// [`SUM_TOLERANCE`] of one; anything further away is rejected rather
    /// than silently projected.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("allocation needs at least one asset"));
        }
        if let Some((k, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("allocation weight {k} is {w}, expected a finite nonnegative value")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("allocation weights sum to {sum}, expected 1")));
        }
        Ok(Self::normalized(weights))
    }

    /// Uniform weights `1/K`.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("allocation needs at least one asset"));
        }
        Ok(Allocation(vec![1.0 / k as f64; k]))
    }

    /// All wealth in asset `index`.
    pub fn vertex(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::IndexOutOfRange { index, len: k });
        }
        let mut w = vec![0.0; k];
        w[index] = 1.0;
        Ok(Allocation(w))
    }

    /// Divides by the sum. Callers guarantee nonnegative entries with a
    /// positive sum.
    pub(crate) fn normalized(mut weights: Vec<f64>) -> Self {
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        Allocation(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_distance(&self, other: &Allocation) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl Deref for Allocation {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Unconstrained softmax coordinates `H`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::invalid("logit vector needs at least one entry"));
        }
        if logits.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("logit vector has non-finite entries"));
        }
        Ok(LogitVector(logits))
    }

    pub fn zeros(k: usize) -> Self {
        LogitVector(vec![0.0; k])
    }

    /// Logits whose softmax is `pi`; requires strictly positive weights.
    pub fn from_allocation(pi: &Allocation) -> Result<Self> {
        if pi.iter().any(|&w| w <= 0.0) {
            return Err(Error::invalid("only interior allocations have finite logits"));
        }
        Ok(LogitVector(pi.iter().map(|w| w.ln()).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LogitVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Softmax of raw logits with max-subtraction. Shared by code paths that
/// hold intermediate (already finite) logits as plain slices.
pub(crate) fn softmax_slice(h: &[f64]) -> Allocation {
    let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Allocation::normalized(h.iter().map(|x| (x - max).exp()).collect())
}

pub fn softmax(h: &LogitVector) -> Allocation {
    softmax_slice(h)
}

/// Action of the softmax Jacobian `diag(pi) - pi pi^T` on `v`, i.e.
/// `pi * (v - <pi, v>)`. The result always sums to zero.
pub fn jacobian_apply(pi: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(pi.len(), v.len())?;
    Ok(jacobian_apply_unchecked(pi, v))
}

pub(crate) fn jacobian_apply_unchecked(pi: &[f64], v: &[f64]) -> Vec<f64> {
    let mean: f64 = pi.iter().zip(v).map(|(p, x)| p * x).sum();
    pi.iter().zip(v).map(|(p, x)| p * (x - mean)).collect()
}

/// `(1 + lambda) softmax(H) - lambda / K`: weights still sum to one but may
/// go as low as `-lambda / K`, which models limited short selling.
pub fn leveraged_allocation(h: &LogitVector, lambda: f64) -> Result<Vec<f64>> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::invalid(format!("leverage must be a finite nonnegative number, got {lambda}")));
    }
    let k = h.len() as f64;
    Ok(softmax(h).iter().map(|p| (1.0 + lambda) * p - lambda / k).collect())
}

/// True iff every weight is at least `eps`.
pub fn is_interior(pi: &Allocation, eps: f64) -> bool {
    pi.iter().all(|&w| w >= eps)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn logits(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_zero_is_uniform() {
        let pi = softmax(&logits(&[0.0, 0.0]));
        assert_eq!(pi.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_of_ln2() {
        let pi = softmax(&logits(&[2f64.ln(), 0.0]));
        assert_abs_diff_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_shift_invariance() {
        let h = [0.1, -0.4, 2.0];
        let shifted: Vec<f64> = h.iter().map(|x| x + 7.3).collect();
        let a = softmax(&logits(&h));
        let b = softmax(&logits(&shifted));
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let pi = softmax(&logits(&[900.0, 0.0, -900.0]));
        assert!(pi.iter().all(|w| w.is_finite()));
        assert_abs_diff_eq!(pi[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(LogitVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LogitVector::new(vec![f64::INFINITY]).is_err());
        assert!(LogitVector::new(vec![]).is_err());
    }

    #[test]
    fn jacobian_annihilates_constants() {
        let out = jacobian_apply(&[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn jacobian_direct_value() {
        let out = jacobian_apply(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(out[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_matches_dense_matrix() {
        let pi = [0.2, 0.3, 0.5];
        let v = [3.0, -1.0, 2.0];
        // diag(pi) - pi pi^T, built entry by entry
        let mut expected = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { pi[i] } else { 0.0 } - pi[i] * pi[j];
                expected[i] += m * v[j];
            }
        }
        let out = jacobian_apply(&pi, &v).unwrap();
        for (o, e) in out.iter().zip(expected) {
            assert_abs_diff_eq!(*o, e, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(out.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn jacobian_dimension_mismatch() {
        assert!(matches!(jacobian_apply(&[0.5, 0.5], &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn leverage_zero_is_softmax() {
        let h = logits(&[0.3, -1.2, 0.7]);
        let lev = leveraged_allocation(&h, 0.0).unwrap();
        assert_eq!(lev, softmax(&h).into_inner());
    }

    #[test]
    fn leverage_uniform_fixed_point() {
        let lev = leveraged_allocation(&logits(&[0.0, 0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(lev[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(lev[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn leverage_saturated_limit() {
        let lev = leveraged_allocation(&logits(&[20.0, -20.0]), 1.0).unwrap();
        assert_abs_diff_eq!(lev[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(lev[1], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(lev.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert!(lev[1] >= -0.5);
    }

    #[test]
    fn negative_leverage_rejected() {
        assert!(leveraged_allocation(&logits(&[0.0, 0.0]), -0.1).is_err());
    }

    #[test]
    fn interior_predicate() {
        let a = Allocation::new(vec![0.5, 0.5]).unwrap();
        let b = Allocation::new(vec![1.0, 0.0]).unwrap();
        let c = Allocation::new(vec![1e-10, 1.0 - 1e-10]).unwrap();
        assert!(is_interior(&a, 1e-9));
        assert!(!is_interior(&b, 1e-9));
        assert!(!is_interior(&c, 1e-9));
    }

    #[test]
    fn allocation_validation() {
        assert!(Allocation::new(vec![0.6, 0.5]).is_err());
        assert!(Allocation::new(vec![1.2, -0.2]).is_err());
        assert!(Allocation::new(vec![]).is_err());
        let nearly = Allocation::new(vec![0.5, 0.5 + 5e-13]).unwrap();
        assert!((nearly.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
