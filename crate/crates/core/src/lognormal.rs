//! Log-normal market laboratory.
//!
//! For assets following `dS/S = mu dt + sigma dz` the expected log-growth
//! rate of a constant mix `pi` is the quadratic reward
//! `R(pi) = <mu, pi> - pi^T Sigma pi / 2`. This module simulates such
//! markets, computes the growth-optimal allocation in closed form and
//! integrates the continuous softmax gradient flow of `R`, so the flow's
//! long-run behaviour can be compared with the optimum.

pub use nalgebra::DMatrix;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::PriceRelativeSeries;
use crate::ode::{self, Method};
use crate::onflow::DIVERGENCE_BOUND;
use crate::simplex::{dot, jacobian_apply_unchecked, softmax_slice, Allocation, LogitVector};

/// Smallest admissible covariance eigenvalue.
pub const MIN_EIGENVALUE: f64 = 1e-12;
/// Largest admissible covariance condition number.
pub const MAX_CONDITION: f64 = 1e12;
/// Supports are enumerated exhaustively, so K is capped.
pub const MAX_ENUMERATION_ASSETS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl MarketModel {
    /// Builds the model from drifts and a volatility matrix; the
    /// covariance is `sigma^T sigma`.
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let k = mu.len();
        if k == 0 {
            return Err(Error::invalid("market model needs at least one asset"));
        }
        if sigma.nrows() != k || sigma.ncols() != k {
            return Err(Error::invalid(format!(
                "volatility matrix is {}x{}, expected {k}x{k}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if mu.iter().chain(sigma.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("market model has non-finite parameters"));
        }
        let covariance = sigma.transpose() * &sigma;
        check_spd(&covariance)?;
        Ok(MarketModel { mu: DVector::from_vec(mu), sigma, covariance })
    }

    /// Builds the model from a covariance matrix, taking the transposed
    /// Cholesky factor as volatility matrix.
    pub fn from_covariance(mu: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let k = mu.len();
        if covariance.nrows() != k || covariance.ncols() != k {
            return Err(Error::invalid(format!(
                "covariance matrix is {}x{}, expected {k}x{k}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        if (&covariance - covariance.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid("covariance matrix is not symmetric"));
        }
        check_spd(&covariance)?;
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("covariance matrix is not positive definite"))?;
        Self::new(mu, chol.l().transpose())
    }

    pub fn num_assets(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        self.mu.as_slice()
    }

    pub fn volatility(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn cov_times(&self, pi: &[f64]) -> Vec<f64> {
        let k = self.num_assets();
        (0..k).map(|i| (0..k).map(|j| self.covariance[(i, j)] * pi[j]).sum()).collect()
    }

    /// `mu - Sigma pi`, the gradient of `R` in allocation space.
    pub fn reward_gradient(&self, pi: &[f64]) -> Vec<f64> {
        self.cov_times(pi).iter().zip(self.mu.iter()).map(|(s, m)| m - s).collect()
    }
}

fn check_spd(cov: &DMatrix<f64>) -> Result<()> {
    let eig = cov.clone().symmetric_eigenvalues();
    let min = eig.min();
    if min.is_nan() || min <= MIN_EIGENVALUE {
        return Err(Error::invalid(format!("covariance is not positive definite (smallest eigenvalue {min:e})")));
    }
    Ok(())
}

/// Exact log-normal stepping:
/// `f_k = exp((mu_k - Sigma_kk / 2) dt + sqrt(dt) (sigma^T eps)_k)`.
pub fn simulate_lognormal(model: &MarketModel, steps: usize, dt: f64, seed: u64) -> Result<PriceRelativeSeries> {
    simulate_with_volatility(model.mu(), &model.sigma, steps, dt, seed)
}

/// Same stepping for an arbitrary (possibly singular, even zero)
/// volatility matrix.
pub fn simulate_with_volatility(
    mu: &[f64],
    sigma: &DMatrix<f64>,
    steps: usize,
    dt: f64,
    seed: u64,
) -> Result<PriceRelativeSeries> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::invalid("simulation needs at least one step"));
    }
    let k = mu.len();
    if sigma.nrows() != k || sigma.ncols() != k {
        return Err(Error::invalid(format!("volatility matrix must be {k}x{k}")));
    }
    let variance = |i: usize| (0..k).map(|l| sigma[(l, i)] * sigma[(l, i)]).sum::<f64>();
    let drift: Vec<f64> = (0..k).map(|i| (mu[i] - 0.5 * variance(i)) * dt).collect();
    let sqrt_dt = dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = vec![0.0; k];
    let mut rows = Vec::with_capacity(steps);
    for _ in 0..steps {
        eps.iter_mut().for_each(|e| *e = StandardNormal.sample(&mut rng));
        let row = (0..k)
            .map(|i| {
                let shock: f64 = (0..k).map(|l| sigma[(l, i)] * eps[l]).sum();
                (drift[i] + sqrt_dt * shock).exp()
            })
            .collect();
        rows.push(row);
    }
    PriceRelativeSeries::from_rows(rows)
}

/// `R(pi) = <mu, pi> - pi^T Sigma pi / 2`.
pub fn quadratic_reward(pi: &[f64], model: &MarketModel) -> Result<f64> {
    Error::check_dim(model.num_assets(), pi.len())?;
    Ok(reward_unchecked(pi, model))
}

fn reward_unchecked(pi: &[f64], model: &MarketModel) -> f64 {
    dot(model.mu(), pi) - 0.5 * dot(pi, &model.cov_times(pi))
}

/// Gradient of `R(softmax(H))` with respect to the logits.
pub fn reward_logit_gradient(h: &[f64], model: &MarketModel) -> Result<Vec<f64>> {
    Error::check_dim(model.num_assets(), h.len())?;
    let pi = softmax_slice(h);
    Ok(jacobian_apply_unchecked(&pi, &model.reward_gradient(&pi)))
}

/// `Sigma^{-1} mu`, the maximizer of `R` without any constraint.
pub fn unconstrained_target(model: &MarketModel) -> Result<Vec<f64>> {
    let eig = model.covariance.clone().symmetric_eigenvalues();
    let condition = eig.max() / eig.min();
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::Numerical(format!("covariance condition number {condition:e} is too large")));
    }
    let chol =
        model.covariance.clone().cholesky().ok_or_else(|| Error::Numerical("cholesky factorization failed".into()))?;
    let x = chol.solve(&model.mu);
    Ok(x.as_slice().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    /// Zero-based asset indices carrying weight.
    pub support: Vec<usize>,
    /// Full-length point, exactly zero off the support.
    pub point: Vec<f64>,
    /// Whether the on-support entries are all nonnegative.
    pub in_simplex: bool,
    pub reward: f64,
    /// The covariance minor could not be factorized.
    pub degenerate: bool,
}

/// Stationary points of the allocation flow, one per nonempty support
/// `L`: on `L` they solve `Sigma_LL x = mu_L + c 1` with `c` fixing the
/// sum to one.
pub fn critical_points(model: &MarketModel) -> Result<Vec<CriticalPoint>> {
    let k = model.num_assets();
    if k > MAX_ENUMERATION_ASSETS {
        return Err(Error::invalid(format!(
            "support enumeration is limited to {MAX_ENUMERATION_ASSETS} assets, got {k}"
        )));
    }
    let mut out = Vec::with_capacity((1usize << k) - 1);
    for mask in 1usize..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let n = support.len();
        let minor = DMatrix::from_fn(n, n, |i, j| model.covariance[(support[i], support[j])]);
        let Some(chol) = minor.cholesky() else {
            out.push(CriticalPoint {
                support,
                point: vec![f64::NAN; k],
                in_simplex: false,
                reward: f64::NAN,
                degenerate: true,
            });
            continue;
        };
        let mu_l = DVector::from_fn(n, |i, _| model.mu[support[i]]);
        let from_mu = chol.solve(&mu_l);
        let from_ones = chol.solve(&DVector::from_element(n, 1.0));
        let c = (1.0 - from_mu.sum()) / from_ones.sum();
        let x = from_mu + from_ones * c;
        let mut point = vec![0.0; k];
        for (i, &s) in support.iter().enumerate() {
            point[s] = x[i];
        }
        let in_simplex = x.iter().all(|v| *v >= 0.0);
        let reward = reward_unchecked(&point, model);
        out.push(CriticalPoint { support, point, in_simplex, reward, degenerate: false });
    }
    Ok(out)
}

/// The growth-optimal long-only allocation: the feasible critical point
/// with the largest reward.
pub fn optimal_allocation(model: &MarketModel) -> Result<Allocation> {
    let best = critical_points(model)?
        .into_iter()
        .filter(|c| c.in_simplex && !c.degenerate)
        .max_by(|a, b| a.reward.total_cmp(&b.reward))
        .ok_or_else(|| Error::Numerical("no feasible critical point".into()))?;
    Ok(Allocation::normalized(best.point.into_iter().map(|x| x.max(0.0)).collect()))
}

/// Sampled trajectory of the continuous flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.points.last().expect("trajectory always holds the initial point")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if horizon <= 0.0 || !horizon.is_finite() || dt <= 0.0 || !dt.is_finite() {
        return Err(Error::invalid(format!("horizon and dt must be positive, got {horizon} and {dt}")));
    }
    Ok((horizon / dt).ceil().max(1.0) as usize)
}

pub fn continuous_flow(model: &MarketModel, h0: &LogitVector, horizon: f64, dt: f64) -> Result<Trajectory> {
    continuous_flow_sampled(model, h0, horizon, dt, 1)
}

/// RK4 integration of `dH/dt = grad_H R(softmax(H))`, recording every
/// `every`-th step plus the final one.
pub fn continuous_flow_sampled(
    model: &MarketModel,
    h0: &LogitVector,
    horizon: f64,
    dt: f64,
    every: usize,
) -> Result<Trajectory> {
    Error::check_dim(model.num_assets(), h0.len())?;
    let steps = step_count(horizon, dt)?;
    let h = horizon / steps as f64;
    let every = every.max(1);
    let mut rhs = |x: &[f64]| {
        let pi = softmax_slice(x);
        jacobian_apply_unchecked(&pi, &model.reward_gradient(&pi))
    };
    let mut traj = Trajectory { times: vec![], points: vec![], rewards: vec![] };
    let record = |t: f64, logits: &[f64], traj: &mut Trajectory| {
        let pi = softmax_slice(logits).into_inner();
        traj.rewards.push(reward_unchecked(&pi, model));
        traj.points.push(pi);
        traj.times.push(t);
    };
    let mut state = h0.to_vec();
    record(0.0, &state, &mut traj);
    for n in 1..=steps {
        state = ode::step(&state, h, Method::Rk4, &mut rhs);
        if let Some(bad) = state.iter().find(|x| !x.is_finite() || x.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Divergence { step: n, message: format!("logit reached {bad}") });
        }
        if n % every == 0 || n == steps {
            record(n as f64 * h, &state, &mut traj);
        }
    }
    Ok(traj)
}

/// `d pi/dt = hess(pi) hess(pi) (mu - Sigma pi)`, the same flow written
/// directly on allocations.
pub fn simplex_flow_rhs(pi: &[f64], model: &MarketModel) -> Vec<f64> {
    let inner = jacobian_apply_unchecked(pi, &model.reward_gradient(pi));
    jacobian_apply_unchecked(pi, &inner)
}

/// RK4 integration of [`simplex_flow_rhs`]; a cross-check for the logit
/// formulation.
pub fn continuous_flow_simplex(
    model: &MarketModel,
    pi0: &Allocation,
    horizon: f64,
    dt: f64,
    every: usize,
) -> Result<Trajectory> {
    Error::check_dim(model.num_assets(), pi0.len())?;
    let steps = step_count(horizon, dt)?;
    let h = horizon / steps as f64;
    let every = every.max(1);
    let mut rhs = |x: &[f64]| simplex_flow_rhs(x, model);
    let mut state = pi0.to_vec();
    let mut traj =
        Trajectory { times: vec![0.0], rewards: vec![reward_unchecked(&state, model)], points: vec![state.clone()] };
    for n in 1..=steps {
        state = ode::step(&state, h, Method::Rk4, &mut rhs);
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: n, message: "non-finite allocation".into() });
        }
        if n % every == 0 || n == steps {
            traj.times.push(n as f64 * h);
            traj.rewards.push(reward_unchecked(&state, model));
            traj.points.push(state.clone());
        }
    }
    Ok(traj)
}

/// Terminal speed below which a trajectory counts as settled.
pub const SETTLED_SPEED: f64 = 1e-10;
/// Allowed per-sample decrease of the reward before monotonicity fails.
pub const MONOTONE_SLACK: f64 = 1e-12;
/// Distance window to the optimum used for the exponential-rate fit.
pub const RATE_FIT_WINDOW: (f64, f64) = (1e-8, 1e-2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvergenceStatus {
    Converged,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Fitted `c1` in `|pi_t - pi*| ~ c0 exp(-c1 t)`.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub status: ConvergenceStatus,
    pub terminal: Vec<f64>,
    pub terminal_speed: f64,
    pub nearest_support: Vec<usize>,
    pub nearest_point: Vec<f64>,
    pub nearest_distance: f64,
    pub interior: bool,
    pub optimal: Vec<f64>,
    pub distance_to_optimal: f64,
    pub monotone_reward: bool,
    pub rate_fit: Option<RateFit>,
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Least-squares line through `(x, y)`; returns (slope, intercept, R²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Compares a flow trajectory with the critical-point set and the optimum.
pub fn verify_convergence(traj: &Trajectory, model: &MarketModel) -> Result<ConvergenceReport> {
    let k = model.num_assets();
    if traj.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    let terminal = traj.terminal().to_vec();
    Error::check_dim(k, terminal.len())?;
    let speed = simplex_flow_rhs(&terminal, model).iter().map(|x| x.abs()).fold(0.0, f64::max);
    let status = if speed <= SETTLED_SPEED { ConvergenceStatus::Converged } else { ConvergenceStatus::Inconclusive };

    let nearest = critical_points(model)?
        .into_iter()
        .filter(|c| !c.degenerate)
        .min_by(|a, b| linf(&a.point, &terminal).total_cmp(&linf(&b.point, &terminal)))
        .ok_or_else(|| Error::Numerical("no critical point available".into()))?;
    let nearest_distance = linf(&nearest.point, &terminal);
    let interior = nearest.support.len() == k && nearest.in_simplex && nearest.point.iter().all(|x| *x > 0.0);

    let optimal = optimal_allocation(model)?.into_inner();
    let distance_to_optimal = linf(&optimal, &terminal);
    let monotone_reward = traj.rewards.windows(2).all(|w| w[1] >= w[0] - MONOTONE_SLACK);

    let rate_fit = if interior {
        let (lo, hi) = RATE_FIT_WINDOW;
        let (xs, ys): (Vec<f64>, Vec<f64>) = traj
            .times
            .iter()
            .zip(&traj.points)
            .filter_map(|(t, p)| {
                let d = l2(p, &optimal);
                (d >= lo && d <= hi).then(|| (*t, d.ln()))
            })
            .unzip();
        (xs.len() >= 3).then(|| {
            let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
            RateFit { rate: -slope, intercept, r_squared, samples: xs.len() }
        })
    } else {
        None
    };

    Ok(ConvergenceReport {
        status,
        terminal,
        terminal_speed: speed,
        nearest_support: nearest.support,
        nearest_point: nearest.point,
        nearest_distance,
        interior,
        optimal,
        distance_to_optimal,
        monotone_reward,
        rate_fit,
    })
}
