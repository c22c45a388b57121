//! The Onflow allocation rule.
//!
//! Each trading period the logits follow the gradient flow of
//! `ln <softmax(H), f_t> - G_t(H)` for a "numerical time" `tau`, where `G_t`
//! is the smoothed fee penalty measured against the overnight-drifted
//! allocation. The flow is solved with a fixed-step integrator.

use serde::Serialize;

use crate::cost::{check_relatives, drift_unchecked, loss_grad_at, FeeSchedule};
use crate::error::{Error, Result};
use crate::market::PriceRelativeSeries;
use crate::ode::{self, Method};
use crate::simplex::{dot, softmax, softmax_slice, Allocation, LogitVector};

/// Any logit beyond this magnitude aborts the run. Softmax saturates long
/// before, so hitting it means the flow is broken.
pub const DIVERGENCE_BOUND: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnflowConfig {
    pub tau: f64,
    pub fees: FeeSchedule,
    pub substeps: usize,
    pub method: Method,
    pub batch: usize,
}

impl OnflowConfig {
    /// RK4 with 10 substeps and batch size 1.
    pub fn new(tau: f64, fees: FeeSchedule) -> Result<Self> {
        let cfg = OnflowConfig { tau, fees, substeps: 10, method: Method::Rk4, batch: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_substeps(mut self, substeps: usize) -> Result<Self> {
        self.substeps = substeps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Result<Self> {
        self.batch = batch;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        FeeSchedule::new(self.fees.xi, self.fees.a)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnflowState {
    pub logits: LogitVector,
    /// Number of trading periods consumed so far.
    pub step: usize,
}

impl OnflowState {
    /// Zero logits, i.e. the uniform allocation.
    pub fn initial(k: usize) -> Self {
        OnflowState { logits: LogitVector::zeros(k), step: 0 }
    }

    pub fn allocation(&self) -> Allocation {
        softmax(&self.logits)
    }
}

/// Log gross return `ln <softmax(H), f>`.
pub fn reward_log_return(h: &LogitVector, f: &[f64]) -> Result<f64> {
    Error::check_dim(h.len(), f.len())?;
    check_relatives(f)?;
    Ok(dot(&softmax(h), f).ln())
}

/// Right-hand side of the flow: gradient of the log return minus the
/// gradient of the smoothed fee penalty.
pub fn onflow_rhs(h: &LogitVector, f: &[f64], pi_plus: &Allocation, fees: &FeeSchedule) -> Result<Vec<f64>> {
    Error::check_dim(h.len(), f.len())?;
    Error::check_dim(h.len(), pi_plus.len())?;
    check_relatives(f)?;
    Ok(batched_rhs(h, &[f], pi_plus, fees))
}

/// Log-return gradient averaged over `window`, minus the fee gradient.
fn batched_rhs(h: &[f64], window: &[&[f64]], pi_plus: &[f64], fees: &FeeSchedule) -> Vec<f64> {
    let pi = softmax_slice(h);
    let k = pi.len();
    let mut g = vec![0.0; k];
    for f in window {
        let gross = dot(&pi, f);
        for i in 0..k {
            g[i] += pi[i] * f[i] / gross;
        }
    }
    let n = window.len() as f64;
    let fee = loss_grad_at(&pi, pi_plus, fees);
    for i in 0..k {
        g[i] = g[i] / n - pi[i] - fee[i];
    }
    g
}

fn flow(state: &OnflowState, window: &[&[f64]], config: &OnflowConfig) -> Result<OnflowState> {
    let k = state.logits.len();
    for f in window {
        Error::check_dim(k, f.len())?;
        check_relatives(f)?;
    }
    let last = window.last().ok_or_else(|| Error::invalid("empty observation window"))?;
    // the drifted allocation is data for this step and stays frozen during the solve
    let pi_plus = drift_unchecked(&softmax(&state.logits), last);
    let h = ode::integrate(&state.logits, config.tau, config.substeps, config.method, |h| {
        batched_rhs(h, window, &pi_plus, &config.fees)
    });
    let trading_step = state.step + window.len();
    if let Some(bad) = h.iter().find(|x| !x.is_finite() || x.abs() > DIVERGENCE_BOUND) {
        return Err(Error::Divergence { step: trading_step, message: format!("logit reached {bad}") });
    }
    Ok(OnflowState { logits: LogitVector::new(h)?, step: trading_step })
}

/// Advances the logits through one trading period with relatives `f`.
pub fn integrate_step(state: &OnflowState, f: &[f64], config: &OnflowConfig) -> Result<OnflowState> {
    flow(state, &[f], config)
}

/// One batched update: the reward gradient is averaged over all of
/// `window`, the fee term uses the drift over its last entry.
pub fn integrate_batch(state: &OnflowState, window: &[&[f64]], config: &OnflowConfig) -> Result<OnflowState> {
    flow(state, window, config)
}

/// Runs the algorithm over the whole series. Returns `T + 1` target
/// allocations: the uniform start, then one per observed period.
///
/// With `batch > 1` the logits are updated only after every `batch`
/// periods and the target is held in between; a trailing partial batch
/// leaves the last target unchanged.
pub fn onflow_allocate(rel: &PriceRelativeSeries, config: &OnflowConfig) -> Result<Vec<Allocation>> {
    config.validate()?;
    let k = rel.num_assets();
    let mut state = OnflowState::initial(k);
    let mut out = Vec::with_capacity(rel.len() + 1);
    out.push(state.allocation());
    for t in 0..rel.len() {
        if config.batch == 1 {
            state = integrate_step(&state, rel.row(t), config)?;
        } else if (t + 1) % config.batch == 0 {
            let window: Vec<&[f64]> = rel.rows()[t + 1 - config.batch..=t].iter().map(Vec::as_slice).collect();
            state = flow(&OnflowState { step: t + 1 - config.batch, ..state }, &window, config)?;
        }
        out.push(state.allocation());
    }
    Ok(out)
}
