//! Fee-aware wealth accounting for a sequence of target allocations.
//!
//! Period `t` runs: hold `pi_t` while prices move by `f_t`, let the weights
//! drift to `pi_{t+}`, then trade to the next target `pi_{t+1}` and pay
//! `xi` on every unit of value moved. The initial position is free.

use serde::Serialize;

use crate::cost::{check_relatives, drift_unchecked, gross_return, FeeSchedule};
use crate::error::{Error, Result};
use crate::market::PriceRelativeSeries;
use crate::simplex::Allocation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub final_wealth: f64,
    /// Sum of daily L1 trades; 1.0 means 100% of portfolio value.
    pub total_turnover: f64,
    pub mean_daily_turnover: f64,
    pub log_wealth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    /// `T + 1` values starting at 1.
    pub wealth: Vec<f64>,
    /// The `T + 1` targets that were traded to.
    pub allocations: Vec<Allocation>,
    /// `T` drifted allocations, one per period before rebalancing.
    pub drifted: Vec<Allocation>,
    pub turnover_cum: Vec<f64>,
    /// Per-period exact fee factors `1 - xi * turnover`.
    pub fee_factors: Vec<f64>,
    pub summary: Summary,
}

pub fn run_backtest(targets: &[Allocation], rel: &PriceRelativeSeries, fees: &FeeSchedule) -> Result<BacktestResult> {
    let t_len = rel.len();
    if targets.len() != t_len + 1 {
        return Err(Error::LengthMismatch { expected: t_len + 1, got: targets.len() });
    }
    let k = rel.num_assets();
    if let Some(bad) = targets.iter().find(|p| p.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: bad.len() });
    }
    let mut wealth = Vec::with_capacity(t_len + 1);
    let mut drifted = Vec::with_capacity(t_len);
    let mut turnover_cum = Vec::with_capacity(t_len);
    let mut fee_factors = Vec::with_capacity(t_len);
    let mut v = 1.0;
    let mut cum = 0.0;
    wealth.push(v);
    for (t, f) in rel.rows().iter().enumerate() {
        check_relatives(f)?;
        let pi = &targets[t];
        v *= gross_return(pi, f);
        let plus = drift_unchecked(pi, f);
        let traded = plus.l1_distance(&targets[t + 1]);
        let factor = 1.0 - fees.xi * traded;
        v *= factor;
        cum += traded;
        wealth.push(v);
        drifted.push(plus);
        turnover_cum.push(cum);
        fee_factors.push(factor);
    }
    let mut result = BacktestResult {
        wealth,
        allocations: targets.to_vec(),
        drifted,
        turnover_cum,
        fee_factors,
        summary: Summary { final_wealth: 1.0, total_turnover: 0.0, mean_daily_turnover: 0.0, log_wealth: 0.0 },
    };
    result.summary = summarize(&result);
    Ok(result)
}

pub fn summarize(result: &BacktestResult) -> Summary {
    let final_wealth = *result.wealth.last().unwrap_or(&1.0);
    let total_turnover = result.turnover_cum.last().copied().unwrap_or(0.0);
    let periods = result.turnover_cum.len();
    Summary {
        final_wealth,
        total_turnover,
        mean_daily_turnover: if periods == 0 { 0.0 } else { total_turnover / periods as f64 },
        log_wealth: final_wealth.ln(),
    }
}
