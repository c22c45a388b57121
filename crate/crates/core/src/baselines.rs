//! Benchmark strategies: buy-and-hold, constant rebalanced portfolios,
//! the best CRP in hindsight, exponentiated gradient and Cover's universal
//! portfolio.
//!
//! All of them are fee-oblivious: they emit target allocations and leave
//! fee accounting to [`crate::backtest`].

use serde::Serialize;

use crate::cost::{check_relatives, drift_unchecked, gross_return};
use crate::error::{Error, Result};
use crate::market::PriceRelativeSeries;
use crate::onflow::{onflow_allocate, OnflowConfig};
use crate::simplex::{softmax_slice, Allocation};

/// Grid points of the simplex with `resolution` points per edge, for
/// `K = 2` or `K = 3`.
pub fn simplex_grid(k: usize, resolution: usize) -> Result<Vec<Allocation>> {
    if resolution < 2 {
        return Err(Error::invalid(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let n = (resolution - 1) as f64;
    match k {
        2 => Ok((0..resolution)
            .map(|i| {
                let b = i as f64 / n;
                Allocation::normalized(vec![b, 1.0 - b])
            })
            .collect()),
        3 => {
            let mut grid = Vec::with_capacity(resolution * (resolution + 1) / 2);
            for i in 0..resolution {
                for j in 0..resolution - i {
                    let r = resolution - 1 - i - j;
                    grid.push(Allocation::normalized(vec![i as f64 / n, j as f64 / n, r as f64 / n]));
                }
            }
            Ok(grid)
        }
        other => Err(Error::UnsupportedDimension(other)),
    }
}

fn check_dims(rel: &PriceRelativeSeries, pi: &Allocation) -> Result<()> {
    Error::check_dim(rel.num_assets(), pi.len())
}

/// Wealth of rebalancing to `pi` every period, without fees.
pub fn crp_wealth(rel: &PriceRelativeSeries, pi: &Allocation) -> Result<f64> {
    check_dims(rel, pi)?;
    Ok(rel.rows().iter().map(|f| gross_return(pi, f)).product())
}

pub fn crp_allocate(rel: &PriceRelativeSeries, pi: &Allocation) -> Result<Vec<Allocation>> {
    check_dims(rel, pi)?;
    Ok(vec![pi.clone(); rel.len() + 1])
}

/// Never trades: each target is the drifted previous one.
pub fn buy_and_hold_allocate(rel: &PriceRelativeSeries, initial: &Allocation) -> Result<Vec<Allocation>> {
    check_dims(rel, initial)?;
    let mut out = Vec::with_capacity(rel.len() + 1);
    out.push(initial.clone());
    for f in rel.rows() {
        let next = drift_unchecked(out.last().unwrap(), f);
        out.push(next);
    }
    Ok(out)
}

/// Grid argmax of the final CRP wealth. Uses the whole series, so it is a
/// hindsight reference rather than a tradable strategy.
pub fn best_crp_hindsight(rel: &PriceRelativeSeries, resolution: usize) -> Result<(Allocation, f64)> {
    let grid = simplex_grid(rel.num_assets(), resolution)?;
    let mut best: Option<(Allocation, f64)> = None;
    for b in grid {
        let log_wealth: f64 = rel.rows().iter().map(|f| gross_return(&b, f).ln()).sum();
        if best.as_ref().is_none_or(|(_, w)| log_wealth > *w) {
            best = Some((b, log_wealth));
        }
    }
    let (pi, log_wealth) = best.expect("grid is never empty");
    Ok((pi, log_wealth.exp()))
}

/// Exponentiated gradient: `pi_{t+1}(k) ∝ pi_t(k) exp(eta f_t(k) / <pi_t, f_t>)`.
pub fn eg_allocate(rel: &PriceRelativeSeries, eta: f64) -> Result<Vec<Allocation>> {
    check_eta(eta)?;
    let mut pi = Allocation::uniform(rel.num_assets())?;
    let mut out = Vec::with_capacity(rel.len() + 1);
    out.push(pi.clone());
    for f in rel.rows() {
        check_relatives(f)?;
        let gross = gross_return(&pi, f);
        let w: Vec<f64> = pi.iter().zip(f).map(|(p, x)| p * (eta * x / gross).exp()).collect();
        pi = Allocation::normalized(w);
        out.push(pi.clone());
    }
    Ok(out)
}

/// The same update written additively in logit space,
/// `H_{t+1} = H_t + eta f_t / <pi_t, f_t> + c_t`, with `c_t` chosen to keep
/// the logits centred.
pub fn eg_allocate_logits(rel: &PriceRelativeSeries, eta: f64) -> Result<Vec<Allocation>> {
    check_eta(eta)?;
    let k = rel.num_assets();
    let mut h = vec![0.0; k];
    let mut out = Vec::with_capacity(rel.len() + 1);
    out.push(softmax_slice(&h));
    for f in rel.rows() {
        check_relatives(f)?;
        let pi = softmax_slice(&h);
        let gross = gross_return(&pi, f);
        let step: Vec<f64> = f.iter().map(|x| eta * x / gross).collect();
        let c = -step.iter().sum::<f64>() / k as f64;
        h.iter_mut().zip(&step).for_each(|(h, s)| *h += s + c);
        out.push(softmax_slice(&h));
    }
    Ok(out)
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("eta must be positive, got {eta}")))
    }
}

/// Prior over the simplex for the universal portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UpPrior {
    #[default]
    Uniform,
    /// Dirichlet(1/2, ..., 1/2). Its density is infinite on the boundary,
    /// so boundary grid points are weighted as if half a grid cell inside.
    Dirichlet,
}

pub fn prior_weights(grid: &[Allocation], resolution: usize, prior: UpPrior) -> Vec<f64> {
    match prior {
        UpPrior::Uniform => vec![1.0; grid.len()],
        UpPrior::Dirichlet => {
            let floor = 0.5 / (resolution - 1) as f64;
            grid.iter().map(|b| b.iter().map(|x| x.max(floor).powf(-0.5)).product()).collect()
        }
    }
}

pub fn universal_allocate(rel: &PriceRelativeSeries, resolution: usize) -> Result<Vec<Allocation>> {
    universal_allocate_with_prior(rel, resolution, UpPrior::Uniform)
}

/// Cover's universal portfolio on a grid: each target is the average of
/// the grid CRPs weighted by prior times CRP wealth so far. Log-wealths are
/// updated incrementally, one pass over the grid per period.
pub fn universal_allocate_with_prior(
    rel: &PriceRelativeSeries,
    resolution: usize,
    prior: UpPrior,
) -> Result<Vec<Allocation>> {
    let k = rel.num_assets();
    let grid = simplex_grid(k, resolution)?;
    let mut log_w: Vec<f64> = prior_weights(&grid, resolution, prior).iter().map(|w| w.ln()).collect();
    let average = |log_w: &[f64]| {
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = vec![0.0; k];
        for (b, lw) in grid.iter().zip(log_w) {
            let w = (lw - max).exp();
            acc.iter_mut().zip(b.iter()).for_each(|(a, x)| *a += w * x);
        }
        Allocation::normalized(acc)
    };
    let mut out = Vec::with_capacity(rel.len() + 1);
    out.push(average(&log_w));
    for f in rel.rows() {
        check_relatives(f)?;
        for (lw, b) in log_w.iter_mut().zip(&grid) {
            *lw += gross_return(b, f).ln();
        }
        out.push(average(&log_w));
    }
    Ok(out)
}

/// Final wealth of the universal portfolio computed directly as the
/// prior-weighted mean of the grid CRP wealths.
pub fn universal_wealth_by_average(rel: &PriceRelativeSeries, resolution: usize, prior: UpPrior) -> Result<f64> {
    let grid = simplex_grid(rel.num_assets(), resolution)?;
    let weights = prior_weights(&grid, resolution, prior);
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (b, w) in grid.iter().zip(&weights) {
        acc += w * crp_wealth(rel, b)?;
    }
    Ok(acc / total)
}

/// Strategy selector shared by the CLI and the acceptance suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    BuyAndHold { initial: Allocation },
    Crp { weights: Allocation },
    BestCrp { resolution: usize },
    Eg { eta: f64 },
    Universal { resolution: usize, prior: UpPrior },
    Onflow { config: OnflowConfig },
}

impl StrategySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            StrategySpec::BestCrp { resolution } | StrategySpec::Universal { resolution, .. } if *resolution < 2 => {
                Err(Error::invalid(format!("grid resolution must be at least 2, got {resolution}")))
            }
            StrategySpec::Eg { eta } => check_eta(*eta),
            StrategySpec::Onflow { config } => config.validate(),
            _ => Ok(()),
        }
    }

    /// Target allocations `pi_1 .. pi_{T+1}`.
    pub fn allocate(&self, rel: &PriceRelativeSeries) -> Result<Vec<Allocation>> {
        self.validate()?;
        match self {
            StrategySpec::BuyAndHold { initial } => buy_and_hold_allocate(rel, initial),
            StrategySpec::Crp { weights } => crp_allocate(rel, weights),
            StrategySpec::BestCrp { resolution } => {
                let (pi, _) = best_crp_hindsight(rel, *resolution)?;
                crp_allocate(rel, &pi)
            }
            StrategySpec::Eg { eta } => eg_allocate(rel, *eta),
            StrategySpec::Universal { resolution, prior } => universal_allocate_with_prior(rel, *resolution, *prior),
            StrategySpec::Onflow { config } => onflow_allocate(rel, config),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            StrategySpec::BuyAndHold { .. } => "hold",
            StrategySpec::Crp { .. } => "crp",
            StrategySpec::BestCrp { .. } => "bcrp",
            StrategySpec::Eg { .. } => "eg",
            StrategySpec::Universal { .. } => "up",
            StrategySpec::Onflow { .. } => "onflow",
        }
    }
}
