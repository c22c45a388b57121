//! Online portfolio allocation with the Onflow gradient-flow rule.
//!
//! The crate provides the allocation rule itself ([`onflow`]), the usual
//! benchmark strategies ([`baselines`]), fee-aware wealth accounting
//! ([`backtest`]) and a log-normal market laboratory ([`lognormal`]) in
//! which the growth-optimal allocation is known in closed form.

pub mod backtest;
pub mod baselines;
pub mod cost;
pub mod error;
pub mod lognormal;
pub mod market;
pub mod ode;
pub mod onflow;
pub mod simplex;

pub use backtest::{run_backtest, summarize, BacktestResult, Summary};
pub use baselines::{StrategySpec, UpPrior};
pub use cost::FeeSchedule;
pub use error::{Error, Result};
pub use lognormal::MarketModel;
pub use market::{DataFormat, PriceRelativeSeries, PriceSeries};
pub use ode::Method;
pub use onflow::{onflow_allocate, OnflowConfig, OnflowState};
pub use simplex::{softmax, Allocation, LogitVector};
