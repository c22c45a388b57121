//! Parsing of `--strategy NAME[:key=value,...]` arguments.

use anyhow::{anyhow, bail, Context, Result};
use onflow_core::{Allocation, FeeSchedule, Method, OnflowConfig, StrategySpec, UpPrior};

/// Values used for keys a strategy argument leaves out.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub tau: f64,
    pub eta: f64,
    pub grid: usize,
    pub substeps: usize,
    pub method: Method,
    pub batch: usize,
    pub fees: FeeSchedule,
}

struct Params<'a> {
    name: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Params<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let pairs = rest
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| anyhow!("expected key=value in strategy `{text}`, got `{kv}`"))
            })
            .collect::<Result<_>>()?;
        Ok(Params { name: name.trim(), pairs })
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !allowed.contains(k) {
                bail!("unknown key `{k}` for strategy `{}` (allowed: {})", self.name, allowed.join(", "));
            }
        }
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.pairs.iter().rev().find(|(k, _)| *k == key) {
            None => Ok(default),
            Some((_, v)) => {
                v.parse().map_err(|e| anyhow!("bad value `{v}` for `{key}` in strategy `{}`: {e}", self.name))
            }
        }
    }

    fn weights(&self, k: usize) -> Result<Allocation> {
        match self.pairs.iter().rev().find(|(key, _)| *key == "w") {
            None => Ok(Allocation::uniform(k)?),
            Some((_, v)) => {
                let w = v
                    .split('/')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .with_context(|| format!("weights `{v}` must be numbers separated by `/`"))?;
                Ok(Allocation::new(w)?)
            }
        }
    }
}

/// Turns one strategy argument into a [`StrategySpec`] for `k` assets.
pub fn parse_strategy(text: &str, k: usize, defaults: &Defaults) -> Result<StrategySpec> {
    let p = Params::parse(text)?;
    let spec = match p.name.to_ascii_lowercase().as_str() {
        "hold" | "buy-and-hold" => {
            p.check_keys(&["w"])?;
            StrategySpec::BuyAndHold { initial: p.weights(k)? }
        }
        "crp" => {
            p.check_keys(&["w"])?;
            StrategySpec::Crp { weights: p.weights(k)? }
        }
        "bcrp" | "best-crp" => {
            p.check_keys(&["grid"])?;
            StrategySpec::BestCrp { resolution: p.get("grid", defaults.grid)? }
        }
        "eg" => {
            p.check_keys(&["eta"])?;
            StrategySpec::Eg { eta: p.get("eta", defaults.eta)? }
        }
        "up" | "universal" => {
            p.check_keys(&["grid", "prior"])?;
            let prior = match p.get("prior", "uniform".to_string())?.as_str() {
                "uniform" => UpPrior::Uniform,
                "dirichlet" => UpPrior::Dirichlet,
                other => bail!("unknown prior `{other}` (expected uniform or dirichlet)"),
            };
            StrategySpec::Universal { resolution: p.get("grid", defaults.grid)?, prior }
        }
        "onflow" => {
            p.check_keys(&["tau", "substeps", "method", "batch", "a"])?;
            let fees = FeeSchedule::new(defaults.fees.xi, p.get("a", defaults.fees.a)?)?;
            let config = OnflowConfig::new(p.get("tau", defaults.tau)?, fees)?
                .with_substeps(p.get("substeps", defaults.substeps)?)?
                .with_method(p.get("method", defaults.method)?)
                .with_batch(p.get("batch", defaults.batch)?)?;
            StrategySpec::Onflow { config }
        }
        other => bail!("unknown strategy `{other}` (expected hold, crp, bcrp, eg, up or onflow)"),
    };
    spec.validate()?;
    Ok(spec)
}
