mod strategy;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use onflow_core::lognormal::{
    continuous_flow_sampled, optimal_allocation, simulate_with_volatility, verify_convergence, DMatrix,
};
use onflow_core::market::{load_relatives, pair_preset, pair_stats, PairStats, PAIR_PRESETS};
use onflow_core::{
    onflow_allocate, run_backtest, Allocation, BacktestResult, DataFormat, FeeSchedule, LogitVector, MarketModel,
    Method, OnflowConfig, PriceRelativeSeries, StrategySpec, Summary,
};
use serde::Serialize;
use serde_json::json;

use strategy::{parse_strategy, Defaults};

#[derive(Debug, Parser)]
#[command(name = "onflow", version, about = "Online portfolio allocation with fee-aware gradient flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Backtest a single strategy.
    Backtest(RunArgs),
    /// Backtest several strategies on the same data and fee.
    Compare(RunArgs),
    /// Correlation and buy-and-hold performance of asset pairs.
    Stats(StatsArgs),
    /// Integrate the continuous flow of a log-normal model and check its limit.
    Converge(ConvergeArgs),
    /// Run Onflow on a simulated log-normal market.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with one column per asset and an optional leading `date` column.
    #[arg(long, default_value = "data/nyse_o.csv")]
    data: PathBuf,
    /// Whether the file holds price relatives or price levels.
    #[arg(long, default_value = "relatives")]
    format: DataFormat,
    /// Built-in asset pair 1-4.
    #[arg(long, conflicts_with = "assets")]
    pair: Option<u8>,
    /// Comma-separated column names.
    #[arg(long, value_delimiter = ',')]
    assets: Vec<String>,
}

impl DataArgs {
    fn selection(&self) -> Result<Option<Vec<String>>> {
        if let Some(n) = self.pair {
            let preset = pair_preset(n)?;
            return Ok(Some(preset.assets.iter().map(|s| s.to_string()).collect()));
        }
        Ok((!self.assets.is_empty()).then(|| self.assets.clone()))
    }

    fn load(&self) -> Result<PriceRelativeSeries> {
        let selected = self.selection()?;
        load_relatives(&self.data, selected.as_deref(), self.format)
            .with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Debug, Args)]
struct FlowArgs {
    /// Proportional fee rate, e.g. 0.02 for 2%.
    #[arg(long, default_value_t = 0.0)]
    fee: f64,
    /// Onflow numerical time per step [default: 0.05 without fees, 1 otherwise].
    #[arg(long)]
    tau: Option<f64>,
    /// Onflow integrator substeps per trading period.
    #[arg(long, default_value_t = 10)]
    substeps: usize,
    #[arg(long, default_value = "rk4")]
    method: Method,
    /// Onflow batch size.
    #[arg(long, default_value_t = 1)]
    batch: usize,
}

impl FlowArgs {
    fn fees(&self) -> Result<FeeSchedule> {
        Ok(FeeSchedule::with_rate(self.fee)?)
    }

    fn tau(&self) -> f64 {
        self.tau.unwrap_or(if self.fee == 0.0 { 0.05 } else { 1.0 })
    }

    fn onflow(&self) -> Result<OnflowConfig> {
        Ok(OnflowConfig::new(self.tau(), self.fees()?)?
            .with_substeps(self.substeps)?
            .with_method(self.method)
            .with_batch(self.batch)?)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flow: FlowArgs,
    /// Exponentiated-gradient learning rate.
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    /// Grid points per simplex edge for the universal and best CRP portfolios.
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    /// NAME[:key=value,...] with NAME one of hold, crp, bcrp, eg, up, onflow. Repeatable.
    #[arg(long = "strategy")]
    strategies: Vec<String>,
    /// Long-format CSV of per-period wealth, turnover and allocations.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Drift vector, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    mu: Vec<f64>,
    /// Covariance matrix, rows separated by `;`, entries by `,`.
    #[arg(long, conflicts_with = "sigma", required_unless_present = "sigma", allow_hyphen_values = true)]
    cov: Option<String>,
    /// Volatility matrix `sigma` with covariance `sigma^T sigma`, same layout as --cov.
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Initial logits, comma separated [default: zeros].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    h0: Vec<f64>,
    #[arg(long, default_value_t = 1000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Record every n-th integration step.
    #[arg(long, default_value_t = 10)]
    every: usize,
    /// Trajectory CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON verdict.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    flow: FlowArgs,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of the path, counted from the end, that is averaged.
    #[arg(long, default_value_t = 0.5)]
    tail: f64,
    /// Allocation path CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

/// A command-line mistake detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 usage or validation, 2 data, 3 numerical divergence.
fn exit_code(err: &anyhow::Error) -> u8 {
    use onflow_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. }
                | E::MalformedRow { .. }
                | E::NonPositiveValue { .. }
                | E::UnknownAsset(_)
                | E::DegenerateData(_)
                | E::LengthMismatch { .. } => 2,
                E::Divergence { .. } | E::Numerical(_) => 3,
                _ => 1,
            };
        }
        if cause.is::<Usage>() {
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Backtest(args) => {
            if args.strategies.len() != 1 {
                bail!(Usage(format!("backtest takes exactly one --strategy, got {}", args.strategies.len())));
            }
            cmd_compare(&args, "backtest")
        }
        Command::Compare(args) => {
            if args.strategies.is_empty() {
                bail!(Usage("compare needs at least one --strategy".into()));
            }
            cmd_compare(&args, "compare")
        }
        Command::Stats(args) => cmd_stats(&args),
        Command::Converge(args) => cmd_converge(&args),
        Command::Simulate(args) => cmd_simulate(&args),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn pi_columns(k: usize) -> impl Iterator<Item = String> {
    (1..=k).map(|i| format!("pi_{i}"))
}

fn cmd_compare(args: &RunArgs, command: &str) -> Result<()> {
    // validate everything before touching the data-heavy part
    let fees = args.flow.fees()?;
    let rel = args.data.load()?;
    let k = rel.num_assets();
    let defaults = Defaults {
        tau: args.flow.tau(),
        eta: args.eta,
        grid: args.grid,
        substeps: args.flow.substeps,
        method: args.flow.method,
        batch: args.flow.batch,
        fees,
    };
    let specs = args
        .strategies
        .iter()
        .map(|s| parse_strategy(s, k, &defaults).map(|spec| (s.clone(), spec)))
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<onflow_core::Result<BacktestResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|(_, spec)| {
                let rel = &rel;
                scope.spawn(move || spec.allocate(rel).and_then(|targets| run_backtest(&targets, rel, &fees)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("strategy thread panicked")).collect()
    });

    if let Some(path) = &args.out {
        let mut w = csv_writer(path)?;
        let mut header = vec!["t".to_string(), "strategy".into(), "wealth".into(), "turnover_cum".into()];
        header.extend(pi_columns(k));
        w.write_record(&header)?;
        for ((label, _), res) in specs.iter().zip(&results) {
            let Ok(res) = res else { continue };
            for (t, (wealth, pi)) in res.wealth.iter().zip(&res.allocations).enumerate() {
                let turnover = if t == 0 { 0.0 } else { res.turnover_cum[t - 1] };
                let mut row = vec![t.to_string(), label.clone(), wealth.to_string(), turnover.to_string()];
                row.extend(pi.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }

    #[derive(Serialize)]
    struct Entry<'a> {
        label: &'a str,
        name: &'static str,
        params: &'a StrategySpec,
        #[serde(flatten)]
        summary: Option<Summary>,
        final_allocation: Option<&'a Allocation>,
        error: Option<String>,
    }
    let entries: Vec<Entry> = specs
        .iter()
        .zip(&results)
        .map(|((label, spec), res)| Entry {
            label,
            name: spec.short_name(),
            params: spec,
            summary: res.as_ref().ok().map(|r| r.summary),
            final_allocation: res.as_ref().ok().and_then(|r| r.allocations.last()),
            error: res.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let summary = json!({
        "command": command,
        "data": args.data.data.display().to_string(),
        "assets": rel.names(),
        "periods": rel.len(),
        "fee": fees.xi,
        "smoothing": fees.a,
        "strategies": entries,
    });
    if let Some(path) = &args.json {
        write_json(path, &summary)?;
    }

    println!("{:<32} {:>14} {:>14} {:>12}", "strategy", "final_wealth", "turnover", "daily");
    for ((label, _), res) in specs.iter().zip(&results) {
        match res {
            Ok(r) => println!(
                "{:<32} {:>14.4} {:>14.4} {:>12.6}",
                label, r.summary.final_wealth, r.summary.total_turnover, r.summary.mean_daily_turnover
            ),
            Err(e) => println!("{label:<32} failed: {e}"),
        }
    }

    if let Some(((label, _), Err(e))) = specs.iter().zip(results).find(|(_, r)| r.is_err()) {
        return Err(anyhow::Error::new(e).context(format!("strategy `{label}` failed")));
    }
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let mut rows: Vec<(String, PairStats)> = vec![];
    if args.data.pair.is_none() && args.data.assets.is_empty() {
        for preset in &PAIR_PRESETS {
            let rel = load_relatives(&args.data.data, Some(&preset.assets), args.data.format)
                .with_context(|| format!("loading {}", args.data.data.display()))?;
            rows.push((preset.number.to_string(), pair_stats(&rel)?));
        }
    } else {
        let label = args.data.pair.map_or("-".to_string(), |n| n.to_string());
        rows.push((label, pair_stats(&args.data.load()?)?));
    }
    println!("{:<5} {:<24} {:>8} {:>12} {:>14}", "pair", "assets", "periods", "correlation", "performances");
    for (label, s) in &rows {
        let perf: Vec<String> = s.performances.iter().map(|p| format!("{p:.2}")).collect();
        println!(
            "{:<5} {:<24} {:>8} {:>12.4} {:>14}",
            label,
            s.assets.join("/"),
            s.periods,
            s.correlation,
            perf.join(" / ")
        );
    }
    if let Some(path) = &args.json {
        let list: Vec<_> = rows.iter().map(|(label, s)| json!({ "pair": label, "stats": s })).collect();
        write_json(path, &list)?;
    }
    Ok(())
}

fn parse_matrix(text: &str, k: usize, what: &str) -> Result<Vec<Vec<f64>>> {
    let rows = text
        .split(';')
        .map(|row| row.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Usage(format!("bad number in {what}: {e}")))?;
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        bail!(Usage(format!("{what} must be {k}x{k} to match --mu")));
    }
    Ok(rows)
}

fn to_dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let k = rows.len();
    DMatrix::from_fn(k, k, |i, j| rows[i][j])
}

impl ModelArgs {
    /// Validated model; fails before any computation if the covariance is
    /// not positive definite.
    fn model(&self) -> Result<MarketModel> {
        let k = self.mu.len();
        Ok(match (&self.cov, &self.sigma) {
            (Some(cov), _) => {
                MarketModel::from_covariance(self.mu.clone(), to_dmatrix(&parse_matrix(cov, k, "--cov")?))?
            }
            (None, Some(sigma)) => MarketModel::new(self.mu.clone(), to_dmatrix(&parse_matrix(sigma, k, "--sigma")?))?,
            (None, None) => return Err(anyhow!(Usage("one of --cov or --sigma is required".into()))),
        })
    }

    fn volatility(&self) -> Result<DMatrix<f64>> {
        match &self.sigma {
            Some(sigma) => Ok(to_dmatrix(&parse_matrix(sigma, self.mu.len(), "--sigma")?)),
            None => Ok(self.model()?.volatility().clone()),
        }
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cmd_converge(args: &ConvergeArgs) -> Result<()> {
    let model = args.model.model()?;
    let k = model.num_assets();
    let h0 = if args.h0.is_empty() { vec![0.0; k] } else { args.h0.clone() };
    if h0.len() != k {
        bail!(Usage(format!("--h0 has {} entries, --mu has {k}", h0.len())));
    }
    let optimum = optimal_allocation(&model)?;
    let traj = continuous_flow_sampled(&model, &LogitVector::new(h0.clone())?, args.horizon, args.dt, args.every)?;
    let report = verify_convergence(&traj, &model)?;

    if let Some(path) = &args.out {
        let mut w = csv_writer(path)?;
        let mut header = vec!["t".to_string()];
        header.extend(pi_columns(k));
        header.extend(["reward".to_string(), "dist_to_opt".to_string()]);
        w.write_record(&header)?;
        for ((t, p), r) in traj.times.iter().zip(&traj.points).zip(&traj.rewards) {
            let mut row = vec![t.to_string()];
            row.extend(p.iter().map(f64::to_string));
            row.push(r.to_string());
            row.push(linf(p, &optimum).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    // supports are reported 1-based to match the pi_k columns
    let support: Vec<usize> = report.nearest_support.iter().map(|i| i + 1).collect();
    let verdict = json!({
        "command": "converge",
        "mu": model.mu(),
        "covariance": matrix_rows(model.covariance()),
        "h0": h0,
        "horizon": args.horizon,
        "dt": args.dt,
        "terminal_support": support,
        "report": report,
    });
    if let Some(path) = &args.json {
        write_json(path, &verdict)?;
    }
    println!(
        "status: {:?}, terminal {:?}, optimum {:?}, distance {:.3e}, monotone reward: {}",
        report.status,
        report.terminal,
        optimum.weights(),
        report.distance_to_optimal,
        report.monotone_reward
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    if !(args.tail > 0.0 && args.tail <= 1.0) {
        bail!(Usage(format!("--tail must lie in (0, 1], got {}", args.tail)));
    }
    let config = args.flow.onflow()?;
    let sigma = args.model.volatility()?;
    // a singular covariance still simulates, it just has no unique optimum
    let optimum = match args.model.model() {
        Ok(model) => Some(optimal_allocation(&model)?),
        Err(_) if args.model.cov.is_none() => None,
        Err(e) => return Err(e),
    };
    let rel = simulate_with_volatility(&args.model.mu, &sigma, args.steps, args.dt, args.seed)?;
    let path = onflow_allocate(&rel, &config)?;
    let k = rel.num_assets();
    let start = path.len() - ((path.len() as f64 * args.tail).ceil() as usize).max(1);
    let tail = &path[start..];
    let average: Vec<f64> = (0..k).map(|i| tail.iter().map(|p| p[i]).sum::<f64>() / tail.len() as f64).collect();
    let distance = optimum.as_ref().map(|o| linf(&average, o));

    if let Some(out) = &args.out {
        let mut w = csv_writer(out)?;
        let mut header = vec!["t".to_string()];
        header.extend(pi_columns(k));
        w.write_record(&header)?;
        for (t, pi) in path.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(pi.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let summary = json!({
        "command": "simulate",
        "mu": args.model.mu,
        "sigma": matrix_rows(&sigma),
        "steps": args.steps,
        "dt": args.dt,
        "seed": args.seed,
        "onflow": config,
        "tail_fraction": args.tail,
        "tail_average": average,
        "optimum": optimum,
        "distance_to_optimum": distance,
    });
    if let Some(p) = &args.json {
        write_json(p, &summary)?;
    }
    println!("tail average {average:?}, optimum {:?}", optimum.as_ref().map(|o| o.weights()));
    Ok(())
}
