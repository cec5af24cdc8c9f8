//! The `collateral` command-line interface.
//!
//! Every subcommand writes into `<out>/<subcommand>/<label>/`, including a
//! `manifest.json` with all parameters. Data errors exit with status 1 and a
//! one-line JSON object on stderr; usage errors exit with status 2.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::backtest::{compare_portfolios, optimize, rolling_optimal, CapSpec, ComparisonEntry, Objective, RollingSpec};
use crate::error::{Error, Result};
use crate::ledger::{build_collateral_series, historical_portfolio, load_events, load_pip_updates, Category, CategoryScheme};
use crate::market_data::{estimate_risk_model, log_returns_by_index, PriceHistory, ReturnMatrix};
use crate::portfolio_opt::{efficient_frontier, min_semivariance_with, token_stats, FrontierEntry, Portfolio, SemivarianceMethod};
use crate::risk_sim::{annualized_metrics, simulate_gbm, simulate_historical, GbmSource, SimConfig, SimMode};
use crate::universe::{filter_universe, UniverseConfig, UniverseFilter, DEFAULT_CAP};

/// Directory holding `prices.csv`, `universe.toml`, `events.csv`,
/// `pip_updates.csv` and `portfolio.csv` when the matching flag is omitted.
pub const DATA_DIR_ENV: &str = "COLLATERAL_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "collateral", version, about = "Stablecoin collateral optimization and failure-risk simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimum-variance or minimum-semivariance portfolio over one window.
    Optimize(OptimizeArgs),
    /// Efficient frontier under the caps.
    Frontier(FrontierArgs),
    /// Failure probability of a portfolio by historical or GBM simulation.
    Simulate(SimulateArgs),
    /// Re-optimized portfolio for every date of a rolling window.
    Rolling(RollingArgs),
    /// Replay vault events into daily collateral by category.
    Ledger(LedgerArgs),
    /// Risk metrics and failure probabilities for several portfolios.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
struct OutputArgs {
    /// Root output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run directory name under `<out>/<subcommand>/`.
    #[arg(long, default_value = "latest")]
    label: String,
}

#[derive(Debug, Args, Serialize)]
struct UniverseArgs {
    /// Token universe TOML (symbols, caps, metadata).
    #[arg(long)]
    universe: Option<PathBuf>,
    /// Comma-separated symbols; overrides the universe file.
    #[arg(long, value_delimiter = ',')]
    symbols: Vec<String>,
    /// Cap applied to every token, overriding the universe file.
    #[arg(long)]
    caps: Option<f64>,
    /// Apply the rank, age and stablecoin filter to the universe file.
    #[arg(long)]
    filter: bool,
    #[arg(long, default_value_t = 100)]
    max_rank: u32,
    #[arg(long, default_value_t = 3.0)]
    min_age_years: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ObjectiveArg {
    Variance,
    Semivariance,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Variance => Objective::Variance,
            ObjectiveArg::Semivariance => Objective::Semivariance,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Scenario,
    Semicovariance,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Historical,
    Gbm,
}

#[derive(Debug, Args, Serialize)]
struct OptimizeArgs {
    /// Daily close prices, `date,symbol,price_usd`.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[command(flatten)]
    universe: UniverseArgs,
    /// Estimation window in days.
    #[arg(long, default_value_t = 200)]
    window: usize,
    /// Last day of the window; defaults to the latest date every token has.
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Semivariance)]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Scenario)]
    semivariance_method: MethodArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct FrontierArgs {
    #[arg(long)]
    prices: Option<PathBuf>,
    #[command(flatten)]
    universe: UniverseArgs,
    #[arg(long, default_value_t = 200)]
    window: usize,
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Annual risk-free rate for Sharpe ratios.
    #[arg(long, default_value_t = 0.0)]
    risk_free: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct SimArgs {
    /// Initial overcollateralization ratio.
    #[arg(long, default_value_t = crate::risk_sim::DEFAULT_GAMMA)]
    gamma: f64,
    /// Required overcollateralization ratio.
    #[arg(long, default_value_t = crate::risk_sim::DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = crate::risk_sim::DEFAULT_RUNS)]
    runs: usize,
    /// Simulated days.
    #[arg(long, default_value_t = crate::risk_sim::DEFAULT_HORIZON_DAYS)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Days of history each GBM run estimates drift and covariance from.
    #[arg(long, default_value_t = crate::risk_sim::DEFAULT_ESTIMATION_WINDOW_DAYS)]
    estimation_window: usize,
    /// First day of price history used.
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last day of price history used.
    #[arg(long)]
    end: Option<NaiveDate>,
}

impl SimArgs {
    fn config(&self, mode: SimMode) -> SimConfig {
        SimConfig {
            gamma: self.gamma,
            theta: self.theta,
            horizon_days: self.horizon,
            n_runs: self.runs,
            seed: self.seed,
            mode,
            estimation_window_days: self.estimation_window,
        }
    }

    fn range(&self, history: &PriceHistory, symbols: &[String]) -> Result<Option<(NaiveDate, NaiveDate)>> {
        date_range(self.start, self.end, history, symbols)
    }
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Portfolio CSV, `symbol,weight,cap`.
    #[arg(long)]
    portfolio: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Historical)]
    mode: ModeArg,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct RollingArgs {
    #[arg(long)]
    prices: Option<PathBuf>,
    #[command(flatten)]
    universe: UniverseArgs,
    #[arg(long, default_value_t = 200)]
    window: usize,
    /// Days between evaluation dates.
    #[arg(long, default_value_t = 1)]
    step: usize,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Semivariance)]
    objective: ObjectiveArg,
    /// First evaluation date.
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last evaluation date.
    #[arg(long)]
    end: Option<NaiveDate>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct LedgerArgs {
    /// Vault events CSV.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Pip valuation updates CSV for RWA and LP vault types.
    #[arg(long)]
    pips: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Universe TOML; tokens marked `btc_variant` are grouped with BTC.
    #[arg(long)]
    universe: Option<PathBuf>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Tokens kept in the average historical portfolio.
    #[arg(long, default_value_t = 6)]
    top_k: usize,
    /// LP collateral below this share of the total is folded into minor ERC-20.
    #[arg(long, default_value_t = 0.01)]
    lp_threshold: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Named portfolio CSV as `NAME=PATH`; repeat for each portfolio.
    #[arg(long = "portfolio", value_parser = parse_named_path, required = true)]
    portfolios: Vec<(String, PathBuf)>,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got `{s}`")),
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Optimize(a) => run_optimize(a),
        Command::Frontier(a) => run_frontier(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Rolling(a) => run_rolling(a),
        Command::Ledger(a) => run_ledger(a),
        Command::Compare(a) => run_compare(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            1
        }
    }
}

fn data_path(explicit: &Option<PathBuf>, file: &str, flag: &str) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => Ok(Path::new(&dir).join(file)),
        None => Err(Error::Config(format!("--{flag} not given and {DATA_DIR_ENV} is unset"))),
    }
}

/// Like [`data_path`], but a missing default file means "not provided".
fn optional_data_path(explicit: &Option<PathBuf>, file: &str) -> Option<PathBuf> {
    explicit.clone().or_else(|| {
        let p = Path::new(&std::env::var_os(DATA_DIR_ENV)?).join(file);
        p.exists().then_some(p)
    })
}

fn run_dir(output: &OutputArgs, subcommand: &str) -> Result<PathBuf> {
    if output.label.is_empty() || output.label.contains(['/', '\\']) || output.label == ".." {
        return Err(Error::Config(format!("invalid label `{}`", output.label)));
    }
    let dir = output.out.join(subcommand).join(&output.label);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish_csv(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    seed: Option<u64>,
    parameters: &'a P,
    inputs: BTreeMap<&'static str, PathBuf>,
}

fn write_manifest<P: Serialize>(
    dir: &Path,
    subcommand: &'static str,
    parameters: &P,
    seed: Option<u64>,
    inputs: BTreeMap<&'static str, PathBuf>,
) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            tool: "collateral",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            parameters,
            inputs,
        },
    )
}

fn load_history(explicit: &Option<PathBuf>) -> Result<(PathBuf, PriceHistory)> {
    let path = data_path(explicit, "prices.csv", "prices")?;
    let history = PriceHistory::from_path(&path)?;
    Ok((path, history))
}

struct Selection {
    symbols: Vec<String>,
    caps: CapSpec,
    universe_path: Option<PathBuf>,
}

fn select_universe(args: &UniverseArgs, history: &PriceHistory, as_of: Option<NaiveDate>) -> Result<Selection> {
    let universe_path = optional_data_path(&args.universe, "universe.toml");
    let config = universe_path.as_ref().map(UniverseConfig::from_path).transpose()?;
    let symbols = if !args.symbols.is_empty() {
        args.symbols.clone()
    } else if let Some(config) = &config {
        if args.filter {
            let filter = UniverseFilter::new(args.max_rank, args.min_age_years, true)?;
            let as_of = as_of
                .or_else(|| history.span(&config.symbols()).map(|s| s.1))
                .ok_or_else(|| Error::Coverage("no prices for the universe".into()))?;
            filter_universe(&config.tokens, &filter, as_of)
        } else {
            config.symbols()
        }
    } else {
        history.symbols()
    };
    if symbols.is_empty() {
        return Err(Error::EmptyUniverse("no tokens selected".into()));
    }
    let caps = match (args.caps, &config) {
        (Some(cap), _) => CapSpec::uniform(cap),
        (None, Some(config)) => CapSpec {
            default: config.default_cap,
            per_symbol: config.tokens.iter().map(|t| (t.symbol.clone(), t.cap)).collect(),
        },
        (None, None) => CapSpec::uniform(DEFAULT_CAP),
    };
    Ok(Selection {
        symbols,
        caps,
        universe_path,
    })
}

fn date_range(
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
    history: &PriceHistory,
    symbols: &[String],
) -> Result<Option<(NaiveDate, NaiveDate)>> {
    if start.is_none() && end.is_none() {
        return Ok(None);
    }
    let span = history
        .span(symbols)
        .ok_or_else(|| Error::Coverage(format!("no price data for {}", symbols.join(", "))))?;
    Ok(Some((start.unwrap_or(span.0), end.unwrap_or(span.1))))
}

/// Latest date on which every symbol has a price history.
fn common_end(history: &PriceHistory, symbols: &[String]) -> Result<NaiveDate> {
    symbols
        .iter()
        .map(|s| {
            history
                .series(s)
                .and_then(|series| series.keys().next_back().copied())
                .ok_or_else(|| Error::Coverage(format!("{s}: no price data")))
        })
        .collect::<Result<Vec<_>>>()
        .map(|ends| ends.into_iter().min().expect("symbols non-empty"))
}

/// Returns over the `window` days ending at `end`.
fn window_returns(history: &PriceHistory, symbols: &[String], window: usize, end: Option<NaiveDate>) -> Result<ReturnMatrix> {
    if window < 2 {
        return Err(Error::Config(format!("window must be at least 2 days, got {window}")));
    }
    let end = match end {
        Some(d) => d,
        None => common_end(history, symbols)?,
    };
    let start = end
        .checked_sub_days(Days::new(window as u64))
        .ok_or_else(|| Error::Domain(format!("window start before {end} out of range")))?;
    let table = history.align(symbols, Some((start, end)))?;
    log_returns_by_index(&table, 0, table.n_dates() - 1)
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    objective: Objective,
    window_start: NaiveDate,
    window_end: NaiveDate,
    n_returns: usize,
    symbols: &'a [String],
    weights: &'a [f64],
    caps: &'a [f64],
    solver: &'a crate::portfolio_opt::SolverReport,
    annual_volatility: f64,
    annual_semideviation: f64,
}

fn run_optimize(args: &OptimizeArgs) -> Result<String> {
    let (prices_path, history) = load_history(&args.prices)?;
    let selection = select_universe(&args.universe, &history, args.end)?;
    let returns = window_returns(&history, &selection.symbols, args.window, args.end)?;
    let caps = selection.caps.for_symbols(&selection.symbols);
    let objective = Objective::from(args.objective);
    let solution = match (objective, args.semivariance_method) {
        (Objective::Semivariance, MethodArg::Semicovariance) => {
            min_semivariance_with(&returns, &caps, SemivarianceMethod::Semicovariance)?
        }
        _ => optimize(&returns, &caps, objective)?,
    };
    let portfolio = &solution.portfolio;
    let metrics = annualized_metrics(portfolio.weights(), &returns)?;
    let dir = run_dir(&args.output, "optimize")?;
    let weights_path = dir.join("weights.csv");
    portfolio.write_csv(File::create(&weights_path).map_err(|e| Error::io(&weights_path, e))?)?;
    let (window_start, window_end) = returns.window();
    write_json(
        &dir.join("report.json"),
        &OptimizeReport {
            objective,
            window_start,
            window_end,
            n_returns: returns.n_obs(),
            symbols: portfolio.symbols(),
            weights: portfolio.weights(),
            caps: portfolio.caps(),
            solver: &solution.report,
            annual_volatility: metrics.volatility,
            annual_semideviation: metrics.semideviation,
        },
    )?;
    write_manifest(&dir, "optimize", args, None, inputs([("prices", Some(prices_path)), ("universe", selection.universe_path)]))?;
    Ok(format!(
        "optimize: {objective} over {} tokens, {window_start}..={window_end}, annual volatility {:.4}, semideviation {:.4} -> {}",
        portfolio.symbols().len(),
        metrics.volatility,
        metrics.semideviation,
        dir.display()
    ))
}

fn inputs<const N: usize>(items: [(&'static str, Option<PathBuf>); N]) -> BTreeMap<&'static str, PathBuf> {
    items.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
}

fn opt_to_string(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct FrontierReport<'a> {
    symbols: &'a [String],
    risk_free: f64,
    window_start: NaiveDate,
    window_end: NaiveDate,
    psd_repaired: bool,
    entries: &'a [FrontierEntry],
}

fn run_frontier(args: &FrontierArgs) -> Result<String> {
    let (prices_path, history) = load_history(&args.prices)?;
    let selection = select_universe(&args.universe, &history, args.end)?;
    let returns = window_returns(&history, &selection.symbols, args.window, args.end)?;
    let model = estimate_risk_model(&returns)?;
    let caps = selection.caps.for_symbols(&selection.symbols);
    let entries = efficient_frontier(&model, &caps, args.points, args.risk_free)?;
    let dir = run_dir(&args.output, "frontier")?;

    let path = dir.join("frontier.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["status".to_string(), "target_return".into(), "volatility".into(), "sharpe".into()];
    header.extend(selection.symbols.iter().cloned());
    w.write_record(&header)?;
    for entry in &entries {
        let mut row = match entry {
            FrontierEntry::Point(p) => vec![
                "point".to_string(),
                p.target_return.to_string(),
                p.volatility.to_string(),
                opt_to_string(p.sharpe),
            ],
            FrontierEntry::Infeasible { target_return } => {
                vec!["infeasible".to_string(), target_return.to_string(), String::new(), String::new()]
            }
        };
        match entry.point() {
            Some(p) => row.extend(p.weights.iter().map(|x| x.to_string())),
            None => row.extend(selection.symbols.iter().map(|_| String::new())),
        }
        w.write_record(&row)?;
    }
    finish_csv(w, &path)?;

    let path = dir.join("token_stats.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["symbol", "annual_return", "annual_volatility", "sharpe"])?;
    for s in token_stats(&model, args.risk_free) {
        w.write_record([s.symbol, s.annual_return.to_string(), s.annual_volatility.to_string(), opt_to_string(s.sharpe)])?;
    }
    finish_csv(w, &path)?;

    let (window_start, window_end) = returns.window();
    write_json(
        &dir.join("frontier.json"),
        &FrontierReport {
            symbols: &selection.symbols,
            risk_free: args.risk_free,
            window_start,
            window_end,
            psd_repaired: model.psd_repaired,
            entries: &entries,
        },
    )?;
    write_manifest(&dir, "frontier", args, None, inputs([("prices", Some(prices_path)), ("universe", selection.universe_path)]))?;
    let feasible = entries.iter().filter(|e| e.point().is_some()).count();
    Ok(format!(
        "frontier: {feasible} of {} points over {} tokens -> {}",
        entries.len(),
        selection.symbols.len(),
        dir.display()
    ))
}

fn run_simulate(args: &SimulateArgs) -> Result<String> {
    let (prices_path, history) = load_history(&args.prices)?;
    let portfolio_path = data_path(&args.portfolio, "portfolio.csv", "portfolio")?;
    let portfolio = Portfolio::from_csv_path(&portfolio_path)?;
    let range = args.sim.range(&history, portfolio.symbols())?;
    let table = history.align(portfolio.symbols(), range)?;
    let report = match args.mode {
        ModeArg::Historical => simulate_historical(&portfolio, &table, &args.sim.config(SimMode::Historical))?,
        ModeArg::Gbm => simulate_gbm(&portfolio, GbmSource::Sampled(&table), &args.sim.config(SimMode::Gbm))?,
    };
    let dir = run_dir(&args.output, "simulate")?;
    write_json(&dir.join("report.json"), &report)?;
    write_manifest(
        &dir,
        "simulate",
        args,
        Some(args.sim.seed),
        inputs([("prices", Some(prices_path)), ("portfolio", Some(portfolio_path))]),
    )?;
    Ok(format!(
        "simulate: {} failure probability {:.4} (se {:.4}) over {} runs of {} days -> {}",
        report.mode,
        report.failure_probability,
        report.stderr,
        report.n_runs,
        report.horizon_days,
        dir.display()
    ))
}

#[derive(Serialize)]
struct RollingReport<'a> {
    spec: &'a RollingSpec,
    n_dates: usize,
    n_errors: usize,
    n_exclusions: usize,
}

fn run_rolling(args: &RollingArgs) -> Result<String> {
    let (prices_path, history) = load_history(&args.prices)?;
    let selection = select_universe(&args.universe, &history, args.end)?;
    let spec = RollingSpec {
        window_days: args.window,
        step_days: args.step,
        objective: args.objective.into(),
        caps: selection.caps,
        universe: selection.symbols,
    };
    let range = date_range(args.start, args.end, &history, &spec.universe)?;
    let points = rolling_optimal(&history, &spec, range)?;
    let dir = run_dir(&args.output, "rolling")?;

    let path = dir.join("weights.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["date".to_string(), "status".to_string()];
    header.extend(spec.universe.iter().cloned());
    w.write_record(&header)?;
    for p in &points {
        let mut row = vec![p.date.to_string(), p.error.as_ref().map_or("ok", |e| e.kind).to_string()];
        row.extend(spec.universe.iter().map(|s| {
            if p.error.is_some() {
                String::new()
            } else {
                p.weight_of(s).to_string()
            }
        }));
        w.write_record(&row)?;
    }
    finish_csv(w, &path)?;

    let path = dir.join("exclusions.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["date", "symbol"])?;
    let mut n_exclusions = 0;
    for p in &points {
        for s in &p.excluded {
            w.write_record([p.date.to_string(), s.clone()])?;
            n_exclusions += 1;
        }
    }
    finish_csv(w, &path)?;

    let path = dir.join("errors.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["date", "kind", "message"])?;
    let mut n_errors = 0;
    for p in &points {
        if let Some(e) = &p.error {
            w.write_record([p.date.to_string(), e.kind.to_string(), e.message.clone()])?;
            n_errors += 1;
        }
    }
    finish_csv(w, &path)?;

    write_json(
        &dir.join("report.json"),
        &RollingReport {
            spec: &spec,
            n_dates: points.len(),
            n_errors,
            n_exclusions,
        },
    )?;
    write_manifest(&dir, "rolling", args, None, inputs([("prices", Some(prices_path)), ("universe", selection.universe_path)]))?;
    Ok(format!(
        "rolling: {} dates, {}-day {} window, {n_errors} failed dates, {n_exclusions} exclusions -> {}",
        points.len(),
        spec.window_days,
        spec.objective,
        dir.display()
    ))
}

#[derive(Serialize)]
struct LedgerReport<'a> {
    n_events: usize,
    dropped_zero_rows: &'a [u64],
    unknown_vault_types: Vec<&'a String>,
    first_date: Option<NaiveDate>,
    last_date: Option<NaiveDate>,
    lp_folded: bool,
    closure_error: f64,
    historical_portfolio: Option<&'a crate::ledger::HistoricalPortfolio>,
    historical_portfolio_error: Option<String>,
}

fn run_ledger(args: &LedgerArgs) -> Result<String> {
    let events_path = data_path(&args.events, "events.csv", "events")?;
    let log = load_events(&events_path)?;
    for line in &log.dropped_zero_rows {
        eprintln!("warning: {}:{line}: zero delta, row dropped", events_path.display());
    }
    for v in &log.unknown_vault_types {
        eprintln!("warning: vault type {v} is not in the registry");
    }
    let pips_path = optional_data_path(&args.pips, "pip_updates.csv");
    let pips = pips_path.as_ref().map(load_pip_updates).transpose()?.unwrap_or_default();
    let (prices_path, history) = load_history(&args.prices)?;
    let universe_path = optional_data_path(&args.universe, "universe.toml");
    let mut scheme = CategoryScheme {
        lp_visibility_threshold: args.lp_threshold,
        ..CategoryScheme::default()
    };
    if let Some(path) = &universe_path {
        let config = UniverseConfig::from_path(path)?;
        scheme
            .btc_symbols
            .extend(config.tokens.iter().filter(|t| t.btc_variant).map(|t| t.symbol.clone()));
    }
    let range = match (args.start, args.end) {
        (None, None) => None,
        (start, end) => {
            let first = log.events.iter().map(|e| e.timestamp.date_naive()).min();
            let last = log.events.iter().map(|e| e.timestamp.date_naive()).max();
            match (start.or(first), end.or(last)) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            }
        }
    };
    let series = build_collateral_series(&log.events, &history, &pips, &scheme, range)?;
    let portfolio = historical_portfolio(&series, None, args.top_k);
    let dir = run_dir(&args.output, "ledger")?;

    let path = dir.join("collateral_series.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["date"];
    header.extend(Category::ALL.iter().map(|c| c.name()));
    header.push("total");
    w.write_record(&header)?;
    for (t, d) in series.dates.iter().enumerate() {
        let mut row = vec![d.to_string()];
        row.extend(Category::ALL.iter().map(|c| series.category(*c)[t].to_string()));
        row.push(series.total[t].to_string());
        w.write_record(&row)?;
    }
    finish_csv(w, &path)?;

    let path = dir.join("vault_balances.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["date", "vault_type", "token_symbol", "category", "balance_tokens", "value_usd"])?;
    for (t, d) in series.dates.iter().enumerate() {
        for v in &series.vaults {
            w.write_record([
                d.to_string(),
                v.vault_type.clone(),
                v.token_symbol.clone(),
                v.category.name().to_string(),
                v.balances[t].to_string(),
                v.usd[t].to_string(),
            ])?;
        }
    }
    finish_csv(w, &path)?;

    if let Ok(hp) = &portfolio {
        let path = dir.join("historical_portfolio.csv");
        hp.to_portfolio()?
            .write_csv(File::create(&path).map_err(|e| Error::io(&path, e))?)?;
    }
    write_json(
        &dir.join("report.json"),
        &LedgerReport {
            n_events: log.events.len(),
            dropped_zero_rows: &log.dropped_zero_rows,
            unknown_vault_types: log.unknown_vault_types.iter().collect(),
            first_date: series.dates.first().copied(),
            last_date: series.dates.last().copied(),
            lp_folded: series.lp_folded,
            closure_error: series.closure_error(),
            historical_portfolio: portfolio.as_ref().ok(),
            historical_portfolio_error: portfolio.as_ref().err().map(|e| e.to_string()),
        },
    )?;
    write_manifest(
        &dir,
        "ledger",
        args,
        None,
        inputs([
            ("events", Some(events_path)),
            ("pips", pips_path),
            ("prices", Some(prices_path)),
            ("universe", universe_path),
        ]),
    )?;
    Ok(format!(
        "ledger: {} events, {} vault types, {} days -> {}",
        log.events.len(),
        series.vaults.len(),
        series.dates.len(),
        dir.display()
    ))
}

fn run_compare(args: &CompareArgs) -> Result<String> {
    let (prices_path, history) = load_history(&args.prices)?;
    let mut portfolios = Vec::with_capacity(args.portfolios.len());
    for (name, path) in &args.portfolios {
        if portfolios.iter().any(|(n, _): &(String, Portfolio)| n == name) {
            return Err(Error::Config(format!("duplicate portfolio name {name}")));
        }
        portfolios.push((name.clone(), Portfolio::from_csv_path(path)?));
    }
    let all_symbols: Vec<String> = {
        let mut s: Vec<String> = portfolios.iter().flat_map(|(_, p)| p.symbols().to_vec()).collect();
        s.sort();
        s.dedup();
        s
    };
    let range = args.sim.range(&history, &all_symbols)?;
    let entries = compare_portfolios(&portfolios, &history, &args.sim.config(SimMode::Historical), range)?;
    let dir = run_dir(&args.output, "compare")?;

    let path = dir.join("comparison.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "portfolio_name",
        "status",
        "annual_volatility",
        "annual_semideviation",
        "historical_failure_prob",
        "gbm_failure_prob",
        "error",
    ])?;
    for e in &entries {
        match e {
            ComparisonEntry::Ok(r) => w.write_record([
                r.portfolio_name.clone(),
                "ok".into(),
                r.annual_volatility.to_string(),
                r.annual_semideviation.to_string(),
                r.historical_failure_prob.to_string(),
                r.gbm_failure_prob.to_string(),
                String::new(),
            ])?,
            ComparisonEntry::Error {
                portfolio_name,
                kind,
                message,
            } => w.write_record([
                portfolio_name.clone(),
                kind.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                message.clone(),
            ])?,
        }
    }
    finish_csv(w, &path)?;
    write_json(&dir.join("comparison.json"), &entries)?;

    let mut input_paths = inputs([("prices", Some(prices_path))]);
    input_paths.insert("portfolios", PathBuf::from(format!("{} files", args.portfolios.len())));
    write_manifest(&dir, "compare", args, Some(args.sim.seed), input_paths)?;
    let failed = entries.iter().filter(|e| e.row().is_none()).count();
    Ok(format!(
        "compare: {} portfolios ({failed} failed), {} runs each -> {}",
        entries.len(),
        args.sim.runs,
        dir.display()
    ))
}
