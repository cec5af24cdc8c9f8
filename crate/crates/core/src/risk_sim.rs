//! Failure-probability simulation for a collateral portfolio.
//!
//! With token counts held fixed, the collateral value relative to its start
//! is `v(t)/v(0) = Σ a_i p_i(t)/p_i(0)`. The stablecoin survives a day when
//! that ratio stays at or above `θ/γ`. A run fails on the first day it drops
//! below.
//!
//! Every run draws from its own ChaCha stream keyed by `(seed, run index)`,
//! so results do not depend on how runs are scheduled across threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{
    estimate_risk_model, log_returns_by_index, sample_window_start, PriceTable, ReturnMatrix, RiskModel,
    DAYS_PER_YEAR, PSD_TOLERANCE,
};
use crate::portfolio_opt::Portfolio;

pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_THETA: f64 = 1.5;
pub const DEFAULT_RUNS: usize = 10_000;
pub const DEFAULT_HORIZON_DAYS: usize = 365;
pub const DEFAULT_ESTIMATION_WINDOW_DAYS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Replay randomly sampled windows of realized prices.
    Historical,
    /// Correlated geometric Brownian motion.
    Gbm,
}

impl std::fmt::Display for SimMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimMode::Historical => "historical",
            SimMode::Gbm => "gbm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Initial overcollateralization ratio.
    pub gamma: f64,
    /// Required overcollateralization ratio.
    pub theta: f64,
    pub horizon_days: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub mode: SimMode,
    /// Length of the history window each GBM run estimates its parameters from.
    pub estimation_window_days: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            theta: DEFAULT_THETA,
            horizon_days: DEFAULT_HORIZON_DAYS,
            n_runs: DEFAULT_RUNS,
            seed: 0,
            mode: SimMode::Historical,
            estimation_window_days: DEFAULT_ESTIMATION_WINDOW_DAYS,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 1.0 && self.gamma > self.theta && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "need gamma > theta > 1, got gamma {} theta {}",
                self.gamma, self.theta
            )));
        }
        if self.horizon_days < 1 {
            return Err(Error::Config("horizon_days must be at least 1".into()));
        }
        if self.n_runs < 1 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.mode == SimMode::Gbm && self.estimation_window_days < 2 {
            return Err(Error::Config("estimation_window_days must be at least 2".into()));
        }
        Ok(())
    }

    /// Survival threshold `θ/γ` on `v(t)/v(0)`.
    pub fn threshold(&self) -> f64 {
        self.theta / self.gamma
    }
}

/// Per-token price multipliers `p_i(t)/p_i(0)` for `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    /// Rows are days, columns tokens. Row 0 is all ones.
    multipliers: DMatrix<f64>,
}

impl PricePath {
    pub fn new(multipliers: DMatrix<f64>) -> Result<Self> {
        if multipliers.nrows() < 1 {
            return Err(Error::Domain("price path needs at least day 0".into()));
        }
        if multipliers.row(0).iter().any(|m| *m != 1.0) {
            return Err(Error::Domain("price path must start at multiplier 1".into()));
        }
        if multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Domain("price multipliers must be positive and finite".into()));
        }
        Ok(Self { multipliers })
    }

    pub fn horizon_days(&self) -> usize {
        self.multipliers.nrows() - 1
    }

    pub fn n_assets(&self) -> usize {
        self.multipliers.ncols()
    }

    pub fn multiplier(&self, day: usize, asset: usize) -> f64 {
        self.multipliers[(day, asset)]
    }

    pub fn multipliers(&self) -> &DMatrix<f64> {
        &self.multipliers
    }
}

/// `v(t)/v(0) = Σ a_i p_i(t)/p_i(0)`.
pub fn portfolio_value_ratio(weights: &[f64], path: &PricePath, t: usize) -> f64 {
    weights.iter().enumerate().map(|(i, a)| a * path.multipliers[(t, i)]).sum()
}

/// True when `ratio` violates the survival condition `ratio ≥ θ/γ`.
pub fn is_failed(ratio: f64, config: &SimConfig) -> bool {
    ratio < config.threshold()
}

/// Summary of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    /// Smallest `v(t)/v(0)` over days `1..=horizon`.
    pub min_ratio: f64,
    /// Variance (divisor `T − 1`) of the portfolio's daily log value changes.
    pub daily_variance: f64,
    /// Semivariance (divisor `T`) of the same series.
    pub daily_semivariance: f64,
}

impl RunOutcome {
    pub fn from_path(weights: &[f64], path: &PricePath) -> Self {
        let h = path.horizon_days();
        let ratios: Vec<f64> = (0..=h).map(|t| portfolio_value_ratio(weights, path, t)).collect();
        let min_ratio = ratios[1..].iter().copied().fold(f64::INFINITY, f64::min);
        let changes: Vec<f64> = ratios.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let (daily_variance, daily_semivariance) = dispersion(&changes);
        Self {
            min_ratio,
            daily_variance,
            daily_semivariance,
        }
    }

    pub fn failed(&self, config: &SimConfig) -> bool {
        is_failed(self.min_ratio, config)
    }
}

/// Sample variance (divisor `n − 1`) and semivariance (divisor `n`).
fn dispersion(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let mut ss = 0.0;
    let mut down = 0.0;
    for x in xs {
        let d = x - mean;
        ss += d * d;
        down += d.min(0.0).powi(2);
    }
    (ss / (n as f64 - 1.0), down / n as f64)
}

/// Outcomes of a full simulation, one per run, in run order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcomes {
    pub mode: SimMode,
    pub runs: Vec<RunOutcome>,
}

impl SimOutcomes {
    /// Failure probability for an arbitrary `(γ, θ)` on these paths.
    pub fn failure_probability(&self, gamma: f64, theta: f64) -> f64 {
        let threshold = theta / gamma;
        let failures = self.runs.iter().filter(|r| r.min_ratio < threshold).count();
        failures as f64 / self.runs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub failure_probability: f64,
    pub stderr: f64,
    pub annual_volatility: f64,
    pub annual_semideviation: f64,
    pub n_runs: usize,
    pub mode: SimMode,
    pub seed: u64,
    pub gamma: f64,
    pub theta: f64,
    pub horizon_days: usize,
}

impl SimReport {
    fn new(outcomes: &SimOutcomes, metrics: AnnualMetrics, config: &SimConfig) -> Self {
        let p = outcomes.failure_probability(config.gamma, config.theta);
        let n = outcomes.runs.len();
        Self {
            failure_probability: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            annual_volatility: metrics.volatility,
            annual_semideviation: metrics.semideviation,
            n_runs: n,
            mode: outcomes.mode,
            seed: config.seed,
            gamma: config.gamma,
            theta: config.theta,
            horizon_days: config.horizon_days,
        }
    }
}

/// RNG for run `run` of a simulation seeded with `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Realized multipliers over `horizon` days starting at row `start`.
pub fn historical_path(table: &PriceTable, columns: &[usize], start: usize, horizon: usize) -> Result<PricePath> {
    if start + horizon >= table.n_dates() {
        return Err(Error::InsufficientData(format!(
            "window starting at row {start} with {horizon} days exceeds {} dates",
            table.n_dates()
        )));
    }
    let p = table.prices();
    let m = DMatrix::from_fn(horizon + 1, columns.len(), |t, j| {
        if t == 0 {
            1.0
        } else {
            p[(start + t, columns[j])] / p[(start, columns[j])]
        }
    });
    PricePath::new(m)
}

pub fn historical_outcomes(portfolio: &Portfolio, table: &PriceTable, config: &SimConfig) -> Result<SimOutcomes> {
    config.validate()?;
    let columns = table.column_indices(portfolio.symbols())?;
    if table.n_dates() < config.horizon_days + 1 {
        return Err(Error::InsufficientData(format!(
            "historical simulation over {} days needs {} dates, table has {}",
            config.horizon_days,
            config.horizon_days + 1,
            table.n_dates()
        )));
    }
    let weights = portfolio.weights();
    let runs = (0..config.n_runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = run_rng(config.seed, k as u64);
            let start = sample_window_start(table.n_dates(), config.horizon_days, &mut rng)?;
            let path = historical_path(table, &columns, start, config.horizon_days)?;
            Ok(RunOutcome::from_path(weights, &path))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimOutcomes {
        mode: SimMode::Historical,
        runs,
    })
}

/// Bootstraps contiguous windows of realized history.
pub fn simulate_historical(portfolio: &Portfolio, table: &PriceTable, config: &SimConfig) -> Result<SimReport> {
    let outcomes = historical_outcomes(portfolio, table, config)?;
    let metrics = table_metrics(portfolio, table)?;
    Ok(SimReport::new(&outcomes, metrics, config))
}

/// Where GBM runs take their drift and covariance from.
#[derive(Debug, Clone, Copy)]
pub enum GbmSource<'a> {
    /// One model for every run.
    Fixed(&'a RiskModel),
    /// Each run estimates a fresh model from a randomly sampled window of
    /// `SimConfig::estimation_window_days` days of this table.
    Sampled(&'a PriceTable),
}

/// Draws correlated daily log returns `μ + Lε` with `LLᵀ = C`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmPathGenerator {
    drift: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GbmPathGenerator {
    /// Cholesky factor of the covariance, or a clipped eigen-factor when the
    /// covariance is only semidefinite.
    pub fn new(model: &RiskModel) -> Result<Self> {
        let cov = &model.cov;
        let factor = match cov.clone().cholesky() {
            Some(chol) => chol.l(),
            None => {
                let eig = SymmetricEigen::new(cov.clone());
                let min = eig.eigenvalues.min();
                if min < -PSD_TOLERANCE {
                    return Err(Error::Domain(format!(
                        "covariance is not positive semidefinite (min eigenvalue {min:e})"
                    )));
                }
                let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&roots)
            }
        };
        Ok(Self {
            drift: model.mu.clone(),
            factor,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.drift.len()
    }

    pub fn daily_log_returns<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let eps = DVector::from_fn(self.n_assets(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.drift + &self.factor * eps
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, horizon: usize, rng: &mut R) -> PricePath {
        let m = self.n_assets();
        let mut multipliers = DMatrix::from_element(horizon + 1, m, 1.0);
        let mut log_level = DVector::zeros(m);
        for t in 1..=horizon {
            log_level += self.daily_log_returns(rng);
            for i in 0..m {
                multipliers[(t, i)] = log_level[i].exp();
            }
        }
        PricePath { multipliers }
    }
}

pub fn gbm_outcomes(portfolio: &Portfolio, source: GbmSource<'_>, config: &SimConfig) -> Result<SimOutcomes> {
    config.validate()?;
    let weights = portfolio.weights();
    let runs = match source {
        GbmSource::Fixed(model) => {
            let generator = GbmPathGenerator::new(&model.select(portfolio.symbols())?)?;
            (0..config.n_runs)
                .into_par_iter()
                .map(|k| {
                    let mut rng = run_rng(config.seed, k as u64);
                    let path = generator.sample_path(config.horizon_days, &mut rng);
                    RunOutcome::from_path(weights, &path)
                })
                .collect()
        }
        GbmSource::Sampled(table) => {
            let table = table.select(portfolio.symbols())?;
            let window = config.estimation_window_days;
            if table.n_dates() < window + 1 {
                return Err(Error::InsufficientData(format!(
                    "a {window}-day estimation window needs {} dates, table has {}",
                    window + 1,
                    table.n_dates()
                )));
            }
            (0..config.n_runs)
                .into_par_iter()
                .map(|k| {
                    let mut rng = run_rng(config.seed, k as u64);
                    let start = sample_window_start(table.n_dates(), window, &mut rng)?;
                    let returns = log_returns_by_index(&table, start, start + window)?;
                    let generator = GbmPathGenerator::new(&estimate_risk_model(&returns)?)?;
                    let path = generator.sample_path(config.horizon_days, &mut rng);
                    Ok(RunOutcome::from_path(weights, &path))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(SimOutcomes {
        mode: SimMode::Gbm,
        runs,
    })
}

/// Correlated GBM simulation. Annualized metrics come from the price history
/// for [`GbmSource::Sampled`] and from the simulated paths for
/// [`GbmSource::Fixed`].
pub fn simulate_gbm(portfolio: &Portfolio, source: GbmSource<'_>, config: &SimConfig) -> Result<SimReport> {
    let outcomes = gbm_outcomes(portfolio, source, config)?;
    let metrics = match source {
        GbmSource::Sampled(table) => table_metrics(portfolio, table)?,
        GbmSource::Fixed(_) => path_metrics(&outcomes),
    };
    Ok(SimReport::new(&outcomes, metrics, config))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnualMetrics {
    pub volatility: f64,
    pub semideviation: f64,
}

/// Annualized volatility and semideviation of the portfolio's daily return series.
pub fn annualized_metrics(weights: &[f64], returns: &ReturnMatrix) -> Result<AnnualMetrics> {
    if returns.n_obs() < 2 {
        return Err(Error::InsufficientData(format!(
            "annualized metrics need at least 2 returns, got {}",
            returns.n_obs()
        )));
    }
    let rp = returns.portfolio_returns(weights)?;
    let (variance, semivariance) = dispersion(rp.as_slice());
    Ok(AnnualMetrics {
        volatility: (variance * DAYS_PER_YEAR).sqrt(),
        semideviation: (semivariance * DAYS_PER_YEAR).sqrt(),
    })
}

fn table_metrics(portfolio: &Portfolio, table: &PriceTable) -> Result<AnnualMetrics> {
    let table = table.select(portfolio.symbols())?;
    let returns = log_returns_by_index(&table, 0, table.n_dates() - 1)?;
    annualized_metrics(portfolio.weights(), &returns)
}

fn path_metrics(outcomes: &SimOutcomes) -> AnnualMetrics {
    let n = outcomes.runs.len() as f64;
    let var = outcomes.runs.iter().map(|r| r.daily_variance).sum::<f64>() / n;
    let semi = outcomes.runs.iter().map(|r| r.daily_semivariance).sum::<f64>() / n;
    AnnualMetrics {
        volatility: (var * DAYS_PER_YEAR).sqrt(),
        semideviation: (semi * DAYS_PER_YEAR).sqrt(),
    }
}
