//! Rolling-window re-optimization and side-by-side portfolio comparison.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{estimate_risk_model, log_returns_by_index, PriceHistory, PriceTable, ReturnMatrix};
use crate::portfolio_opt::{min_semivariance, min_variance, Portfolio, SolverFlag};
use crate::risk_sim::{simulate_gbm, simulate_historical, GbmSource, SimConfig, SimMode};
use crate::universe::DEFAULT_CAP;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Variance,
    #[default]
    Semivariance,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Variance => "variance",
            Objective::Semivariance => "semivariance",
        })
    }
}

/// Per-token weight caps with a fallback for unlisted tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapSpec {
    pub default: f64,
    pub per_symbol: BTreeMap<String, f64>,
}

impl Default for CapSpec {
    fn default() -> Self {
        Self::uniform(DEFAULT_CAP)
    }
}

impl CapSpec {
    pub fn uniform(cap: f64) -> Self {
        Self {
            default: cap,
            per_symbol: BTreeMap::new(),
        }
    }

    pub fn cap(&self, symbol: &str) -> f64 {
        self.per_symbol.get(symbol).copied().unwrap_or(self.default)
    }

    pub fn for_symbols(&self, symbols: &[String]) -> Vec<f64> {
        symbols.iter().map(|s| self.cap(s)).collect()
    }
}

/// Minimizes `objective` over the capped simplex using the given returns.
pub fn optimize(returns: &ReturnMatrix, caps: &[f64], objective: Objective) -> Result<crate::portfolio_opt::Solution> {
    match objective {
        Objective::Variance => min_variance(&estimate_risk_model(returns)?, caps),
        Objective::Semivariance => min_semivariance(returns, caps),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingSpec {
    pub window_days: usize,
    pub step_days: usize,
    pub objective: Objective,
    pub caps: CapSpec,
    pub universe: Vec<String>,
}

impl RollingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_days < 2 {
            return Err(Error::Config(format!("window_days must be at least 2, got {}", self.window_days)));
        }
        if self.step_days < 1 {
            return Err(Error::Config("step_days must be at least 1".into()));
        }
        if self.universe.is_empty() {
            return Err(Error::EmptyUniverse("rolling universe is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RollingError {
    pub kind: &'static str,
    pub message: String,
}

/// Result for one evaluation date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RollingPoint {
    pub date: NaiveDate,
    /// Tokens without a price on every day of the window.
    pub excluded: Vec<String>,
    pub symbols: Vec<String>,
    pub weights: Vec<f64>,
    pub objective_value: Option<f64>,
    pub flags: Vec<SolverFlag>,
    pub error: Option<RollingError>,
}

impl RollingPoint {
    pub fn weight_of(&self, symbol: &str) -> f64 {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .map_or(0.0, |i| self.weights[i])
    }
}

/// Evaluation dates for `spec` over the calendar span `[first, last]`.
pub fn evaluation_dates(first: NaiveDate, last: NaiveDate, spec: &RollingSpec) -> Vec<NaiveDate> {
    let Some(start) = first.checked_add_days(Days::new(spec.window_days as u64)) else {
        return Vec::new();
    };
    start
        .iter_days()
        .take_while(|d| *d <= last)
        .step_by(spec.step_days)
        .collect()
}

/// Re-optimizes on every evaluation date using the `window_days` daily
/// returns ending on that date, i.e. prices from `d − W` through `d`.
///
/// `range` bounds the evaluation dates; it defaults to the calendar span of
/// the universe's prices. Failures on a date are recorded in that point and
/// the sweep continues.
pub fn rolling_optimal(
    history: &PriceHistory,
    spec: &RollingSpec,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<Vec<RollingPoint>> {
    spec.validate()?;
    let (first, last) = history
        .span(&spec.universe)
        .ok_or_else(|| Error::Coverage("no prices for any token in the rolling universe".into()))?;
    let mut dates = evaluation_dates(first, last, spec);
    if let Some((lo, hi)) = range {
        dates.retain(|d| *d >= lo && *d <= hi);
    }
    if dates.is_empty() {
        return Err(Error::InsufficientData(format!(
            "prices span {first}..={last}, shorter than a {}-day window plus one day",
            spec.window_days
        )));
    }
    Ok(dates.into_par_iter().map(|d| rolling_point(history, spec, d)).collect())
}

fn rolling_point(history: &PriceHistory, spec: &RollingSpec, date: NaiveDate) -> RollingPoint {
    let window_start = date - Days::new(spec.window_days as u64);
    let days: Vec<NaiveDate> = window_start.iter_days().take(spec.window_days + 1).collect();
    let (covered, excluded): (Vec<&String>, Vec<&String>) = spec
        .universe
        .iter()
        .partition(|s| days.iter().all(|d| history.price(s, *d).is_some()));
    let mut point = RollingPoint {
        date,
        excluded: excluded.into_iter().cloned().collect(),
        symbols: Vec::new(),
        weights: Vec::new(),
        objective_value: None,
        flags: Vec::new(),
        error: None,
    };
    let symbols: Vec<String> = covered.into_iter().cloned().collect();
    let solved = if symbols.is_empty() {
        Err(Error::EmptyUniverse(format!("no token has full price coverage over {window_start}..={date}")))
    } else {
        let prices = DMatrix::from_fn(days.len(), symbols.len(), |t, j| {
            history.price(&symbols[j], days[t]).expect("coverage checked")
        });
        PriceTable::new(days, symbols.clone(), prices)
            .and_then(|table| log_returns_by_index(&table, 0, spec.window_days))
            .and_then(|returns| optimize(&returns, &spec.caps.for_symbols(&symbols), spec.objective))
    };
    match solved {
        Ok(solution) => {
            point.symbols = symbols;
            point.weights = solution.portfolio.weights().to_vec();
            point.objective_value = Some(solution.report.objective);
            point.flags = solution.report.flags;
        }
        Err(e) => {
            point.error = Some(RollingError {
                kind: e.kind(),
                message: e.to_string(),
            })
        }
    }
    point
}

/// One portfolio's metrics, or the reason they could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ComparisonEntry {
    Ok(ComparisonRow),
    Error {
        portfolio_name: String,
        kind: &'static str,
        message: String,
    },
}

impl ComparisonEntry {
    pub fn row(&self) -> Option<&ComparisonRow> {
        match self {
            ComparisonEntry::Ok(r) => Some(r),
            ComparisonEntry::Error { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub portfolio_name: String,
    pub annual_volatility: f64,
    pub annual_semideviation: f64,
    pub historical_failure_prob: f64,
    pub gbm_failure_prob: f64,
}

/// Annualized risk and both simulated failure probabilities for each
/// portfolio.
///
/// Each portfolio is evaluated on its own aligned price table over `range`,
/// so a coverage gap in one portfolio does not affect the others. Both
/// simulations use `config.seed`; `config.mode` is ignored.
pub fn compare_portfolios(
    portfolios: &[(String, Portfolio)],
    history: &PriceHistory,
    config: &SimConfig,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<Vec<ComparisonEntry>> {
    config.validate()?;
    Ok(portfolios
        .iter()
        .map(|(name, portfolio)| match compare_one(name, portfolio, history, config, range) {
            Ok(row) => ComparisonEntry::Ok(row),
            Err(e) => ComparisonEntry::Error {
                portfolio_name: name.clone(),
                kind: e.kind(),
                message: e.to_string(),
            },
        })
        .collect())
}

fn compare_one(
    name: &str,
    portfolio: &Portfolio,
    history: &PriceHistory,
    config: &SimConfig,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<ComparisonRow> {
    let table = history.align(portfolio.symbols(), range)?;
    let historical = simulate_historical(
        portfolio,
        &table,
        &SimConfig {
            mode: SimMode::Historical,
            ..config.clone()
        },
    )?;
    let gbm = simulate_gbm(
        portfolio,
        GbmSource::Sampled(&table),
        &SimConfig {
            mode: SimMode::Gbm,
            ..config.clone()
        },
    )?;
    Ok(ComparisonRow {
        portfolio_name: name.to_string(),
        annual_volatility: historical.annual_volatility,
        annual_semideviation: historical.annual_semideviation,
        historical_failure_prob: historical.failure_probability,
        gbm_failure_prob: gbm.failure_probability,
    })
}
