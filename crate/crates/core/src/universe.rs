//! Token universe configuration and selection filter.
//!
//! The universe file is TOML:
//!
//! ```toml
//! default_cap = 0.2
//!
//! [[token]]
//! symbol = "BTC"
//! rank = 1
//! launch_date = 2009-01-03
//! stablecoin = false
//!
//! [[token]]
//! symbol = "USDC"
//! rank = 5
//! launch_date = 2018-09-26
//! stablecoin = true
//! cap = 0.1
//! ```

use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};
use serde::Deserialize;

use crate::error::{Error, Result};

pub const DEFAULT_CAP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct UniverseEntry {
    pub symbol: String,
    /// Popularity rank, 1 = most popular. Unranked entries never pass a rank cutoff.
    pub rank: Option<u32>,
    pub launch_date: Option<NaiveDate>,
    pub stablecoin: bool,
    /// Wrapped-Bitcoin variant, grouped with BTC in collateral breakdowns.
    pub btc_variant: bool,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniverseConfig {
    pub default_cap: f64,
    pub tokens: Vec<UniverseEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    default_cap: Option<f64>,
    #[serde(default, rename = "token")]
    tokens: Vec<RawEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    symbol: String,
    rank: Option<u32>,
    launch_date: Option<RawDate>,
    #[serde(default)]
    stablecoin: bool,
    #[serde(default)]
    btc_variant: bool,
    cap: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDate {
    Toml(toml::value::Datetime),
    Text(String),
}

impl RawDate {
    fn to_date(&self, symbol: &str) -> Result<NaiveDate> {
        let bad = || Error::Config(format!("{symbol}: launch_date must be a YYYY-MM-DD date"));
        match self {
            RawDate::Toml(dt) => {
                let date = dt.date.ok_or_else(bad)?;
                NaiveDate::from_ymd_opt(date.year as i32, date.month as u32, date.day as u32).ok_or_else(bad)
            }
            RawDate::Text(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| bad()),
        }
    }
}

impl UniverseConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let default_cap = raw.default_cap.unwrap_or(DEFAULT_CAP);
        check_cap("default_cap", default_cap)?;
        let mut tokens = Vec::with_capacity(raw.tokens.len());
        for entry in raw.tokens {
            if tokens.iter().any(|t: &UniverseEntry| t.symbol == entry.symbol) {
                return Err(Error::Config(format!("duplicate token {}", entry.symbol)));
            }
            let cap = entry.cap.unwrap_or(default_cap);
            check_cap(&entry.symbol, cap)?;
            let launch_date = entry.launch_date.as_ref().map(|d| d.to_date(&entry.symbol)).transpose()?;
            tokens.push(UniverseEntry {
                symbol: entry.symbol,
                rank: entry.rank,
                launch_date,
                stablecoin: entry.stablecoin,
                btc_variant: entry.btc_variant,
                cap,
            });
        }
        Ok(Self { default_cap, tokens })
    }

    pub fn symbols(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.symbol.clone()).collect()
    }

    /// Cap for `symbol`, falling back to the default.
    pub fn cap(&self, symbol: &str) -> f64 {
        self.tokens
            .iter()
            .find(|t| t.symbol == symbol)
            .map_or(self.default_cap, |t| t.cap)
    }
}

fn check_cap(what: &str, cap: f64) -> Result<()> {
    if cap > 0.0 && cap <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what}: cap must lie in (0, 1], got {cap}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniverseFilter {
    max_rank: u32,
    min_age_years: f64,
    exclude_stablecoins: bool,
}

impl Default for UniverseFilter {
    /// Top 100 by popularity, at least three years old, no stablecoins.
    fn default() -> Self {
        Self {
            max_rank: 100,
            min_age_years: 3.0,
            exclude_stablecoins: true,
        }
    }
}

impl UniverseFilter {
    pub fn new(max_rank: u32, min_age_years: f64, exclude_stablecoins: bool) -> Result<Self> {
        if max_rank < 1 {
            return Err(Error::Config("max_rank must be at least 1".into()));
        }
        if !(min_age_years >= 0.0 && min_age_years.is_finite()) {
            return Err(Error::Config(format!("min_age_years must be >= 0, got {min_age_years}")));
        }
        Ok(Self {
            max_rank,
            min_age_years,
            exclude_stablecoins,
        })
    }

    pub fn max_rank(&self) -> u32 {
        self.max_rank
    }

    pub fn min_age_years(&self) -> f64 {
        self.min_age_years
    }

    pub fn exclude_stablecoins(&self) -> bool {
        self.exclude_stablecoins
    }

    /// Latest launch date that still satisfies the age requirement on `as_of`.
    /// Whole years step back by calendar year; any fractional part is
    /// converted at 365.25 days per year.
    pub fn latest_launch(&self, as_of: NaiveDate) -> NaiveDate {
        let whole = self.min_age_years.trunc() as u32;
        let frac_days = ((self.min_age_years - whole as f64) * 365.25).round() as u64;
        as_of
            .checked_sub_months(Months::new(whole * 12))
            .and_then(|d| d.checked_sub_days(chrono::Days::new(frac_days)))
            .unwrap_or_else(|| NaiveDate::from_ymd_opt(as_of.year().min(1), 1, 1).expect("valid date"))
    }
}

/// Symbols of the entries passing `filter` on `as_of`, in input order.
/// An entry launched exactly `min_age_years` before `as_of` is kept.
pub fn filter_universe(candidates: &[UniverseEntry], filter: &UniverseFilter, as_of: NaiveDate) -> Vec<String> {
    let latest = filter.latest_launch(as_of);
    candidates
        .iter()
        .filter(|e| e.rank.is_some_and(|r| r <= filter.max_rank))
        .filter(|e| e.launch_date.is_some_and(|d| d <= latest))
        .filter(|e| !(filter.exclude_stablecoins && e.stablecoin))
        .map(|e| e.symbol.clone())
        .collect()
}
