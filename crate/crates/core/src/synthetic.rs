//! Seeded synthetic price histories for demos and tests.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::market_data::{PriceHistory, RiskModel};
use crate::risk_sim::GbmPathGenerator;

/// A synthetic token: starting price plus daily log-return drift and volatility.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticToken {
    pub symbol: String,
    pub initial_price: f64,
    pub daily_drift: f64,
    pub daily_volatility: f64,
}

impl SyntheticToken {
    pub fn new(symbol: &str, initial_price: f64, daily_drift: f64, daily_volatility: f64) -> Self {
        Self {
            symbol: symbol.to_string(),
            initial_price,
            daily_drift,
            daily_volatility,
        }
    }
}

/// Correlated GBM closes for `n_days` consecutive days from `start`.
/// `correlation` defaults to the identity.
pub fn gbm_history(
    tokens: &[SyntheticToken],
    correlation: Option<&DMatrix<f64>>,
    start: NaiveDate,
    n_days: usize,
    seed: u64,
) -> Result<PriceHistory> {
    let m = tokens.len();
    let corr = correlation.cloned().unwrap_or_else(|| DMatrix::identity(m, m));
    if corr.nrows() != m || corr.ncols() != m {
        return Err(Error::Domain(format!("correlation matrix is not {m}×{m}")));
    }
    let vols = DVector::from_iterator(m, tokens.iter().map(|t| t.daily_volatility));
    let cov = DMatrix::from_fn(m, m, |i, j| corr[(i, j)] * vols[i] * vols[j]);
    let mu = DVector::from_iterator(m, tokens.iter().map(|t| t.daily_drift));
    let symbols = tokens.iter().map(|t| t.symbol.clone()).collect();
    let generator = GbmPathGenerator::new(&RiskModel::from_moments(symbols, mu, cov)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = generator.sample_path(n_days.saturating_sub(1), &mut rng);
    let mut history = PriceHistory::new();
    for (t, date) in start.iter_days().take(n_days).enumerate() {
        for (j, token) in tokens.iter().enumerate() {
            history.insert(&token.symbol, date, token.initial_price * path.multiplier(t, j))?;
        }
    }
    Ok(history)
}

/// Six tokens loosely shaped like a crypto collateral basket.
pub fn demo_tokens() -> Vec<SyntheticToken> {
    vec![
        SyntheticToken::new("ETH", 1800.0, 0.0008, 0.045),
        SyntheticToken::new("WBTC", 30000.0, 0.0006, 0.035),
        SyntheticToken::new("LINK", 7.0, 0.0004, 0.060),
        SyntheticToken::new("MATIC", 0.9, 0.0002, 0.070),
        SyntheticToken::new("BAT", 0.25, -0.0002, 0.055),
        SyntheticToken::new("ZRX", 0.3, -0.0004, 0.065),
    ]
}

/// Correlation matrix for [`demo_tokens`]: one common factor.
pub fn demo_correlation() -> DMatrix<f64> {
    let loadings = [0.85, 0.8, 0.7, 0.7, 0.65, 0.65];
    DMatrix::from_fn(6, 6, |i, j| if i == j { 1.0 } else { loadings[i] * loadings[j] })
}

/// `n_days` of demo-basket prices from 2020-01-01.
pub fn demo_history(n_days: usize, seed: u64) -> Result<PriceHistory> {
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    gbm_history(&demo_tokens(), Some(&demo_correlation()), start, n_days, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_is_seeded_and_complete() {
        let a = demo_history(30, 1).unwrap();
        let b = demo_history(30, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.symbols().len(), 6);
        assert_eq!(a.series("ETH").unwrap().len(), 30);
        let first = a.series("ETH").unwrap().values().next().copied();
        assert_eq!(first, Some(1800.0));
    }

    #[test]
    fn zero_volatility_is_pure_drift() {
        let t = [SyntheticToken::new("X", 2.0, 0.01, 0.0)];
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let h = gbm_history(&t, None, start, 3, 0).unwrap();
        let p: Vec<f64> = h.series("X").unwrap().values().copied().collect();
        assert!((p[2] - 2.0 * 0.02f64.exp()).abs() < 1e-12);
    }
}
