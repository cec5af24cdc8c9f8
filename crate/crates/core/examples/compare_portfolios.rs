//! Side-by-side risk metrics for an observed mix and two optimized portfolios.
//!
//! ```text
//! cargo run --release --example compare_portfolios
//! ```

use stablecoin_collateral::backtest::{compare_portfolios, optimize, ComparisonEntry, Objective};
use stablecoin_collateral::market_data::log_returns_by_index;
use stablecoin_collateral::portfolio_opt::Portfolio;
use stablecoin_collateral::risk_sim::SimConfig;
use stablecoin_collateral::synthetic::demo_history;
use stablecoin_collateral::Result;

fn main() -> Result<()> {
    let history = demo_history(1400, 6)?;
    let symbols = history.symbols();
    let table = history.align(&symbols, None)?;
    let first_year = log_returns_by_index(&table, 0, 200)?;
    let caps = vec![0.3; symbols.len()];

    let observed = Portfolio::uncapped(symbols.clone(), vec![0.2, 0.05, 0.05, 0.1, 0.3, 0.3])?;
    let vol = optimize(&first_year, &caps, Objective::Variance)?.portfolio;
    let sem = optimize(&first_year, &caps, Objective::Semivariance)?.portfolio;

    let config = SimConfig {
        n_runs: 2000,
        seed: 2,
        ..SimConfig::default()
    };
    let named = vec![("observed".to_string(), observed), ("min-vol".into(), vol), ("min-sem".into(), sem)];
    println!("{:<10} {:>8} {:>8} {:>8} {:>8}", "", "vol", "semidev", "p_hist", "p_gbm");
    for entry in compare_portfolios(&named, &history, &config, None)? {
        match entry {
            ComparisonEntry::Ok(r) => println!(
                "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                r.portfolio_name, r.annual_volatility, r.annual_semideviation, r.historical_failure_prob, r.gbm_failure_prob
            ),
            ComparisonEntry::Error { portfolio_name, message, .. } => println!("{portfolio_name:<10} error: {message}"),
        }
    }
    Ok(())
}
