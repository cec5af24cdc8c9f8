//! Efficient frontier under a 40% per-token cap, with per-token statistics.
//!
//! ```text
//! cargo run --example efficient_frontier
//! ```

use stablecoin_collateral::market_data::{estimate_risk_model, log_returns_by_index};
use stablecoin_collateral::portfolio_opt::{efficient_frontier, token_stats, FrontierEntry};
use stablecoin_collateral::synthetic::demo_history;
use stablecoin_collateral::Result;

fn main() -> Result<()> {
    let history = demo_history(365, 3)?;
    let table = history.align(&history.symbols(), None)?;
    let model = estimate_risk_model(&log_returns_by_index(&table, 0, table.n_dates() - 1)?)?;
    let risk_free = 0.02;

    for s in token_stats(&model, risk_free) {
        println!("{:>6}  return {:7.3}  vol {:6.3}", s.symbol, s.annual_return, s.annual_volatility);
    }
    println!();
    let caps = vec![0.4; model.n_assets()];
    for entry in efficient_frontier(&model, &caps, 12, risk_free)? {
        match entry {
            FrontierEntry::Point(p) => println!(
                "return {:7.3}  vol {:6.3}  sharpe {:>6}",
                p.target_return,
                p.volatility,
                p.sharpe.map_or("-".into(), |s| format!("{s:.2}"))
            ),
            FrontierEntry::Infeasible { target_return } => println!("return {target_return:7.3}  infeasible"),
        }
    }
    Ok(())
}
