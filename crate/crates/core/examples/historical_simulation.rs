//! Failure probability by replaying random one-year windows of history.
//!
//! A run fails when the collateral value drops below θ/γ of its starting
//! value on any day. Re-evaluating the same runs for other (γ, θ) is free.
//!
//! ```text
//! cargo run --release --example historical_simulation
//! ```

use stablecoin_collateral::portfolio_opt::Portfolio;
use stablecoin_collateral::risk_sim::{historical_outcomes, simulate_historical, SimConfig};
use stablecoin_collateral::synthetic::demo_history;
use stablecoin_collateral::Result;

fn main() -> Result<()> {
    let history = demo_history(1500, 11)?;
    let symbols = history.symbols();
    let table = history.align(&symbols, None)?;
    let portfolio = Portfolio::uncapped(symbols, vec![0.1, 0.1, 0.3, 0.3, 0.1, 0.1])?;

    let config = SimConfig { seed: 5, ..SimConfig::default() };
    let report = simulate_historical(&portfolio, &table, &config)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let outcomes = historical_outcomes(&portfolio, &table, &config)?;
    for gamma in [1.75, 2.0, 2.5, 3.0] {
        println!("gamma {gamma:4.2}: p_fail {:.4}", outcomes.failure_probability(gamma, 1.5));
    }
    Ok(())
}
