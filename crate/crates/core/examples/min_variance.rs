//! Minimum-variance collateral portfolio for a synthetic six-token basket.
//!
//! ```text
//! cargo run --example min_variance
//! ```

use stablecoin_collateral::market_data::{estimate_risk_model, log_returns};
use stablecoin_collateral::portfolio_opt::min_variance;
use stablecoin_collateral::synthetic::demo_history;
use stablecoin_collateral::Result;

fn main() -> Result<()> {
    let history = demo_history(400, 42)?;
    let table = history.align(&history.symbols(), None)?;
    let last = *table.dates().last().unwrap();
    let returns = log_returns(&table, (last - chrono::Days::new(200), last))?;
    let model = estimate_risk_model(&returns)?;

    let caps = vec![0.3; model.n_assets()];
    let solution = min_variance(&model, &caps)?;

    println!("window {} .. {}", returns.window().0, returns.window().1);
    for (symbol, w) in solution.portfolio.symbols().iter().zip(solution.portfolio.weights()) {
        println!("{symbol:>6} {w:8.4}");
    }
    let r = &solution.report;
    println!(
        "daily variance {:.3e}, KKT residual {:.1e}, {} iterations",
        r.objective, r.kkt_residual, r.iterations
    );
    Ok(())
}
