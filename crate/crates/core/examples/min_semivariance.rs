//! Downside-risk optimization: exact scenario semivariance against the
//! semicovariance shortcut and plain minimum variance.
//!
//! ```text
//! cargo run --example min_semivariance
//! ```

use stablecoin_collateral::market_data::{estimate_risk_model, log_returns_by_index};
use stablecoin_collateral::portfolio_opt::{
    min_semivariance_with, min_variance, portfolio_semivariance, SemivarianceMethod,
};
use stablecoin_collateral::synthetic::demo_history;
use stablecoin_collateral::Result;

fn main() -> Result<()> {
    let history = demo_history(250, 7)?;
    let table = history.align(&history.symbols(), None)?;
    let returns = log_returns_by_index(&table, 0, table.n_dates() - 1)?;
    let caps = vec![0.35; returns.n_assets()];

    let scenario = min_semivariance_with(&returns, &caps, SemivarianceMethod::Scenario)?;
    let semicov = min_semivariance_with(&returns, &caps, SemivarianceMethod::Semicovariance)?;
    let mv = min_variance(&estimate_risk_model(&returns)?, &caps)?;

    println!("{:>6} {:>9} {:>9} {:>9}", "", "scenario", "semicov", "min-var");
    for (i, s) in returns.symbols().iter().enumerate() {
        println!(
            "{s:>6} {:9.4} {:9.4} {:9.4}",
            scenario.portfolio.weights()[i],
            semicov.portfolio.weights()[i],
            mv.portfolio.weights()[i]
        );
    }
    for (name, w) in [
        ("scenario", scenario.portfolio.weights()),
        ("semicov", semicov.portfolio.weights()),
        ("min-var", mv.portfolio.weights()),
    ] {
        println!("{name:>9}: semivariance {:.4e}", portfolio_semivariance(&returns, w)?);
    }
    Ok(())
}
