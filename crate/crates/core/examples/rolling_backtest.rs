//! Rolling 60-day semivariance portfolios, re-optimized every 30 days. A
//! token listed late is excluded until it has a full window of prices.
//!
//! ```text
//! cargo run --release --example rolling_backtest
//! ```

use chrono::NaiveDate;
use stablecoin_collateral::backtest::{rolling_optimal, CapSpec, Objective, RollingSpec};
use stablecoin_collateral::synthetic::{demo_history, gbm_history, SyntheticToken};
use stablecoin_collateral::Result;

fn main() -> Result<()> {
    let mut history = demo_history(540, 23)?;
    let listing = NaiveDate::from_ymd_opt(2020, 10, 1).unwrap();
    let late = gbm_history(&[SyntheticToken::new("NEW", 5.0, 0.0, 0.03)], None, listing, 180, 4)?;
    for (d, p) in late.series("NEW").unwrap() {
        history.insert("NEW", *d, *p)?;
    }

    let mut universe = history.symbols();
    universe.sort();
    let spec = RollingSpec {
        window_days: 60,
        step_days: 30,
        objective: Objective::Semivariance,
        caps: CapSpec::uniform(0.4),
        universe: universe.clone(),
    };
    let points = rolling_optimal(&history, &spec, None)?;

    print!("{:<10}", "date");
    for s in &universe {
        print!(" {s:>6}");
    }
    println!("  excluded");
    for p in &points {
        print!("{:<10}", p.date);
        for s in &universe {
            print!(" {:>6.3}", p.weight_of(s));
        }
        println!("  {}", p.excluded.join(","));
    }
    Ok(())
}
