//! Replays the bundled vault-event fixture into daily collateral by category
//! and derives the average historical crypto portfolio.
//!
//! ```text
//! cargo run --example ledger_replay
//! ```

use std::path::Path;

use stablecoin_collateral::ledger::{
    build_collateral_series, historical_portfolio, load_events, load_pip_updates, Category, CategoryScheme,
};
use stablecoin_collateral::market_data::PriceHistory;
use stablecoin_collateral::Result;

fn main() -> Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/ledger");
    let log = load_events(dir.join("events.csv"))?;
    let pips = load_pip_updates(dir.join("pip_updates.csv"))?;
    let prices = PriceHistory::from_path(dir.join("prices.csv"))?;

    let series = build_collateral_series(&log.events, &prices, &pips, &CategoryScheme::default(), None)?;
    print!("{:<10}", "date");
    for c in Category::ALL {
        print!(" {:>12}", c.name());
    }
    println!(" {:>12}", "total");
    for (t, d) in series.dates.iter().enumerate() {
        print!("{d:<10}");
        for c in Category::ALL {
            print!(" {:>12.2}", series.category(c)[t]);
        }
        println!(" {:>12.2}", series.total[t]);
    }

    let hp = historical_portfolio(&series, None, 6)?;
    println!("\naverage crypto mix {} .. {}:", hp.start, hp.end);
    for (s, w) in hp.symbols.iter().zip(&hp.weights) {
        println!("  {s:<6} {w:.4}");
    }
    Ok(())
}
