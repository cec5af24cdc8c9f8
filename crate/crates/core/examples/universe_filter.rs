//! Selecting the optimization universe from a TOML token list.
//!
//! ```text
//! cargo run --example universe_filter
//! ```

use chrono::NaiveDate;
use stablecoin_collateral::universe::{filter_universe, UniverseConfig, UniverseFilter};
use stablecoin_collateral::Result;

const CONFIG: &str = r#"
default_cap = 0.2

[[token]]
symbol = "ETH"
rank = 2
launch_date = 2015-07-30

[[token]]
symbol = "WBTC"
rank = 15
launch_date = 2019-01-31
btc_variant = true
cap = 0.3

[[token]]
symbol = "USDC"
rank = 5
launch_date = 2018-09-26
stablecoin = true

[[token]]
symbol = "NEWCOIN"
rank = 40
launch_date = 2023-02-01

[[token]]
symbol = "OBSCURE"
rank = 450
launch_date = 2017-05-01
"#;

fn main() -> Result<()> {
    let config = UniverseConfig::parse(CONFIG)?;
    let as_of = NaiveDate::from_ymd_opt(2024, 6, 1).unwrap();
    let filter = UniverseFilter::default();
    println!("launched on or before {} qualify", filter.latest_launch(as_of));
    for symbol in filter_universe(&config.tokens, &filter, as_of) {
        println!("{symbol:<8} cap {}", config.cap(&symbol));
    }
    Ok(())
}
