mod common;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use common::{date, testdata};
use proptest::prelude::*;
use stablecoin_collateral::ledger::{
    build_collateral_series, historical_portfolio, load_events, load_pip_updates, CategoryScheme, TokenAmount, VaultEvent,
};
use stablecoin_collateral::market_data::PriceHistory;
use stablecoin_collateral::Error;

const VAULTS: [(&str, &str); 4] = [("ETH-A", "ETH"), ("WBTC-A", "WBTC"), ("LINK-A", "LINK"), ("YFI-A", "YFI")];

fn prices(start: NaiveDate, days: usize) -> PriceHistory {
    let mut h = PriceHistory::new();
    for (i, d) in start.iter_days().take(days).enumerate() {
        for (j, (_, symbol)) in VAULTS.iter().enumerate() {
            h.insert(symbol, d, 10.0 * (j + 1) as f64 + i as f64).unwrap();
        }
    }
    h
}

/// Deposits and partial withdrawals that never overdraw a vault.
fn events_strategy() -> impl Strategy<Value = Vec<VaultEvent>> {
    prop::collection::vec((0usize..4, 0i64..20 * 86_400, 1i128..1_000_000, any::<bool>()), 1..80).prop_map(|raw| {
        let start = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
        let mut rows = raw;
        rows.sort_by_key(|r| r.1);
        let mut balances = [0i128; 4];
        rows.into_iter()
            .enumerate()
            .map(|(i, (v, secs, units, withdraw))| {
                let amount = units * 1_000_000_000_000;
                let delta = if withdraw && balances[v] > 0 { -(balances[v] / 2).max(1) } else { amount };
                balances[v] += delta;
                VaultEvent {
                    block_number: 1000 + i as u64,
                    timestamp: start + Duration::seconds(secs),
                    vault_type: VAULTS[v].0.into(),
                    token_symbol: VAULTS[v].1.into(),
                    delta_tokens: TokenAmount::from_units(delta),
                    line: i as u64 + 2,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn balances_do_not_depend_on_the_replay_range(events in events_strategy(), split in 1usize..19) {
        let start = date("2021-06-01");
        let end = date("2021-06-20");
        let h = prices(start, 20);
        let scheme = CategoryScheme::default();
        let full = build_collateral_series(&events, &h, &[], &scheme, Some((start, end))).unwrap();
        let cut = start + Duration::days(split as i64);
        let head = build_collateral_series(&events, &h, &[], &scheme, Some((start, cut))).unwrap();
        let tail = build_collateral_series(&events, &h, &[], &scheme, Some((cut + Duration::days(1), end))).unwrap();
        for v in &full.vaults {
            let joined: Vec<TokenAmount> = [&head, &tail]
                .iter()
                .flat_map(|s| s.vaults.iter().find(|w| w.vault_type == v.vault_type).unwrap().balances.clone())
                .collect();
            prop_assert_eq!(&v.balances, &joined);
            let total: i128 = events.iter().filter(|e| e.vault_type == v.vault_type).map(|e| e.delta_tokens.units()).sum();
            prop_assert_eq!(v.balances.last().unwrap().units(), total);
            prop_assert!(v.balances.iter().all(|b| b.units() >= 0));
        }
        prop_assert!(full.closure_error() <= 1e-12);
    }

    #[test]
    fn historical_weights_are_normalized(events in events_strategy(), top_k in 1usize..5) {
        let start = date("2021-06-01");
        let h = prices(start, 20);
        let series = build_collateral_series(&events, &h, &[], &CategoryScheme::default(), Some((start, date("2021-06-20")))).unwrap();
        let p = historical_portfolio(&series, None, top_k).unwrap();
        prop_assert!(p.symbols.len() <= top_k);
        prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        prop_assert!(p.weights.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn overdraft_names_the_offending_event() {
    let start = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
    let event = |block: u64, units: i128, line: u64| VaultEvent {
        block_number: block,
        timestamp: start + Duration::hours(block as i64),
        vault_type: "ETH-A".into(),
        token_symbol: "ETH".into(),
        delta_tokens: TokenAmount::from_units(units * 1_000_000_000_000_000_000),
        line,
    };
    let events = vec![event(1, 5, 2), event(2, -3, 3), event(3, -4, 4), event(4, 10, 5)];
    let err = build_collateral_series(&events, &prices(date("2021-06-01"), 5), &[], &CategoryScheme::default(), None).unwrap_err();
    match err {
        Error::NegativeBalance { vault_type, block_number, line, .. } => {
            assert_eq!((vault_type.as_str(), block_number, line), ("ETH-A", 3, 4));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn fixture_replays_are_bit_identical() {
    let dir = testdata("ledger");
    let events = load_events(dir.join("events.csv")).unwrap();
    let pips = load_pip_updates(dir.join("pip_updates.csv")).unwrap();
    let h = PriceHistory::from_path(dir.join("prices.csv")).unwrap();
    let build = || build_collateral_series(&events.events, &h, &pips, &CategoryScheme::default(), None).unwrap();
    let (a, b) = (build(), build());
    assert_eq!(a.dates, b.dates);
    for (x, y) in a.total.iter().zip(&b.total) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    for (va, vb) in a.vaults.iter().zip(&b.vaults) {
        assert_eq!(va.balances, vb.balances);
        assert!(va.usd.iter().zip(&vb.usd).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
