//! Reconstruction of historical DSS collateral from decoded vault events.
//!
//! Inputs are two exports: `Join` balance changes per vault type and `Pip`
//! valuation updates for RWA and LP vault types. Balances are replayed in
//! exact 18-decimal fixed point, snapshotted at the end of each UTC day, and
//! valued in USD.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::PriceHistory;
use crate::portfolio_opt::Portfolio;

const EVENTS_HEADER: [&str; 5] = ["block_number", "timestamp", "vault_type", "token_symbol", "delta_tokens"];
const PIPS_HEADER: [&str; 4] = ["block_number", "timestamp", "vault_type", "value_usd"];

const DECIMALS: u32 = 18;
const UNIT: i128 = 10i128.pow(DECIMALS);

/// Balances may dip this far below zero (in tokens) from upstream rounding.
pub const NEGATIVE_BALANCE_TOLERANCE: f64 = 1e-9;

/// A token quantity with 18 fractional digits, stored as an integer count of
/// the smallest unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenAmount(i128);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub fn from_units(units: i128) -> Self {
        Self(units)
    }

    pub fn units(self) -> i128 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_add(other.0).map(TokenAmount)
    }

    pub fn to_f64(self) -> f64 {
        let whole = self.0 / UNIT;
        let frac = self.0 % UNIT;
        whole as f64 + frac as f64 / UNIT as f64
    }
}

impl FromStr for TokenAmount {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (negative, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(format!("`{s}` is not a decimal"));
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(format!("`{s}` is not a decimal"));
        }
        if frac_part.len() > DECIMALS as usize {
            return Err(format!("`{s}` has more than {DECIMALS} fractional digits"));
        }
        let overflow = || format!("`{s}` is out of range");
        let whole: i128 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| overflow())? };
        let frac: i128 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse::<i128>().map_err(|_| overflow())? * 10i128.pow(DECIMALS - frac_part.len() as u32)
        };
        let units = whole.checked_mul(UNIT).and_then(|w| w.checked_add(frac)).ok_or_else(overflow)?;
        Ok(TokenAmount(if negative { -units } else { units }))
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / UNIT as u128;
        let frac = abs % UNIT as u128;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{frac:018}");
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl Serialize for TokenAmount {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Vault types of the DSS collateral registry.
pub const KNOWN_VAULT_TYPES: &[&str] = &[
    "AAVE-A", "BAL-A", "BAT-A", "COMP-A", "CRVV1ETHSTETH-A", "ETH-A", "ETH-B", "ETH-C", "GNO-A",
    "GUNIV3DAIUSDC1-A", "GUNIV3DAIUSDC2-A", "GUSD-A", "KNC-A", "LINK-A", "LRC-A", "MANA-A", "MATIC-A",
    "PAXUSD-A", "PSM-GUSD-A", "PSM-PAX-A", "PSM-USDC-A", "RENBTC-A", "RETH-A", "RWA001-A", "RWA002-A",
    "RWA003-A", "RWA004-A", "RWA005-A", "RWA006-A", "RWA007-A", "RWA008-A", "RWA009-A", "RWA012-A",
    "RWA013-A", "RWA014-A", "RWA015-A", "TUSD-A", "UNI-A", "UNIV2AAVEETH-A", "UNIV2DAIETH-A",
    "UNIV2DAIUSDC-A", "UNIV2DAIUSDT-A", "UNIV2ETHUSDT-A", "UNIV2LINKETH-A", "UNIV2UNIETH-A",
    "UNIV2USDCETH-A", "UNIV2WBTCDAI-A", "UNIV2WBTCETH-A", "USDC-A", "USDC-B", "USDT-A", "WBTC-A",
    "WBTC-B", "WBTC-C", "WSTETH-A", "WSTETH-B", "YFI-A", "ZRX-A", "SAI",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultEvent {
    pub block_number: u64,
    pub timestamp: DateTime<Utc>,
    pub vault_type: String,
    pub token_symbol: String,
    pub delta_tokens: TokenAmount,
    /// Line in the source file; breaks ties within a block.
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    /// Events sorted by block, then by their order in the file.
    pub events: Vec<VaultEvent>,
    /// Lines of rows dropped because their delta was zero.
    pub dropped_zero_rows: Vec<u64>,
    /// Vault types not in [`KNOWN_VAULT_TYPES`]. Their events are kept.
    pub unknown_vault_types: BTreeSet<String>,
}

pub fn load_events(path: impl AsRef<Path>) -> Result<EventLog> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(file, path)
}

pub fn read_events<R: Read>(reader: R, source_name: impl AsRef<Path>) -> Result<EventLog> {
    let source_name = source_name.as_ref();
    let mut log = EventLog::default();
    for_each_row(reader, source_name, &EVENTS_HEADER, |line, rec| {
        let block_number = parse_block(source_name, line, &rec[0])?;
        let timestamp = parse_timestamp(source_name, line, &rec[1])?;
        let vault_type = non_empty(source_name, line, &rec[2], "vault_type")?;
        let token_symbol = non_empty(source_name, line, &rec[3], "token_symbol")?;
        let delta_tokens: TokenAmount = rec[4]
            .parse()
            .map_err(|e: String| Error::parse(source_name, line, format!("delta_tokens: {e}")))?;
        if delta_tokens.is_zero() {
            log.dropped_zero_rows.push(line);
            return Ok(());
        }
        if !KNOWN_VAULT_TYPES.contains(&vault_type.as_str()) {
            log.unknown_vault_types.insert(vault_type.clone());
        }
        log.events.push(VaultEvent {
            block_number,
            timestamp,
            vault_type,
            token_symbol,
            delta_tokens,
            line,
        });
        Ok(())
    })?;
    log.events.sort_by_key(|e| (e.block_number, e.line));
    Ok(log)
}

/// A `Pip` valuation update for an RWA or LP vault type.
#[derive(Debug, Clone, PartialEq)]
pub struct PipUpdate {
    pub block_number: u64,
    pub timestamp: DateTime<Utc>,
    pub vault_type: String,
    pub value_usd: f64,
    pub line: u64,
}

pub fn load_pip_updates(path: impl AsRef<Path>) -> Result<Vec<PipUpdate>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pip_updates(file, path)
}

pub fn read_pip_updates<R: Read>(reader: R, source_name: impl AsRef<Path>) -> Result<Vec<PipUpdate>> {
    let source_name = source_name.as_ref();
    let mut updates = Vec::new();
    for_each_row(reader, source_name, &PIPS_HEADER, |line, rec| {
        let value_usd: f64 = rec[3]
            .parse()
            .map_err(|e| Error::parse(source_name, line, format!("value_usd `{}`: {e}", &rec[3])))?;
        if !(value_usd.is_finite() && value_usd >= 0.0) {
            return Err(Error::Domain(format!(
                "{}:{line}: value_usd must be finite and non-negative",
                source_name.display()
            )));
        }
        updates.push(PipUpdate {
            block_number: parse_block(source_name, line, &rec[0])?,
            timestamp: parse_timestamp(source_name, line, &rec[1])?,
            vault_type: non_empty(source_name, line, &rec[2], "vault_type")?,
            value_usd,
            line,
        });
        Ok(())
    })?;
    updates.sort_by_key(|u| (u.block_number, u.line));
    Ok(updates)
}

fn for_each_row<R: Read>(
    reader: R,
    source_name: &Path,
    header: &[&str],
    mut f: impl FnMut(u64, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let found = rdr.headers()?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::parse(source_name, 1, format!("expected header `{}`", header.join(","))));
    }
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::parse(source_name, line, format!("expected {} fields", header.len())));
        }
        f(line, &record)?;
    }
    Ok(())
}

fn parse_block(source: &Path, line: u64, s: &str) -> Result<u64> {
    s.parse()
        .map_err(|e| Error::parse(source, line, format!("block_number `{s}`: {e}")))
}

fn parse_timestamp(source: &Path, line: u64, s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::parse(source, line, format!("timestamp `{s}`: {e}")))
}

fn non_empty(source: &Path, line: u64, s: &str, what: &str) -> Result<String> {
    if s.is_empty() {
        Err(Error::parse(source, line, format!("empty {what}")))
    } else {
        Ok(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Eth,
    Btc,
    MinorErc20,
    Lp,
    Psm,
    Rwa,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Eth,
        Category::Btc,
        Category::MinorErc20,
        Category::Lp,
        Category::Psm,
        Category::Rwa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Eth => "eth",
            Category::Btc => "btc",
            Category::MinorErc20 => "minor_erc20",
            Category::Lp => "lp",
            Category::Psm => "psm",
            Category::Rwa => "rwa",
        }
    }

    /// Plain ERC-20 collateral (the crypto portion).
    pub fn is_erc20(self) -> bool {
        matches!(self, Category::Eth | Category::Btc | Category::MinorErc20)
    }
}

/// Grouping of vault types into collateral categories.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryScheme {
    pub eth_symbols: BTreeSet<String>,
    pub btc_symbols: BTreeSet<String>,
    pub lp_prefixes: Vec<String>,
    /// LP collateral is folded into minor ERC-20 when its share of the total
    /// never reaches this fraction.
    pub lp_visibility_threshold: f64,
}

impl Default for CategoryScheme {
    fn default() -> Self {
        Self {
            eth_symbols: ["ETH", "WETH"].into_iter().map(String::from).collect(),
            btc_symbols: ["WBTC", "RENBTC", "TBTC"].into_iter().map(String::from).collect(),
            lp_prefixes: ["UNIV2", "UNIV3", "GUNIV3", "CRVV1"].into_iter().map(String::from).collect(),
            lp_visibility_threshold: 0.01,
        }
    }
}

impl CategoryScheme {
    pub fn classify(&self, vault_type: &str, token_symbol: &str) -> Category {
        if vault_type.starts_with("PSM-") {
            Category::Psm
        } else if vault_type.starts_with("RWA") {
            Category::Rwa
        } else if self.lp_prefixes.iter().any(|p| token_symbol.starts_with(p.as_str())) {
            Category::Lp
        } else if self.btc_symbols.contains(token_symbol) {
            Category::Btc
        } else if self.eth_symbols.contains(token_symbol) {
            Category::Eth
        } else {
            Category::MinorErc20
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VaultSeries {
    pub vault_type: String,
    pub token_symbol: String,
    pub category: Category,
    pub known: bool,
    pub balances: Vec<TokenAmount>,
    pub usd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollateralSeries {
    pub dates: Vec<NaiveDate>,
    /// One entry per vault type, ordered by name.
    pub vaults: Vec<VaultSeries>,
    /// USD value per category and date.
    pub categories: BTreeMap<Category, Vec<f64>>,
    pub total: Vec<f64>,
    pub lp_folded: bool,
}

impl CollateralSeries {
    pub fn category(&self, c: Category) -> &[f64] {
        &self.categories[&c]
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Largest relative gap between the category sum and the total.
    pub fn closure_error(&self) -> f64 {
        (0..self.dates.len())
            .map(|t| {
                let sum: f64 = self.categories.values().map(|v| v[t]).sum();
                let total = self.total[t];
                if total == 0.0 {
                    sum.abs()
                } else {
                    ((sum - total) / total).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Replays `events` into daily balances and USD values.
///
/// The balance for date `d` includes every event with a UTC timestamp on or
/// before `d`. ERC-20 collateral is valued at that day's close from
/// `prices`, RWA and LP collateral at the latest `Pip` value, PSM collateral
/// at one dollar. The date range defaults to the first through last event.
pub fn build_collateral_series(
    events: &[VaultEvent],
    prices: &PriceHistory,
    pips: &[PipUpdate],
    scheme: &CategoryScheme,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<CollateralSeries> {
    let (start, end) = match range {
        Some(r) => r,
        None => match (events.first(), events.last()) {
            (Some(a), Some(b)) => (
                events.iter().map(|e| e.timestamp).min().unwrap_or(a.timestamp).date_naive(),
                events.iter().map(|e| e.timestamp).max().unwrap_or(b.timestamp).date_naive(),
            ),
            _ => {
                return Ok(CollateralSeries {
                    dates: Vec::new(),
                    vaults: Vec::new(),
                    categories: Category::ALL.iter().map(|c| (*c, Vec::new())).collect(),
                    total: Vec::new(),
                    lp_folded: false,
                })
            }
        },
    };
    if start > end {
        return Err(Error::Domain(format!("empty date range {start}..{end}")));
    }
    let dates: Vec<NaiveDate> = start.iter_days().take_while(|d| *d <= end).collect();

    // Group events per vault type, preserving the sorted order.
    let mut by_vault: BTreeMap<&str, Vec<&VaultEvent>> = BTreeMap::new();
    for e in events {
        by_vault.entry(e.vault_type.as_str()).or_default().push(e);
    }
    let mut pips_by_vault: BTreeMap<&str, Vec<&PipUpdate>> = BTreeMap::new();
    for p in pips {
        pips_by_vault.entry(p.vault_type.as_str()).or_default().push(p);
    }

    let tolerance_units = (NEGATIVE_BALANCE_TOLERANCE * UNIT as f64) as i128;
    let mut vaults = Vec::with_capacity(by_vault.len());
    for (vault_type, stream) in by_vault {
        let token_symbol = stream[0].token_symbol.clone();
        if let Some(e) = stream.iter().find(|e| e.token_symbol != token_symbol) {
            return Err(Error::Domain(format!(
                "{vault_type}: token symbol changes from {token_symbol} to {} at line {}",
                e.token_symbol, e.line
            )));
        }
        if let Some(w) = stream.windows(2).find(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::Domain(format!(
                "{vault_type}: timestamp decreases at line {} (block {})",
                w[1].line, w[1].block_number
            )));
        }
        let category = scheme.classify(vault_type, &token_symbol);
        let vault_pips = pips_by_vault.get(vault_type).map(Vec::as_slice).unwrap_or(&[]);
        let mut balances = Vec::with_capacity(dates.len());
        let mut usd = Vec::with_capacity(dates.len());
        let mut balance = TokenAmount::ZERO;
        let mut next = 0;
        let mut next_pip = 0;
        let mut pip_value: Option<f64> = None;
        for &date in &dates {
            while next < stream.len() && stream[next].timestamp.date_naive() <= date {
                let e = stream[next];
                balance = balance
                    .checked_add(e.delta_tokens)
                    .ok_or_else(|| Error::Domain(format!("{vault_type}: balance overflow at line {}", e.line)))?;
                if balance.units() < -tolerance_units {
                    return Err(Error::NegativeBalance {
                        vault_type: vault_type.to_string(),
                        block_number: e.block_number,
                        line: e.line,
                        balance: balance.to_string(),
                    });
                }
                next += 1;
            }
            while next_pip < vault_pips.len() && vault_pips[next_pip].timestamp.date_naive() <= date {
                pip_value = Some(vault_pips[next_pip].value_usd);
                next_pip += 1;
            }
            let amount = balance.to_f64().max(0.0);
            let value = if amount == 0.0 {
                0.0
            } else {
                match category {
                    Category::Psm => amount,
                    Category::Rwa | Category::Lp => {
                        amount
                            * pip_value.ok_or_else(|| {
                                Error::Coverage(format!("{vault_type}: no Pip value on or before {date}"))
                            })?
                    }
                    _ => {
                        amount
                            * prices.price(&token_symbol, date).ok_or_else(|| {
                                Error::Coverage(format!("{token_symbol} ({vault_type}): no price on {date}"))
                            })?
                    }
                }
            };
            balances.push(balance);
            usd.push(value);
        }
        vaults.push(VaultSeries {
            vault_type: vault_type.to_string(),
            known: KNOWN_VAULT_TYPES.contains(&vault_type),
            token_symbol,
            category,
            balances,
            usd,
        });
    }

    let mut categories: BTreeMap<Category, Vec<f64>> =
        Category::ALL.iter().map(|c| (*c, vec![0.0; dates.len()])).collect();
    let mut total = vec![0.0; dates.len()];
    for v in &vaults {
        let column = categories.get_mut(&v.category).expect("all categories present");
        for (t, value) in v.usd.iter().enumerate() {
            column[t] += value;
            total[t] += value;
        }
    }
    let lp = &categories[&Category::Lp];
    let lp_max_share = lp
        .iter()
        .zip(&total)
        .map(|(l, tot)| if *tot > 0.0 { l / tot } else { 0.0 })
        .fold(0.0, f64::max);
    let lp_folded = lp.iter().any(|v| *v > 0.0) && lp_max_share < scheme.lp_visibility_threshold;
    if lp_folded {
        let lp = std::mem::replace(categories.get_mut(&Category::Lp).expect("lp"), vec![0.0; dates.len()]);
        let minor = categories.get_mut(&Category::MinorErc20).expect("minor");
        for (m, l) in minor.iter_mut().zip(lp) {
            *m += l;
        }
    }

    Ok(CollateralSeries {
        dates,
        vaults,
        categories,
        total,
        lp_folded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoricalPortfolio {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub symbols: Vec<String>,
    pub weights: Vec<f64>,
}

impl HistoricalPortfolio {
    pub fn to_portfolio(&self) -> Result<Portfolio> {
        Portfolio::uncapped(self.symbols.clone(), self.weights.clone())
    }
}

/// Average ERC-20 composition over `range`, reduced to the `top_k` tokens
/// with the largest average share and renormalized.
///
/// Each day with nonzero ERC-20 collateral counts equally. Vault types that
/// share a token are merged.
pub fn historical_portfolio(
    series: &CollateralSeries,
    range: Option<(NaiveDate, NaiveDate)>,
    top_k: usize,
) -> Result<HistoricalPortfolio> {
    if top_k == 0 {
        return Err(Error::Domain("top_k must be at least 1".into()));
    }
    let (start, end) = match range {
        Some(r) => r,
        None => match (series.dates.first(), series.dates.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(Error::EmptyPortfolio("empty collateral series".into())),
        },
    };
    let (Some(&first), Some(&last)) = (series.dates.first(), series.dates.last()) else {
        return Err(Error::EmptyPortfolio("empty collateral series".into()));
    };
    if start < first || end > last || start > end {
        return Err(Error::Domain(format!(
            "range {start}..={end} outside series span {first}..={last}"
        )));
    }
    let mut share_sums: BTreeMap<&str, f64> = BTreeMap::new();
    let mut days = 0usize;
    for (t, date) in series.dates.iter().enumerate() {
        if *date < start || *date > end {
            continue;
        }
        let mut per_token: BTreeMap<&str, f64> = BTreeMap::new();
        for v in series.vaults.iter().filter(|v| v.category.is_erc20()) {
            *per_token.entry(v.token_symbol.as_str()).or_default() += v.usd[t];
        }
        let crypto: f64 = per_token.values().sum();
        if crypto <= 0.0 {
            continue;
        }
        days += 1;
        for (token, value) in per_token {
            *share_sums.entry(token).or_default() += value / crypto;
        }
    }
    if days == 0 {
        return Err(Error::EmptyPortfolio(format!("no ERC-20 collateral within {start}..={end}")));
    }
    let mut ranked: Vec<(&str, f64)> = share_sums
        .into_iter()
        .map(|(s, v)| (s, v / days as f64))
        .filter(|(_, v)| *v > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(top_k);
    let norm: f64 = ranked.iter().map(|(_, v)| v).sum();
    Ok(HistoricalPortfolio {
        start,
        end,
        symbols: ranked.iter().map(|(s, _)| s.to_string()).collect(),
        weights: ranked.iter().map(|(_, v)| v / norm).collect(),
    })
}
