//! Price ingestion, return computation, and risk-model estimation.
//!
//! Prices arrive as a long-format CSV (`date,symbol,close_usd`). They are held
//! sparsely in a [`PriceHistory`] and aligned into a dense [`PriceTable`] on
//! the intersection of the requested symbols' dates. Everything downstream
//! works on daily log returns.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};

/// Crypto trades every calendar day.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Eigenvalues below `-PSD_TOLERANCE` trigger a repair.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Minimum fraction of a requested window a symbol must cover.
pub const MIN_COVERAGE: f64 = 0.9;

const PRICES_HEADER: [&str; 3] = ["date", "symbol", "close_usd"];

/// Sparse per-symbol daily close prices, as read from the prices CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceHistory {
    series: BTreeMap<String, BTreeMap<NaiveDate, f64>>,
}

impl PriceHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    /// Parses the prices CSV. `source_name` only labels error messages.
    pub fn from_reader<R: Read>(reader: R, source_name: impl AsRef<Path>) -> Result<Self> {
        let source_name = source_name.as_ref();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != PRICES_HEADER {
            return Err(Error::parse(
                source_name,
                1,
                format!("expected header `{}`", PRICES_HEADER.join(",")),
            ));
        }
        let mut history = PriceHistory::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::parse(source_name, line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 3 {
                return Err(Error::parse(source_name, line, "expected 3 fields"));
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
                .map_err(|e| Error::parse(source_name, line, format!("bad date `{}`: {e}", &record[0])))?;
            let symbol = &record[1];
            if symbol.is_empty() {
                return Err(Error::parse(source_name, line, "empty symbol"));
            }
            let price: f64 = record[2]
                .parse()
                .map_err(|e| Error::parse(source_name, line, format!("bad price `{}`: {e}", &record[2])))?;
            if !(price.is_finite() && price > 0.0) {
                return Err(Error::Domain(format!(
                    "{}:{line}: price for {symbol} on {date} must be positive and finite, got {}",
                    source_name.display(),
                    &record[2]
                )));
            }
            if history.series.entry(symbol.to_string()).or_default().insert(date, price).is_some() {
                return Err(Error::parse(
                    source_name,
                    line,
                    format!("duplicate row for ({date}, {symbol})"),
                ));
            }
        }
        Ok(history)
    }

    /// Writes the prices CSV, sorted by date then symbol.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut rows: Vec<(NaiveDate, &str, f64)> = self
            .series
            .iter()
            .flat_map(|(s, series)| series.iter().map(move |(d, p)| (*d, s.as_str(), *p)))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(PRICES_HEADER)?;
        for (d, s, p) in rows {
            w.write_record([d.to_string(), s.to_string(), p.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<prices csv>", e))
    }

    /// Inserts a single observation. Rejects non-positive or non-finite prices.
    pub fn insert(&mut self, symbol: &str, date: NaiveDate, price: f64) -> Result<()> {
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Domain(format!(
                "price for {symbol} on {date} must be positive and finite, got {price}"
            )));
        }
        self.series.entry(symbol.to_string()).or_default().insert(date, price);
        Ok(())
    }

    pub fn symbols(&self) -> Vec<String> {
        self.series.keys().cloned().collect()
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.series.contains_key(symbol)
    }

    pub fn price(&self, symbol: &str, date: NaiveDate) -> Option<f64> {
        self.series.get(symbol)?.get(&date).copied()
    }

    pub fn series(&self, symbol: &str) -> Option<&BTreeMap<NaiveDate, f64>> {
        self.series.get(symbol)
    }

    /// First and last date across the given symbols.
    pub fn span(&self, symbols: &[String]) -> Option<(NaiveDate, NaiveDate)> {
        let mut first: Option<NaiveDate> = None;
        let mut last: Option<NaiveDate> = None;
        for s in symbols {
            if let Some(series) = self.series.get(s) {
                if let (Some((&a, _)), Some((&b, _))) = (series.first_key_value(), series.last_key_value()) {
                    first = Some(first.map_or(a, |f| f.min(a)));
                    last = Some(last.map_or(b, |l| l.max(b)));
                }
            }
        }
        first.zip(last)
    }

    /// Aligns `symbols` on the intersection of their dates within `range`.
    ///
    /// Each symbol must cover at least [`MIN_COVERAGE`] of the window's
    /// calendar days. The window is `range` when given, otherwise the span of
    /// the requested symbols.
    pub fn align(&self, symbols: &[String], range: Option<(NaiveDate, NaiveDate)>) -> Result<PriceTable> {
        if symbols.is_empty() {
            return Err(Error::EmptyUniverse("no symbols requested".into()));
        }
        let (start, end) = match range {
            Some(r) => r,
            None => self
                .span(symbols)
                .ok_or_else(|| Error::Coverage(format!("no price data for {}", symbols.join(", "))))?,
        };
        if start > end {
            return Err(Error::Domain(format!("empty date range {start}..{end}")));
        }
        let window_days = (end - start).num_days() + 1;
        let mut common: Option<BTreeSet<NaiveDate>> = None;
        for symbol in symbols {
            let series = self
                .series
                .get(symbol)
                .ok_or_else(|| Error::Coverage(format!("{symbol}: no price data")))?;
            let dates: BTreeSet<NaiveDate> = series.range(start..=end).map(|(d, _)| *d).collect();
            if dates.is_empty() {
                return Err(Error::Coverage(format!("{symbol}: no dates within {start}..={end}")));
            }
            let coverage = dates.len() as f64 / window_days as f64;
            if coverage < MIN_COVERAGE {
                return Err(Error::Coverage(format!(
                    "{symbol}: covers {} of {window_days} days in {start}..={end} ({:.1}% < {:.0}%)",
                    dates.len(),
                    coverage * 100.0,
                    MIN_COVERAGE * 100.0
                )));
            }
            common = Some(match common {
                None => dates,
                Some(c) => c.intersection(&dates).copied().collect(),
            });
        }
        let dates: Vec<NaiveDate> = common.unwrap_or_default().into_iter().collect();
        if dates.is_empty() {
            return Err(Error::Coverage(format!(
                "symbols {} share no dates within {start}..={end}",
                symbols.join(", ")
            )));
        }
        let prices = DMatrix::from_fn(dates.len(), symbols.len(), |t, i| self.series[&symbols[i]][&dates[t]]);
        PriceTable::new(dates, symbols.to_vec(), prices)
    }
}

/// Dense, aligned daily close prices. Rows are dates, columns symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    prices: DMatrix<f64>,
}

impl PriceTable {
    pub fn new(dates: Vec<NaiveDate>, symbols: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != symbols.len() {
            return Err(Error::Domain(format!(
                "price matrix is {}x{}, expected {}x{}",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                symbols.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!("dates not strictly increasing at {}", w[1])));
        }
        if let Some((idx, p)) = prices.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
            let (t, i) = (idx % dates.len(), idx / dates.len());
            return Err(Error::Domain(format!(
                "price for {} on {} must be positive and finite, got {p}",
                symbols[i], dates[t]
            )));
        }
        Ok(Self { dates, symbols, prices })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    /// Column indices for `symbols`, or a coverage error naming the first missing one.
    pub fn column_indices(&self, symbols: &[String]) -> Result<Vec<usize>> {
        symbols
            .iter()
            .map(|s| {
                self.symbol_index(s)
                    .ok_or_else(|| Error::Coverage(format!("{s}: not present in price table")))
            })
            .collect()
    }

    /// Restricts the table to the given symbols, keeping all dates.
    pub fn select(&self, symbols: &[String]) -> Result<PriceTable> {
        let cols = self.column_indices(symbols)?;
        let prices = DMatrix::from_fn(self.n_dates(), cols.len(), |t, j| self.prices[(t, cols[j])]);
        Ok(PriceTable {
            dates: self.dates.clone(),
            symbols: symbols.to_vec(),
            prices,
        })
    }
}

/// Loads the prices CSV and aligns every symbol in it over `date_range`.
pub fn load_prices(path: impl AsRef<Path>, date_range: Option<(NaiveDate, NaiveDate)>) -> Result<PriceTable> {
    let history = PriceHistory::from_path(path)?;
    history.align(&history.symbols(), date_range)
}

/// Daily log returns over a contiguous window of a [`PriceTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    symbols: Vec<String>,
    returns: DMatrix<f64>,
    window: (NaiveDate, NaiveDate),
}

impl ReturnMatrix {
    /// Builds a return matrix directly, e.g. from synthetic scenarios.
    pub fn new(symbols: Vec<String>, returns: DMatrix<f64>, window: (NaiveDate, NaiveDate)) -> Result<Self> {
        if returns.ncols() != symbols.len() {
            return Err(Error::Domain(format!(
                "{} return columns for {} symbols",
                returns.ncols(),
                symbols.len()
            )));
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::Domain("non-finite return".into()));
        }
        Ok(Self { symbols, returns, window })
    }

    /// Convenience constructor for scenario matrices without calendar dates.
    pub fn from_scenarios(returns: DMatrix<f64>) -> Result<Self> {
        let symbols = (0..returns.ncols()).map(|i| format!("A{i}")).collect();
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
        Self::new(symbols, returns, (epoch, epoch))
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_obs(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn window(&self) -> (NaiveDate, NaiveDate) {
        self.window
    }

    /// Portfolio return series `r_p(t) = sum_i w_i r_i(t)`.
    pub fn portfolio_returns(&self, weights: &[f64]) -> Result<DVector<f64>> {
        if weights.len() != self.n_assets() {
            return Err(Error::Domain(format!(
                "{} weights for {} assets",
                weights.len(),
                self.n_assets()
            )));
        }
        Ok(&self.returns * DVector::from_column_slice(weights))
    }

    /// Returns with each column's mean subtracted.
    pub fn demeaned(&self) -> DMatrix<f64> {
        let t = self.n_obs() as f64;
        let mut d = self.returns.clone();
        for mut col in d.column_iter_mut() {
            let mean = col.sum() / t;
            col.add_scalar_mut(-mean);
        }
        d
    }
}

/// Log returns over the dates of `table` that fall within `window` (inclusive).
pub fn log_returns(table: &PriceTable, window: (NaiveDate, NaiveDate)) -> Result<ReturnMatrix> {
    let (start, end) = window;
    let first = table.dates.partition_point(|d| *d < start);
    let last = table.dates.partition_point(|d| *d <= end);
    if last < first + 2 {
        return Err(Error::InsufficientData(format!(
            "window {start}..={end} contains {} price dates, need at least 2",
            last.saturating_sub(first)
        )));
    }
    log_returns_by_index(table, first, last - 1)
}

/// Log returns between row `first` and row `last` (inclusive) of `table`.
pub fn log_returns_by_index(table: &PriceTable, first: usize, last: usize) -> Result<ReturnMatrix> {
    if last <= first || last >= table.n_dates() {
        return Err(Error::InsufficientData(format!(
            "row window {first}..={last} of a {}-date table",
            table.n_dates()
        )));
    }
    let p = &table.prices;
    let returns = DMatrix::from_fn(last - first, table.symbols.len(), |t, i| {
        (p[(first + t + 1, i)] / p[(first + t, i)]).ln()
    });
    ReturnMatrix::new(table.symbols.clone(), returns, (table.dates[first], table.dates[last]))
}

/// Mean, covariance and semicovariance of a [`ReturnMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    pub symbols: Vec<String>,
    /// Mean daily log return per symbol.
    pub mu: DVector<f64>,
    /// Sample covariance, divisor `T - 1`.
    pub cov: DMatrix<f64>,
    /// Below-mean co-moment, divisor `T`.
    pub semicov: DMatrix<f64>,
    pub window_days: usize,
    /// True when negative eigenvalues were clipped from `cov` or `semicov`.
    pub psd_repaired: bool,
}

impl RiskModel {
    /// Wraps an externally supplied mean and covariance. The semicovariance
    /// is set to half the covariance, its value for symmetric return
    /// distributions.
    pub fn from_moments(symbols: Vec<String>, mu: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = symbols.len();
        if mu.len() != m || cov.nrows() != m || cov.ncols() != m {
            return Err(Error::Domain(format!("moments do not match {m} symbols")));
        }
        if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite moment".into()));
        }
        if !is_symmetric(&cov) {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let min_eig = min_eigenvalue(&cov);
        if min_eig < -PSD_TOLERANCE {
            return Err(Error::Domain(format!(
                "covariance is not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        let semicov = &cov * 0.5;
        Ok(Self {
            symbols,
            mu,
            cov,
            semicov,
            window_days: 0,
            psd_repaired: false,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.symbols.len()
    }

    /// Restricts the model to a subset of its symbols.
    pub fn select(&self, symbols: &[String]) -> Result<RiskModel> {
        let idx: Vec<usize> = symbols
            .iter()
            .map(|s| {
                self.symbols
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| Error::Coverage(format!("{s}: not in risk model")))
            })
            .collect::<Result<_>>()?;
        let k = idx.len();
        Ok(RiskModel {
            symbols: symbols.to_vec(),
            mu: DVector::from_fn(k, |i, _| self.mu[idx[i]]),
            cov: DMatrix::from_fn(k, k, |i, j| self.cov[(idx[i], idx[j])]),
            semicov: DMatrix::from_fn(k, k, |i, j| self.semicov[(idx[i], idx[j])]),
            window_days: self.window_days,
            psd_repaired: self.psd_repaired,
        })
    }
}

pub fn estimate_risk_model(returns: &ReturnMatrix) -> Result<RiskModel> {
    let t = returns.n_obs();
    if t < 2 {
        return Err(Error::InsufficientData(format!(
            "risk model needs at least 2 observations, got {t}"
        )));
    }
    let m = returns.n_assets();
    let r = returns.returns();
    let mu = DVector::from_fn(m, |i, _| r.column(i).sum() / t as f64);
    let dev = returns.demeaned();
    let mut cov = dev.transpose() * &dev / (t as f64 - 1.0);
    let downside = dev.map(|x| x.min(0.0));
    let mut semicov = downside.transpose() * &downside / t as f64;
    symmetrize(&mut cov);
    symmetrize(&mut semicov);
    let repaired_cov = repair_psd(&mut cov);
    let repaired_semi = repair_psd(&mut semicov);
    Ok(RiskModel {
        symbols: returns.symbols().to_vec(),
        mu,
        cov,
        semicov,
        window_days: t,
        psd_repaired: repaired_cov || repaired_semi,
    })
}

/// Draws a uniformly random window spanning `length_days + 1` dates of
/// `table`. Returns the window's first and last date.
pub fn sample_window<R: Rng + ?Sized>(
    table: &PriceTable,
    length_days: usize,
    rng: &mut R,
) -> Result<(NaiveDate, NaiveDate)> {
    let start = sample_window_start(table.n_dates(), length_days, rng)?;
    Ok((table.dates[start], table.dates[start + length_days]))
}

/// Row index of the first date of a uniformly drawn window.
pub fn sample_window_start<R: Rng + ?Sized>(n_dates: usize, length_days: usize, rng: &mut R) -> Result<usize> {
    if length_days == 0 {
        return Err(Error::Domain("window length must be positive".into()));
    }
    if n_dates < length_days + 1 {
        return Err(Error::InsufficientData(format!(
            "a {length_days}-day window needs {} dates, table has {n_dates}",
            length_days + 1
        )));
    }
    Ok(rng.random_range(0..=n_dates - 1 - length_days))
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Clips eigenvalues below `-PSD_TOLERANCE` to zero. Returns whether a repair happened.
fn repair_psd(m: &mut DMatrix<f64>) -> bool {
    if m.is_empty() {
        return false;
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.min() >= -PSD_TOLERANCE {
        return false;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    *m = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(m);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn csv_for(rows: &[(NaiveDate, &str, f64)]) -> String {
        let mut s = String::from("date,symbol,close_usd\n");
        for (date, sym, p) in rows {
            s.push_str(&format!("{date},{sym},{p}\n"));
        }
        s
    }

    #[test]
    fn full_coverage_needs_no_alignment() {
        let start = d(2022, 1, 1);
        let mut rows = Vec::new();
        for k in 0..20 {
            let date = start + chrono::Days::new(k);
            for (sym, base) in [("BTC", 40000.0), ("ETH", 3000.0), ("LINK", 20.0)] {
                rows.push((date, sym, base + k as f64));
            }
        }
        let history = PriceHistory::from_reader(csv_for(&rows).as_bytes(), "p.csv").unwrap();
        let table = history.align(&history.symbols(), None).unwrap();
        assert_eq!(table.n_dates(), 20);
        assert_eq!(table.symbols(), ["BTC", "ETH", "LINK"]);
        assert_eq!(table.prices()[(3, 1)], 3003.0);
    }

    #[test]
    fn missing_tail_truncates_to_common_prefix() {
        let start = d(2022, 1, 1);
        let mut rows = Vec::new();
        for k in 0..100 {
            let date = start + chrono::Days::new(k);
            rows.push((date, "BTC", 100.0 + k as f64));
            if k < 90 {
                rows.push((date, "ETH", 10.0 + k as f64));
            }
        }
        let history = PriceHistory::from_reader(csv_for(&rows).as_bytes(), "p.csv").unwrap();
        let table = history.align(&history.symbols(), None).unwrap();
        assert_eq!(table.n_dates(), 90);
        assert_eq!(*table.dates().last().unwrap(), start + chrono::Days::new(89));
    }

    #[test]
    fn zero_price_is_a_domain_error() {
        let text = "date,symbol,close_usd\n2022-01-01,BTC,0.0\n";
        let err = PriceHistory::from_reader(text.as_bytes(), "p.csv").unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = "date,symbol,close_usd\n2022-01-01,BTC,1.0\n2022-13-01,BTC,1.0\n";
        let err = PriceHistory::from_reader(text.as_bytes(), "p.csv").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn symbol_outside_range_is_a_coverage_error() {
        let rows = [(d(2022, 1, 1), "BTC", 1.0), (d(2023, 1, 1), "ETH", 1.0)];
        let history = PriceHistory::from_reader(csv_for(&rows).as_bytes(), "p.csv").unwrap();
        let err = history
            .align(&["BTC".into(), "ETH".into()], Some((d(2022, 1, 1), d(2022, 1, 1))))
            .unwrap_err();
        assert!(matches!(err, Error::Coverage(ref m) if m.contains("ETH")), "{err}");
    }

    #[test]
    fn sparse_symbol_is_rejected_below_ninety_percent() {
        let start = d(2022, 1, 1);
        let mut rows = Vec::new();
        for k in 0..100 {
            let date = start + chrono::Days::new(k);
            rows.push((date, "BTC", 1.0));
            if k % 5 != 0 {
                rows.push((date, "ETH", 1.0));
            }
        }
        let history = PriceHistory::from_reader(csv_for(&rows).as_bytes(), "p.csv").unwrap();
        let err = history.align(&history.symbols(), None).unwrap_err();
        assert!(matches!(err, Error::Coverage(ref m) if m.starts_with("ETH")), "{err}");
    }

    fn table_from_columns(cols: &[Vec<f64>]) -> PriceTable {
        let n = cols[0].len();
        let dates = (0..n).map(|k| d(2021, 1, 1) + chrono::Days::new(k as u64)).collect();
        let symbols = (0..cols.len()).map(|i| format!("S{i}")).collect();
        PriceTable::new(dates, symbols, DMatrix::from_fn(n, cols.len(), |t, i| cols[i][t])).unwrap()
    }

    #[test]
    fn log_return_edge_cases() {
        let table = table_from_columns(&[vec![5.0; 31], (0..31).map(|k| 2f64.powi(k)).collect()]);
        let (first, last) = (table.dates()[0], table.dates()[30]);
        let r = log_returns(&table, (first, last)).unwrap();
        assert_eq!(r.n_obs(), 30);
        assert!(r.returns().column(0).iter().all(|x| *x == 0.0));
        assert!((r.returns()[(0, 1)] - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((r.returns()[(0, 1)] - 0.6931).abs() < 1e-4);

        let err = log_returns(&table, (first, first)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn risk_model_needs_two_observations() {
        let r = ReturnMatrix::from_scenarios(DMatrix::from_row_slice(1, 2, &[0.1, 0.2])).unwrap();
        assert!(matches!(estimate_risk_model(&r), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn alternating_column_semivariance_is_half_the_biased_variance() {
        // r = +x, -x, ... (T even): mean 0, sum of squares T x^2.
        // cov = T x^2 / (T - 1); semicov = (T/2) x^2 / T = x^2 / 2,
        // so semicov = cov (T - 1) / (2T).
        let x = 0.03;
        let t = 10;
        let r = DMatrix::from_fn(t, 1, |k, _| if k % 2 == 0 { x } else { -x });
        let model = estimate_risk_model(&ReturnMatrix::from_scenarios(r).unwrap()).unwrap();
        let cov = model.cov[(0, 0)];
        let semi = model.semicov[(0, 0)];
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        assert!(close(cov, t as f64 * x * x / (t as f64 - 1.0)));
        assert!(close(semi, x * x / 2.0));
        assert!(close(semi, cov * (t as f64 - 1.0) / (2.0 * t as f64)));
    }

    #[test]
    fn single_downside_observation_drives_semivariance() {
        // r = (1, 1, 1, 1, -4): mean 0, deviations (1,1,1,1,-4).
        // Only the last observation is below the mean: semicov = 16 / 5.
        let r = DMatrix::from_column_slice(5, 1, &[1.0, 1.0, 1.0, 1.0, -4.0]);
        let model = estimate_risk_model(&ReturnMatrix::from_scenarios(r).unwrap()).unwrap();
        assert!((model.semicov[(0, 0)] - 16.0 / 5.0).abs() < 1e-12);
        assert!((model.cov[(0, 0)] - 20.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_columns_are_perfectly_correlated() {
        let col = [0.01, -0.02, 0.005, 0.03, -0.01, 0.0];
        let r = DMatrix::from_fn(6, 2, |t, _| col[t]);
        let model = estimate_risk_model(&ReturnMatrix::from_scenarios(r).unwrap()).unwrap();
        let corr = model.cov[(0, 1)] / (model.cov[(0, 0)] * model.cov[(1, 1)]).sqrt();
        assert!((corr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psd_repair_is_recorded() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(repair_psd(&mut m));
        assert!(min_eigenvalue(&m) >= -1e-12);
        let mut ok = DMatrix::identity(2, 2);
        assert!(!repair_psd(&mut ok));
    }

    #[test]
    fn sample_window_is_forced_when_table_is_exact() {
        let table = table_from_columns(&[vec![1.0; 11]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let w = sample_window(&table, 10, &mut rng).unwrap();
            assert_eq!(w, (table.dates()[0], table.dates()[10]));
        }
        assert!(matches!(
            sample_window(&table, 11, &mut rng),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn sample_window_is_deterministic_given_seed() {
        let table = table_from_columns(&[vec![1.0; 500]]);
        let a = sample_window(&table, 30, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_window(&table, 30, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }
}
