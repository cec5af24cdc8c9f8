//! Minimum-variance and minimum-semivariance collateral portfolios on the
//! capped simplex `{Σa = 1, 0 ≤ a ≤ λ}`, plus the efficient frontier.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::{is_symmetric, min_eigenvalue, ReturnMatrix, RiskModel, DAYS_PER_YEAR, PSD_TOLERANCE};
use crate::qp::{
    accelerated_projected_gradient, check_caps, max_eigenvalue, project_capped_simplex, projected_gradient_residual,
    uniform_start, ActiveSetQp, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE,
};

/// Tolerances of the [`Portfolio`] invariants.
pub const SUM_TOLERANCE: f64 = 1e-8;
pub const BOX_TOLERANCE: f64 = 1e-10;

/// Token weights with per-token caps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Portfolio {
    symbols: Vec<String>,
    weights: Vec<f64>,
    caps: Vec<f64>,
}

impl Portfolio {
    pub fn new(symbols: Vec<String>, weights: Vec<f64>, caps: Vec<f64>) -> Result<Self> {
        if symbols.len() != weights.len() || symbols.len() != caps.len() {
            return Err(Error::Domain(format!(
                "{} symbols, {} weights, {} caps",
                symbols.len(),
                weights.len(),
                caps.len()
            )));
        }
        if symbols.is_empty() {
            return Err(Error::EmptyPortfolio("no symbols".into()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::Domain(format!("duplicate symbol {s}")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
        }
        for ((s, w), c) in symbols.iter().zip(&weights).zip(&caps) {
            if !(w.is_finite() && *w >= 0.0 && *w <= c + BOX_TOLERANCE) {
                return Err(Error::Domain(format!("{s}: weight {w} outside [0, {c}]")));
            }
        }
        let cap_total: f64 = caps.iter().sum();
        if cap_total < 1.0 - SUM_TOLERANCE {
            return Err(Error::Infeasible(format!("caps sum to {cap_total} < 1")));
        }
        Ok(Self { symbols, weights, caps })
    }

    /// A portfolio with every cap at 1, e.g. an observed historical mix.
    pub fn uncapped(symbols: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let caps = vec![1.0; symbols.len()];
        Self::new(symbols, weights, caps)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn weight_of(&self, symbol: &str) -> Option<f64> {
        self.symbols.iter().position(|s| s == symbol).map(|i| self.weights[i])
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path)
    }

    /// Reads `symbol,weight,cap` rows. The cap column may be omitted.
    pub fn read_csv<R: Read>(reader: R, source_name: impl AsRef<Path>) -> Result<Self> {
        let source = source_name.as_ref();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let with_caps = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            ["symbol", "weight", "cap"] => true,
            ["symbol", "weight"] => false,
            _ => return Err(Error::parse(source, 1, "expected header `symbol,weight,cap`")),
        };
        let (mut symbols, mut weights, mut caps) = (Vec::new(), Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| Error::parse(source, e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let number = |i: usize| -> Result<f64> {
                let field = record.get(i).unwrap_or("");
                field
                    .parse()
                    .map_err(|_| Error::parse(source, line, format!("`{field}` is not a number")))
            };
            symbols.push(record.get(0).unwrap_or("").to_string());
            weights.push(number(1)?);
            caps.push(if with_caps { number(2)? } else { 1.0 });
        }
        Self::new(symbols, weights, caps)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["symbol", "weight", "cap"])?;
        for ((s, weight), cap) in self.symbols.iter().zip(&self.weights).zip(&self.caps) {
            w.write_record([s.clone(), weight.to_string(), cap.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<portfolio csv>", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverFlag {
    /// The optimal objective is zero, so the minimizer need not be unique.
    /// The returned point is the one reached from the uniform start.
    DegenerateObjective,
    /// The iteration limit was reached before the KKT tolerance.
    IterationLimit,
    /// The exact scenario method stalled and projected gradient finished the job.
    GradientFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub objective: f64,
    /// Projected-gradient residual `‖a − Π(a − ∇f/L)‖∞`.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub flags: Vec<SolverFlag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub portfolio: Portfolio,
    pub report: SolverReport,
}

fn check_psd(cov: &DMatrix<f64>) -> Result<()> {
    if !is_symmetric(cov) {
        return Err(Error::Domain("covariance is not symmetric".into()));
    }
    let min_eig = min_eigenvalue(cov);
    if min_eig < -PSD_TOLERANCE {
        return Err(Error::Domain(format!(
            "covariance is not positive semidefinite (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

fn check_dims(n: usize, caps: &[f64]) -> Result<()> {
    if caps.len() != n {
        return Err(Error::Domain(format!("{} caps for {n} assets", caps.len())));
    }
    check_caps(caps)
}

/// Global minimizer of `aᵀCa` on the capped simplex.
pub fn min_variance(model: &RiskModel, caps: &[f64]) -> Result<Solution> {
    let (weights, report) = minimize_quadratic(&model.cov, caps)?;
    Ok(Solution {
        portfolio: Portfolio::new(model.symbols.clone(), weights, caps.to_vec())?,
        report,
    })
}

/// Minimizes `aᵀQa` on the capped simplex for any PSD `Q`, starting from the
/// projected uniform portfolio.
pub fn minimize_quadratic(q: &DMatrix<f64>, caps: &[f64]) -> Result<(Vec<f64>, SolverReport)> {
    check_dims(q.nrows(), caps)?;
    check_psd(q)?;
    let x0 = uniform_start(caps)?;
    let qp = ActiveSetQp::capped_simplex(q, caps);
    let sol = qp.solve(&DVector::from_column_slice(&x0))?;
    let mut weights = clean_weights(sol.x.as_slice(), caps)?;
    let lipschitz = 2.0 * max_eigenvalue(q);
    let grad = |x: &[f64]| -> Vec<f64> { (q * DVector::from_column_slice(x) * 2.0).iter().copied().collect() };
    let mut kkt = projected_gradient_residual(&weights, &grad(&weights), lipschitz, caps)?;
    let mut iterations = sol.iterations;
    let mut flags = Vec::new();
    if kkt > DEFAULT_TOLERANCE {
        let run = accelerated_projected_gradient(grad, lipschitz, &weights, caps, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)?;
        weights = clean_weights(&run.x, caps)?;
        kkt = run.residual;
        iterations += run.iterations;
        flags.push(SolverFlag::GradientFallback);
        if !run.converged {
            flags.push(SolverFlag::IterationLimit);
        }
    }
    let a = DVector::from_column_slice(&weights);
    let objective = a.dot(&(q * &a));
    if lipschitz == 0.0 || objective == 0.0 {
        flags.push(SolverFlag::DegenerateObjective);
    }
    Ok((
        weights,
        SolverReport {
            objective,
            kkt_residual: kkt,
            iterations,
            flags,
        },
    ))
}

/// Clamps rounding noise into the box and restores `Σa = 1`.
fn clean_weights(x: &[f64], caps: &[f64]) -> Result<Vec<f64>> {
    let clamped: Vec<f64> = x.iter().zip(caps).map(|(v, c)| v.clamp(0.0, *c)).collect();
    let total: f64 = clamped.iter().sum();
    if (total - 1.0).abs() <= 1e-14 {
        return Ok(clamped);
    }
    project_capped_simplex(&clamped, caps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SemivarianceMethod {
    /// Exact scenario formulation: `min (1/T) Σ d_t²` with
    /// `d_t ≥ μ_p − r_p(t)`, `d_t ≥ 0`.
    #[default]
    Scenario,
    /// Approximation `aᵀSa` with the below-mean co-moment matrix `S`.
    Semicovariance,
}

/// Portfolio semivariance `(1/T) Σ_t min(r_p(t) − μ_p, 0)²`.
pub fn portfolio_semivariance(returns: &ReturnMatrix, weights: &[f64]) -> Result<f64> {
    let rp = returns.portfolio_returns(weights)?;
    let t = rp.len() as f64;
    let mean = rp.sum() / t;
    Ok(rp.iter().map(|r| (r - mean).min(0.0).powi(2)).sum::<f64>() / t)
}

/// Portfolio variance with divisor `T`.
pub fn portfolio_variance_population(returns: &ReturnMatrix, weights: &[f64]) -> Result<f64> {
    let rp = returns.portfolio_returns(weights)?;
    let t = rp.len() as f64;
    let mean = rp.sum() / t;
    Ok(rp.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / t)
}

/// Minimum-semivariance portfolio over the scenarios in `returns`.
pub fn min_semivariance(returns: &ReturnMatrix, caps: &[f64]) -> Result<Solution> {
    min_semivariance_with(returns, caps, SemivarianceMethod::Scenario)
}

pub fn min_semivariance_with(returns: &ReturnMatrix, caps: &[f64], method: SemivarianceMethod) -> Result<Solution> {
    if returns.n_obs() < 2 {
        return Err(Error::InsufficientData(format!(
            "semivariance needs at least 2 observations, got {}",
            returns.n_obs()
        )));
    }
    check_dims(returns.n_assets(), caps)?;
    let (weights, mut report) = match method {
        SemivarianceMethod::Scenario => scenario_semivariance(returns, caps)?,
        SemivarianceMethod::Semicovariance => {
            let model = crate::market_data::estimate_risk_model(returns)?;
            minimize_quadratic(&model.semicov, caps)?
        }
    };
    // Report the exact semivariance regardless of the method used.
    report.objective = portfolio_semivariance(returns, &weights)?;
    Ok(Solution {
        portfolio: Portfolio::new(returns.symbols().to_vec(), weights, caps.to_vec())?,
        report,
    })
}

/// Scenario semivariance with the downside variables eliminated:
/// `f(a) = (1/T) Σ max(−(Da)_t, 0)²` for demeaned returns `D`. On a fixed
/// set of downside scenarios `f` is the quadratic `(1/T)‖D_S a‖²`; each outer
/// step solves that QP exactly and line-searches the true objective toward it.
fn scenario_semivariance(returns: &ReturnMatrix, caps: &[f64]) -> Result<(Vec<f64>, SolverReport)> {
    let d = returns.demeaned();
    let t = d.nrows() as f64;
    let lipschitz = 2.0 / t * max_eigenvalue(&(d.transpose() * &d));
    let objective = |a: &DVector<f64>| -> f64 { (&d * a).iter().map(|v| v.min(0.0).powi(2)).sum::<f64>() / t };
    let gradient = |a: &[f64]| -> Vec<f64> {
        let shortfall = (&d * DVector::from_column_slice(a)).map(|v| v.min(0.0));
        (d.transpose() * shortfall * (2.0 / t)).iter().copied().collect()
    };

    let mut a = DVector::from_column_slice(&uniform_start(caps)?);
    let mut iterations = 0;
    let mut flags = Vec::new();
    if lipschitz == 0.0 {
        flags.push(SolverFlag::DegenerateObjective);
        return Ok((
            a.iter().copied().collect(),
            SolverReport {
                objective: 0.0,
                kkt_residual: 0.0,
                iterations,
                flags,
            },
        ));
    }
    let residual = |a: &DVector<f64>| projected_gradient_residual(a.as_slice(), &gradient(a.as_slice()), lipschitz, caps);
    let mut kkt = residual(&a)?;
    for _ in 0..200 {
        if kkt <= DEFAULT_TOLERANCE * 1e-3 {
            break;
        }
        let u = &d * &a;
        let downside: Vec<usize> = (0..u.len()).filter(|&k| u[k] < 0.0).collect();
        if downside.is_empty() {
            break;
        }
        let ds = DMatrix::from_fn(downside.len(), d.ncols(), |r, c| d[(downside[r], c)]);
        let q = ds.transpose() * &ds / t;
        let qp = ActiveSetQp::capped_simplex(&q, caps);
        let sol = qp.solve(&a)?;
        iterations += sol.iterations;
        let step = &sol.x - &a;
        if step.amax() <= 1e-15 {
            break;
        }
        let s = line_search_downside(&u, &(&d * &step));
        if s <= 0.0 {
            break;
        }
        let candidate = &a + step * s;
        if objective(&candidate) > objective(&a) {
            break;
        }
        a = DVector::from_column_slice(&clean_weights(candidate.as_slice(), caps)?);
        kkt = residual(&a)?;
    }
    let mut weights: Vec<f64> = a.iter().copied().collect();
    if kkt > DEFAULT_TOLERANCE {
        let run = accelerated_projected_gradient(gradient, lipschitz, &weights, caps, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)?;
        weights = clean_weights(&run.x, caps)?;
        kkt = run.residual;
        iterations += run.iterations;
        flags.push(SolverFlag::GradientFallback);
        if !run.converged {
            flags.push(SolverFlag::IterationLimit);
        }
    }
    let value = objective(&DVector::from_column_slice(&weights));
    if value == 0.0 {
        flags.push(SolverFlag::DegenerateObjective);
    }
    Ok((
        weights,
        SolverReport {
            objective: value,
            kkt_residual: kkt,
            iterations,
            flags,
        },
    ))
}

/// Minimizes `φ(s) = Σ min(u_t + s w_t, 0)²` over `s ∈ [0, 1]`. `φ` is convex
/// and piecewise quadratic, so its derivative is monotone and bisection on
/// the derivative followed by an exact solve on the final piece is exact.
fn line_search_downside(u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let slope = |s: f64| -> f64 { u.iter().zip(w).map(|(ui, wi)| (ui + s * wi).min(0.0) * wi).sum() };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Solve the linear slope on the active piece at the midpoint.
    let mid = 0.5 * (lo + hi);
    let (mut num, mut den) = (0.0, 0.0);
    for (ui, wi) in u.iter().zip(w) {
        if ui + mid * wi < 0.0 {
            num += ui * wi;
            den += wi * wi;
        }
    }
    if den > 0.0 {
        let s = -num / den;
        if s >= lo && s <= hi {
            return s;
        }
    }
    mid
}

/// One point on the efficient frontier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    /// Annualized expected log return, `365 μᵀa`.
    pub target_return: f64,
    /// Annualized volatility, `√(365 aᵀCa)`.
    pub volatility: f64,
    pub weights: Vec<f64>,
    /// `None` when the volatility is zero.
    pub sharpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FrontierEntry {
    Point(FrontierPoint),
    /// The target lies outside the range achievable under the caps.
    Infeasible { target_return: f64 },
}

impl FrontierEntry {
    pub fn point(&self) -> Option<&FrontierPoint> {
        match self {
            FrontierEntry::Point(p) => Some(p),
            FrontierEntry::Infeasible { .. } => None,
        }
    }

    pub fn target_return(&self) -> f64 {
        match self {
            FrontierEntry::Point(p) => p.target_return,
            FrontierEntry::Infeasible { target_return } => *target_return,
        }
    }
}

/// Frontier at `n_points` equally spaced annual returns from the
/// minimum-variance portfolio's return to the largest return reachable under
/// the caps.
pub fn efficient_frontier(model: &RiskModel, caps: &[f64], n_points: usize, risk_free: f64) -> Result<Vec<FrontierEntry>> {
    if n_points < 2 {
        return Err(Error::Domain(format!("n_points must be at least 2, got {n_points}")));
    }
    let (low, high) = frontier_bounds(model, caps)?;
    let targets: Vec<f64> = (0..n_points)
        .map(|k| {
            if k == n_points - 1 {
                high
            } else {
                low + (high - low) * k as f64 / (n_points - 1) as f64
            }
        })
        .collect();
    frontier_at_targets(model, caps, &targets, risk_free)
}

/// Annual return of the minimum-variance portfolio and the maximum annual
/// return achievable under the caps.
pub fn frontier_bounds(model: &RiskModel, caps: &[f64]) -> Result<(f64, f64)> {
    let mv = min_variance(model, caps)?;
    let low = DAYS_PER_YEAR * dot(&model.mu, mv.portfolio.weights());
    let high = DAYS_PER_YEAR * dot(&model.mu, &max_return_weights(&model.mu, caps));
    Ok((low, high.max(low)))
}

/// Frontier points at explicit annual return targets. Targets outside the
/// achievable range come back as [`FrontierEntry::Infeasible`]. Targets below
/// the minimum-variance return are solved with the equality constraint like
/// any other.
pub fn frontier_at_targets(model: &RiskModel, caps: &[f64], targets: &[f64], risk_free: f64) -> Result<Vec<FrontierEntry>> {
    use rayon::prelude::*;

    check_dims(model.n_assets(), caps)?;
    check_psd(&model.cov)?;
    let mv = min_variance(model, caps)?;
    let mv_weights = mv.portfolio.weights().to_vec();
    let max_weights = max_return_weights(&model.mu, caps);
    let min_weights = max_return_weights(&(-&model.mu), caps);
    let mv_ret = dot(&model.mu, &mv_weights);
    let max_ret = dot(&model.mu, &max_weights);
    let min_ret = dot(&model.mu, &min_weights);
    let spread = max_ret - min_ret;
    let tol = 1e-12 * model.mu.amax().max(f64::MIN_POSITIVE);

    targets
        .par_iter()
        .map(|&annual| {
            let target = annual / DAYS_PER_YEAR;
            if target > max_ret + tol || target < min_ret - tol {
                return Ok(FrontierEntry::Infeasible { target_return: annual });
            }
            let weights = if spread <= tol || (target - mv_ret).abs() <= tol {
                mv_weights.clone()
            } else {
                // Feasible start on the segment toward the extreme portfolio.
                let (extreme, extreme_ret) = if target > mv_ret {
                    (&max_weights, max_ret)
                } else {
                    (&min_weights, min_ret)
                };
                let s = ((target - mv_ret) / (extreme_ret - mv_ret)).clamp(0.0, 1.0);
                let x0: Vec<f64> = mv_weights.iter().zip(extreme).map(|(a, b)| (1.0 - s) * a + s * b).collect();
                solve_with_return(model, caps, target, &x0)?
            };
            let variance = quad(&model.cov, &weights);
            let volatility = (DAYS_PER_YEAR * variance.max(0.0)).sqrt();
            let realized = DAYS_PER_YEAR * dot(&model.mu, &weights);
            let sharpe = sharpe_ratio(realized, volatility, risk_free).ok();
            Ok(FrontierEntry::Point(FrontierPoint {
                target_return: annual,
                volatility,
                weights,
                sharpe,
            }))
        })
        .collect()
}

fn solve_with_return(model: &RiskModel, caps: &[f64], target: f64, x0: &[f64]) -> Result<Vec<f64>> {
    let n = caps.len();
    let center = model.mu.mean();
    let scale = model.mu.iter().map(|m| (m - center).abs()).fold(0.0, f64::max);
    let mut qp = ActiveSetQp::capped_simplex(&model.cov, caps);
    qp.eq_matrix = DMatrix::from_fn(2, n, |r, i| if r == 0 { 1.0 } else { (model.mu[i] - center) / scale });
    qp.eq_rhs = DVector::from_column_slice(&[1.0, (target - center) / scale]);
    let sol = qp.solve(&DVector::from_column_slice(x0))?;
    Ok(sol.x.iter().zip(caps).map(|(v, c)| v.clamp(0.0, *c)).collect())
}

/// Greedy fill of the highest-`μ` assets up to their caps.
fn max_return_weights(mu: &DVector<f64>, caps: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&i, &j| mu[j].total_cmp(&mu[i]).then(i.cmp(&j)));
    let mut weights = vec![0.0; caps.len()];
    let mut remaining = 1.0f64;
    for i in order {
        let w = caps[i].min(remaining);
        weights[i] = w;
        remaining -= w;
        if remaining <= 0.0 {
            break;
        }
    }
    weights
}

/// `(μ − r_f) / σ`.
pub fn sharpe_ratio(mu_annual: f64, vol_annual: f64, risk_free: f64) -> Result<f64> {
    if vol_annual <= 0.0 || !vol_annual.is_finite() {
        return Err(Error::UndefinedRatio(format!("volatility {vol_annual}")));
    }
    Ok((mu_annual - risk_free) / vol_annual)
}

/// Annualized return, volatility and Sharpe ratio of each single token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenStats {
    pub symbol: String,
    pub annual_return: f64,
    pub annual_volatility: f64,
    pub sharpe: Option<f64>,
}

pub fn token_stats(model: &RiskModel, risk_free: f64) -> Vec<TokenStats> {
    model
        .symbols
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let annual_return = DAYS_PER_YEAR * model.mu[i];
            let annual_volatility = (DAYS_PER_YEAR * model.cov[(i, i)]).sqrt();
            TokenStats {
                symbol: s.clone(),
                annual_return,
                annual_volatility,
                sharpe: sharpe_ratio(annual_return, annual_volatility, risk_free).ok(),
            }
        })
        .collect()
}

fn dot(mu: &DVector<f64>, w: &[f64]) -> f64 {
    mu.iter().zip(w).map(|(a, b)| a * b).sum()
}

fn quad(c: &DMatrix<f64>, w: &[f64]) -> f64 {
    let a = DVector::from_column_slice(w);
    a.dot(&(c * &a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(cov: DMatrix<f64>, mu: &[f64]) -> RiskModel {
        let symbols = (0..mu.len()).map(|i| format!("T{i}")).collect();
        RiskModel::from_moments(symbols, DVector::from_column_slice(mu), cov).unwrap()
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let m = model(DMatrix::identity(2, 2), &[0.0, 0.0]);
        let sol = min_variance(&m, &[1.0, 1.0]).unwrap();
        assert!((sol.portfolio.weights()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn closed_form_two_asset_weights() {
        // a1 = s2^2 / (s1^2 + s2^2) = 4 / 5.
        let m = model(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]), &[0.0, 0.0]);
        let sol = min_variance(&m, &[1.0, 1.0]).unwrap();
        assert!((sol.portfolio.weights()[0] - 0.8).abs() < 1e-12);
        assert!((sol.portfolio.weights()[1] - 0.2).abs() < 1e-12);
        assert!(sol.report.kkt_residual <= 1e-7);
        assert!((sol.report.objective - 0.8).abs() < 1e-12);
    }

    #[test]
    fn infeasible_caps_error() {
        let m = model(DMatrix::identity(3, 3), &[0.0; 3]);
        assert!(matches!(min_variance(&m, &[0.2, 0.2, 0.2]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn non_psd_model_is_a_domain_error() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = minimize_quadratic(&cov, &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn zero_covariance_returns_flagged_uniform_start() {
        let m = model(DMatrix::zeros(4, 4), &[0.0; 4]);
        let sol = min_variance(&m, &[0.5; 4]).unwrap();
        assert!(sol.portfolio.weights().iter().all(|w| (w - 0.25).abs() < 1e-15));
        assert!(sol.report.flags.contains(&SolverFlag::DegenerateObjective));
    }

    #[test]
    fn single_asset_semivariance_is_forced() {
        let r = DMatrix::from_column_slice(5, 1, &[0.01, -0.02, 0.03, -0.01, 0.0]);
        let returns = ReturnMatrix::from_scenarios(r).unwrap();
        let sol = min_semivariance(&returns, &[1.0]).unwrap();
        assert_eq!(sol.portfolio.weights(), [1.0]);
        // mean 0.002; downside deviations -0.022, -0.012, -0.002.
        let expected = (0.022f64.powi(2) + 0.012f64.powi(2) + 0.002f64.powi(2)) / 5.0;
        assert!((sol.report.objective - expected).abs() < 1e-15);
    }

    #[test]
    fn no_downside_scenarios_is_degenerate() {
        // Constant returns: every row equals the column mean.
        let r = DMatrix::from_fn(10, 3, |_, j| 0.01 * j as f64);
        let returns = ReturnMatrix::from_scenarios(r).unwrap();
        let sol = min_semivariance(&returns, &[0.5; 3]).unwrap();
        assert_eq!(sol.report.objective, 0.0);
        assert!(sol.report.flags.contains(&SolverFlag::DegenerateObjective));
        let total: f64 = sol.portfolio.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn semicovariance_fast_path_reports_exact_objective() {
        let r = DMatrix::from_fn(40, 3, |t, j| ((t * 7 + j * 13) % 11) as f64 / 100.0 - 0.05);
        let returns = ReturnMatrix::from_scenarios(r).unwrap();
        let fast = min_semivariance_with(&returns, &[1.0; 3], SemivarianceMethod::Semicovariance).unwrap();
        let exact = min_semivariance(&returns, &[1.0; 3]).unwrap();
        let fast_exact_objective = portfolio_semivariance(&returns, fast.portfolio.weights()).unwrap();
        assert_eq!(fast.report.objective, fast_exact_objective);
        assert!(exact.report.objective <= fast.report.objective + 1e-12);
    }

    #[test]
    fn sharpe_examples() {
        assert!((sharpe_ratio(0.10, 0.20, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(sharpe_ratio(0.05, 0.30, 0.05).unwrap(), 0.0);
        assert!((sharpe_ratio(0.15, 0.30, 0.03).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(sharpe_ratio(0.1, 0.0, 0.0), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn two_point_frontier_is_the_endpoints() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.3, 0.0, 0.3, 3.0]) * 1e-4;
        let m = model(cov, &[0.001, 0.002, 0.003]);
        let caps = [0.6, 0.6, 0.6];
        let frontier = efficient_frontier(&m, &caps, 2, 0.0).unwrap();
        let mv = min_variance(&m, &caps).unwrap();
        let first = frontier[0].point().unwrap();
        for (a, b) in first.weights.iter().zip(mv.portfolio.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        let last = frontier[1].point().unwrap();
        // Max return under caps 0.6: 0.6 in T2, 0.4 in T1.
        assert!((last.weights[2] - 0.6).abs() < 1e-9);
        assert!((last.weights[1] - 0.4).abs() < 1e-9);
        assert!((last.target_return - 365.0 * (0.6 * 0.003 + 0.4 * 0.002)).abs() < 1e-12);
    }

    #[test]
    fn identical_means_degenerate_to_one_point() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]);
        let m = model(cov, &[0.001, 0.001]);
        let frontier = efficient_frontier(&m, &[1.0, 1.0], 5, 0.0).unwrap();
        let first = frontier[0].point().unwrap().clone();
        for e in &frontier {
            assert_eq!(e.point().unwrap().weights, first.weights);
        }
    }

    #[test]
    fn unreachable_targets_are_marked() {
        let m = model(DMatrix::identity(2, 2), &[0.001, 0.002]);
        let out = frontier_at_targets(&m, &[1.0, 1.0], &[365.0 * 0.0025], 0.0).unwrap();
        assert!(matches!(out[0], FrontierEntry::Infeasible { .. }));
        assert!(matches!(efficient_frontier(&m, &[1.0, 1.0], 1, 0.0), Err(Error::Domain(_))));
    }
}
