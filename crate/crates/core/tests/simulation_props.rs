mod common;

use common::date;
use nalgebra::{DMatrix, DVector};
use stablecoin_collateral::market_data::{sample_window_start, PriceTable, RiskModel};
use stablecoin_collateral::portfolio_opt::Portfolio;
use stablecoin_collateral::risk_sim::{
    gbm_outcomes, historical_outcomes, run_rng, simulate_gbm, simulate_historical, GbmPathGenerator, GbmSource,
    SimConfig, SimMode,
};
use stablecoin_collateral::synthetic::demo_history;

fn demo_table(days: usize, seed: u64) -> PriceTable {
    let h = demo_history(days, seed).unwrap();
    h.align(&h.symbols(), None).unwrap()
}

fn equal_weight(table: &PriceTable) -> Portfolio {
    let n = table.symbols().len();
    Portfolio::uncapped(table.symbols().to_vec(), vec![1.0 / n as f64; n]).unwrap()
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let table = demo_table(600, 2);
    let p = equal_weight(&table);
    let config = SimConfig { n_runs: 3000, horizon_days: 200, estimation_window_days: 150, seed: 99, ..SimConfig::default() };
    let run = || {
        (
            simulate_historical(&p, &table, &config).unwrap(),
            simulate_gbm(&p, GbmSource::Sampled(&table), &SimConfig { mode: SimMode::Gbm, ..config.clone() }).unwrap(),
        )
    };
    let default_pool = run();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(pool.install(run), default_pool);
    }
}

#[test]
fn threshold_at_worst_ratio_never_fails() {
    let table = demo_table(500, 6);
    let p = equal_weight(&table);
    let config = SimConfig { n_runs: 1000, horizon_days: 120, seed: 4, ..SimConfig::default() };
    let outcomes = historical_outcomes(&p, &table, &config).unwrap();
    let worst = outcomes.runs.iter().map(|r| r.min_ratio).fold(f64::INFINITY, f64::min);
    let gamma = 2.0;
    assert_eq!(outcomes.failure_probability(gamma, gamma * worst), 0.0);
    assert!(outcomes.failure_probability(gamma, gamma * worst * 1.0001) > 0.0);
}

#[test]
fn single_asset_terminal_log_price_moments() {
    let (mu, sigma) = (0.0004, 0.03);
    let model = RiskModel::from_moments(vec!["X".into()], DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma * sigma)).unwrap();
    let generator = GbmPathGenerator::new(&model).unwrap();
    let n = 10_000;
    let horizon = 365;
    let logs: Vec<f64> = (0..n)
        .map(|k| generator.sample_path(horizon, &mut run_rng(8, k)).multiplier(horizon, 0).ln())
        .collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (want_mean, want_var) = (365.0 * mu, 365.0 * sigma * sigma);
    let se_mean = (want_var / n as f64).sqrt();
    let se_var = want_var * (2.0 / (n - 1) as f64).sqrt();
    assert!((mean - want_mean).abs() <= 3.0 * se_mean, "mean {mean} vs {want_mean}");
    assert!((var - want_var).abs() <= 3.0 * se_var, "var {var} vs {want_var}");
}

#[test]
fn daily_shocks_carry_the_input_correlation() {
    let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.8, 0.2, 0.8, 1.0, 0.5, 0.2, 0.5, 1.0]);
    let vols = [0.04, 0.01, 0.02];
    let cov = DMatrix::from_fn(3, 3, |i, j| corr[(i, j)] * vols[i] * vols[j]);
    let model = RiskModel::from_moments(vec!["A".into(), "B".into(), "C".into()], DVector::zeros(3), cov).unwrap();
    let generator = GbmPathGenerator::new(&model).unwrap();
    let draws: Vec<DVector<f64>> = (0..10_000).map(|k| generator.daily_log_returns(&mut run_rng(1, k))).collect();
    let n = draws.len() as f64;
    let mean: Vec<f64> = (0..3).map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / n).collect();
    let c = |i: usize, j: usize| draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).sum::<f64>() / (n - 1.0);
    for i in 0..3 {
        for j in 0..i {
            let r = c(i, j) / (c(i, i) * c(j, j)).sqrt();
            assert!((r - corr[(i, j)]).abs() <= 0.03, "ρ{i}{j} = {r}");
        }
    }
}

#[test]
fn pinned_run_equals_direct_replay() {
    let table = demo_table(400, 13);
    let p = Portfolio::uncapped(table.symbols().to_vec(), vec![0.3, 0.1, 0.2, 0.1, 0.2, 0.1]).unwrap();
    let config = SimConfig { n_runs: 25, horizon_days: 90, seed: 17, ..SimConfig::default() };
    let outcomes = historical_outcomes(&p, &table, &config).unwrap();
    let prices = table.prices();
    for (k, run) in outcomes.runs.iter().enumerate() {
        let start = sample_window_start(table.n_dates(), config.horizon_days, &mut run_rng(config.seed, k as u64)).unwrap();
        let mut min_ratio = f64::INFINITY;
        for t in 1..=config.horizon_days {
            let ratio: f64 = (0..6).map(|j| p.weights()[j] * prices[(start + t, j)] / prices[(start, j)]).sum();
            min_ratio = min_ratio.min(ratio);
        }
        assert!((run.min_ratio - min_ratio).abs() <= 1e-14, "run {k}");
    }
}

#[test]
fn a_single_crash_day_fails_exactly_the_windows_containing_it() {
    let n = 300;
    let crash = 170;
    let dates = date("2020-01-01").iter_days().take(n).collect();
    let prices = DMatrix::from_fn(n, 2, |t, j| match j {
        0 if t >= crash => 50.0,
        0 => 100.0,
        _ => 1.0 + 0.001 * t as f64,
    });
    let table = PriceTable::new(dates, vec!["RISKY".into(), "SAFE".into()], prices).unwrap();
    let p = Portfolio::uncapped(vec!["RISKY".into(), "SAFE".into()], vec![1.0, 0.0]).unwrap();
    let config = SimConfig { n_runs: 4000, horizon_days: 60, seed: 5, ..SimConfig::default() };
    let outcomes = historical_outcomes(&p, &table, &config).unwrap();
    let mut failures = 0;
    for (k, run) in outcomes.runs.iter().enumerate() {
        let start = sample_window_start(n, config.horizon_days, &mut run_rng(config.seed, k as u64)).unwrap();
        let contains_crash = start < crash && crash <= start + config.horizon_days;
        assert_eq!(run.failed(&config), contains_crash, "run {k} start {start}");
        failures += contains_crash as usize;
    }
    let expected = config.horizon_days as f64 / (n - config.horizon_days) as f64;
    let observed = failures as f64 / config.n_runs as f64;
    assert!((observed - expected).abs() < 4.0 * (expected * (1.0 - expected) / config.n_runs as f64).sqrt());
}

#[test]
fn gbm_runs_are_shared_across_thresholds() {
    let table = demo_table(500, 21);
    let p = equal_weight(&table);
    let config = SimConfig { n_runs: 500, horizon_days: 100, estimation_window_days: 100, seed: 2, mode: SimMode::Gbm, ..SimConfig::default() };
    let outcomes = gbm_outcomes(&p, GbmSource::Sampled(&table), &config).unwrap();
    let report = simulate_gbm(&p, GbmSource::Sampled(&table), &config).unwrap();
    assert_eq!(report.failure_probability, outcomes.failure_probability(config.gamma, config.theta));
}
