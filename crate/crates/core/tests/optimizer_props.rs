mod common;

use common::{quad, random_covariance, random_returns, simplex_grid};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablecoin_collateral::market_data::{estimate_risk_model, ReturnMatrix, RiskModel};
use stablecoin_collateral::portfolio_opt::{
    efficient_frontier, min_semivariance, min_variance, portfolio_semivariance, portfolio_variance_population,
    Portfolio, BOX_TOLERANCE, SUM_TOLERANCE,
};
use stablecoin_collateral::qp::project_capped_simplex;

fn model(cov: DMatrix<f64>) -> RiskModel {
    let m = cov.nrows();
    RiskModel::from_moments((0..m).map(|i| format!("T{i}")).collect(), DVector::zeros(m), cov).unwrap()
}

fn random_feasible<R: Rng>(caps: &[f64], rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = caps.iter().map(|_| -rng.random::<f64>().ln()).collect();
    let s: f64 = v.iter().sum();
    project_capped_simplex(&v.iter().map(|x| x / s).collect::<Vec<_>>(), caps).unwrap()
}

fn assert_feasible(p: &Portfolio) {
    let sum: f64 = p.weights().iter().sum();
    assert!((sum - 1.0).abs() <= SUM_TOLERANCE, "sum {sum}");
    for (w, c) in p.weights().iter().zip(p.caps()) {
        assert!(*w >= -BOX_TOLERANCE && *w <= c + BOX_TOLERANCE, "{w} outside [0, {c}]");
    }
}

#[test]
fn min_variance_beats_random_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in [3, 5, 8] {
        let cov = random_covariance(m, &mut rng);
        let caps: Vec<f64> = (0..m).map(|_| rng.random_range(0.25..0.6)).collect();
        let sol = min_variance(&model(cov.clone()), &caps).unwrap();
        assert_feasible(&sol.portfolio);
        let best = quad(&cov, sol.portfolio.weights());
        for _ in 0..10_000 {
            let x = random_feasible(&caps, &mut rng);
            assert!(best <= quad(&cov, &x) + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn relaxing_caps_never_hurts(seed in any::<u64>(), m in 2usize..7, cap in 0.2f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = random_covariance(m, &mut rng);
        let caps = vec![cap.max(1.0 / m as f64 + 1e-6); m];
        let tight = min_variance(&model(cov.clone()), &caps).unwrap();
        let loose = min_variance(&model(cov), &vec![1.0; m]).unwrap();
        assert_feasible(&tight.portfolio);
        prop_assert!(loose.report.objective <= tight.report.objective + 1e-12);
    }

    #[test]
    fn weights_are_invariant_to_covariance_scale(seed in any::<u64>(), m in 2usize..7, c in 1e-4f64..1e4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = random_covariance(m, &mut rng);
        let caps = vec![0.6; m];
        let base = min_variance(&model(cov.clone()), &caps).unwrap();
        let scaled = min_variance(&model(&cov * c), &caps).unwrap();
        for (a, b) in base.portfolio.weights().iter().zip(scaled.portfolio.weights()) {
            prop_assert!((a - b).abs() <= 1e-7, "{} vs {}", a, b);
        }
        let ratio = scaled.report.objective / base.report.objective;
        prop_assert!((ratio - c).abs() <= 1e-8 * c);
    }

    #[test]
    fn frontier_volatility_rises_with_return(seed in any::<u64>(), m in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = random_covariance(m, &mut rng) * 1e-3;
        let mu = DVector::from_fn(m, |_, _| rng.random_range(-0.002..0.003));
        let model = RiskModel::from_moments((0..m).map(|i| format!("T{i}")).collect(), mu, cov).unwrap();
        let entries = efficient_frontier(&model, &vec![0.7; m], 20, 0.0).unwrap();
        let vols: Vec<f64> = entries.iter().filter_map(|e| e.point()).map(|p| p.volatility).collect();
        prop_assert!(!vols.is_empty());
        for w in vols.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{:?}", vols);
        }
    }

    #[test]
    fn semivariance_optimum_is_feasible_and_dominated(seed in any::<u64>(), m in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let returns = ReturnMatrix::from_scenarios(random_returns(120, m, &mut rng)).unwrap();
        let caps = vec![0.8; m];
        let sol = min_semivariance(&returns, &caps).unwrap();
        assert_feasible(&sol.portfolio);
        let w = sol.portfolio.weights();
        let s = portfolio_semivariance(&returns, w).unwrap();
        prop_assert!((s - sol.report.objective).abs() <= 1e-15);
        prop_assert!(s <= portfolio_variance_population(&returns, w).unwrap());
        for _ in 0..200 {
            let x = random_feasible(&caps, &mut rng);
            prop_assert!(s <= portfolio_semivariance(&returns, &x).unwrap() + 1e-12);
        }
    }
}

#[test]
fn two_asset_semivariance_matches_fine_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let returns = ReturnMatrix::from_scenarios(random_returns(250, 2, &mut rng)).unwrap();
        let sol = min_semivariance(&returns, &[1.0, 1.0]).unwrap();
        let best = (0..=1000)
            .map(|k| {
                let a = k as f64 / 1000.0;
                portfolio_semivariance(&returns, &[a, 1.0 - a]).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(sol.report.objective <= best + 1e-15, "{} > {best}", sol.report.objective);
        assert!(best - sol.report.objective <= 1e-6 * best);
    }
}

#[test]
fn six_asset_semivariance_beats_coarse_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..3 {
        let returns = ReturnMatrix::from_scenarios(random_returns(250, 6, &mut rng)).unwrap();
        let caps = [0.5; 6];
        let sol = min_semivariance(&returns, &caps).unwrap();
        let mut best = f64::INFINITY;
        simplex_grid(6, 20, 0.5, |x| best = best.min(portfolio_semivariance(&returns, x).unwrap()));
        assert!(sol.report.objective <= best + 1e-15, "{} > {best}", sol.report.objective);
    }
}

#[test]
fn min_variance_of_sample_covariance_is_feasible_on_real_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for t in [8, 30, 250] {
        let returns = ReturnMatrix::from_scenarios(random_returns(t, 10, &mut rng)).unwrap();
        let sol = min_variance(&estimate_risk_model(&returns).unwrap(), &[0.2; 10]).unwrap();
        assert_feasible(&sol.portfolio);
        assert!(sol.report.kkt_residual <= 1e-7, "{:?}", sol.report);
    }
}
