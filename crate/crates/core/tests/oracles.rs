//! Cross-checks of the library against independent computations.

mod common;

use common::{linf, model_with_optimum, nyse_pair, random_interior, random_spd, random_vec, rel_err};
use nalgebra::{DMatrix, DVector};
use onflow_core::baselines::{eg_allocate, eg_allocate_logits, simplex_grid};
use onflow_core::cost::{transaction_loss, transaction_loss_grad};
use onflow_core::lognormal::{
    continuous_flow, continuous_flow_sampled, continuous_flow_simplex, critical_points, optimal_allocation,
    quadratic_reward, reward_logit_gradient, simplex_flow_rhs, simulate_lognormal, unconstrained_target,
    verify_convergence,
};
use onflow_core::onflow::{integrate_step, onflow_rhs, reward_log_return};
use onflow_core::simplex::softmax;
use onflow_core::{
    onflow_allocate, Allocation, FeeSchedule, LogitVector, MarketModel, Method, OnflowConfig, OnflowState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-6;

fn central_difference(h: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..h.len())
        .map(|b| {
            let mut up = h.to_vec();
            let mut down = h.to_vec();
            up[b] += FD_STEP;
            down[b] -= FD_STEP;
            (f(&up) - f(&down)) / (2.0 * FD_STEP)
        })
        .collect()
}

fn logits(h: &[f64]) -> LogitVector {
    LogitVector::new(h.to_vec()).unwrap()
}

#[test]
fn log_return_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 2..=5 {
        for _ in 0..20 {
            let h = random_vec(&mut rng, k, -3.0, 3.0);
            let f = random_vec(&mut rng, k, 0.8, 1.2);
            let plus = Allocation::uniform(k).unwrap();
            let analytic = onflow_rhs(&logits(&h), &f, &plus, &FeeSchedule::zero()).unwrap();
            let fd = central_difference(&h, |x| reward_log_return(&logits(x), &f).unwrap());
            assert!(rel_err(&fd, &analytic) <= 1e-5, "K={k}: {fd:?} vs {analytic:?}");
        }
    }
}

#[test]
fn fee_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let k = 3;
        let h = random_vec(&mut rng, k, -2.0, 2.0);
        let plus = Allocation::new(random_interior(&mut rng, k, 0.01)).unwrap();
        let fees = FeeSchedule::with_rate(0.02).unwrap();
        let analytic = transaction_loss_grad(&logits(&h), &plus, &fees).unwrap();
        let fd = central_difference(&h, |x| transaction_loss(&logits(x), &plus, &fees).unwrap());
        assert!(rel_err(&fd, &analytic) <= 1e-5, "{fd:?} vs {analytic:?}");
    }
}

#[test]
fn quadratic_reward_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in [2, 3, 5] {
        let target = random_interior(&mut rng, k, 0.05);
        let model = model_with_optimum(&mut rng, &target);
        let h = random_vec(&mut rng, k, -2.0, 2.0);
        let analytic = reward_logit_gradient(&h, &model).unwrap();
        let fd = central_difference(&h, |x| quadratic_reward(&softmax(&logits(x)), &model).unwrap());
        assert!(rel_err(&fd, &analytic) <= 1e-5);
    }
}

fn step_logits(h: &[f64], f: &[f64], fees: FeeSchedule, substeps: usize) -> Vec<f64> {
    let config = OnflowConfig::new(1.0, fees).unwrap().with_substeps(substeps).unwrap();
    let state = OnflowState { logits: logits(h), step: 0 };
    integrate_step(&state, f, &config).unwrap().logits.into_inner()
}

#[test]
fn rk4_error_shrinks_sixteenfold_per_halving() {
    let h = [0.3, -0.2, 0.5];
    let f = [1.3, 0.7, 1.1];
    for fees in [FeeSchedule::zero(), FeeSchedule::new(0.02, 0.05).unwrap()] {
        let reference = step_logits(&h, &f, fees, 10_000);
        let errors: Vec<f64> = [2, 4, 8].iter().map(|n| linf(&step_logits(&h, &f, fees, *n), &reference)).collect();
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} from {errors:?}");
        }
    }
}

#[test]
fn euler_is_first_order() {
    let h = [0.3, -0.2];
    let f = [1.4, 0.8];
    let config =
        |n| OnflowConfig::new(1.0, FeeSchedule::zero()).unwrap().with_substeps(n).unwrap().with_method(Method::Euler);
    let state = OnflowState { logits: logits(&h), step: 0 };
    let reference = step_logits(&h, &f, FeeSchedule::zero(), 10_000);
    let err = |n| linf(&integrate_step(&state, &f, &config(n)).unwrap().logits, &reference);
    let ratio = err(200) / err(400);
    assert!((1.8..=2.2).contains(&ratio), "{ratio}");
}

#[test]
fn simulated_moments_match_the_model() {
    let cov = DMatrix::from_row_slice(3, 3, &[0.04, 0.01, -0.005, 0.01, 0.09, 0.02, -0.005, 0.02, 0.0625]);
    let mu = vec![0.08, 0.05, 0.12];
    let model = MarketModel::from_covariance(mu.clone(), cov.clone()).unwrap();
    let (steps, dt) = (1_000_000, 0.01);
    let rel = simulate_lognormal(&model, steps, dt, 2024).unwrap();
    let logs: Vec<Vec<f64>> = rel.rows().iter().map(|r| r.iter().map(|x| x.ln()).collect()).collect();
    let n = steps as f64;
    let mean: Vec<f64> = (0..3).map(|k| logs.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    for k in 0..3 {
        let expected = (mu[k] - 0.5 * cov[(k, k)]) * dt;
        let se = (cov[(k, k)] * dt / n).sqrt();
        assert!((mean[k] - expected).abs() <= 4.0 * se, "asset {k}: {} vs {expected}", mean[k]);
    }
    for i in 0..3 {
        for j in 0..3 {
            let sample = logs.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0);
            let scale = (cov[(i, i)] * cov[(j, j)]).sqrt() * dt;
            assert!((sample - cov[(i, j)] * dt).abs() <= 0.05 * scale, "({i},{j}): {sample}");
        }
    }
}

#[test]
fn simulation_is_reproducible() {
    let model =
        MarketModel::from_covariance(vec![0.1, 0.05], DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.09])).unwrap();
    let a = simulate_lognormal(&model, 100, 0.1, 7).unwrap();
    let b = simulate_lognormal(&model, 100, 0.1, 7).unwrap();
    let c = simulate_lognormal(&model, 100, 0.1, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn logit_and_simplex_flows_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in [2, 3, 4] {
        let cov = random_spd(&mut rng, k, 0.1);
        let mu = random_vec(&mut rng, k, -0.2, 0.3);
        let model = MarketModel::from_covariance(mu, cov).unwrap();
        let h0 = random_vec(&mut rng, k, -1.0, 1.0);
        let pi0 = softmax(&logits(&h0));
        let a = continuous_flow_sampled(&model, &logits(&h0), 20.0, 1e-3, 1000).unwrap();
        let b = continuous_flow_simplex(&model, &pi0, 20.0, 1e-3, 1000).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(linf(p, q) <= 1e-6);
        }
    }
}

#[test]
fn reward_splits_around_the_unconstrained_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for k in 2..=6 {
        let cov = random_spd(&mut rng, k, 0.05);
        let mu = random_vec(&mut rng, k, -0.3, 0.3);
        let model = MarketModel::from_covariance(mu.clone(), cov.clone()).unwrap();
        let dagger = unconstrained_target(&model).unwrap();
        let residual = &cov * DVector::from_column_slice(&dagger) - DVector::from_column_slice(&mu);
        assert!(residual.amax() <= 1e-9);
        let norm = |v: &[f64]| {
            let v = DVector::from_column_slice(v);
            v.dot(&(&cov * &v))
        };
        for _ in 0..5 {
            let pi = random_interior(&mut rng, k, 0.0);
            let diff: Vec<f64> = pi.iter().zip(&dagger).map(|(a, b)| a - b).collect();
            let identity = 0.5 * norm(&dagger) - 0.5 * norm(&diff);
            assert!((quadratic_reward(&pi, &model).unwrap() - identity).abs() <= 1e-10);
        }
    }
}

#[test]
fn critical_points_are_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for k in [2, 3, 4, 5] {
        for _ in 0..5 {
            let cov = random_spd(&mut rng, k, 0.05);
            let mu = random_vec(&mut rng, k, -0.3, 0.3);
            let model = MarketModel::from_covariance(mu.clone(), cov.clone()).unwrap();
            let points = critical_points(&model).unwrap();
            assert_eq!(points.len(), (1 << k) - 1);
            for c in points.iter().filter(|c| !c.degenerate) {
                assert!((c.point.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                assert!(simplex_flow_rhs(&c.point, &model).iter().all(|x| x.abs() <= 1e-9));
                // on the support the gradient mu - Sigma x is a constant vector
                let grad = model.reward_gradient(&c.point);
                let first = grad[c.support[0]];
                assert!(c.support.iter().all(|&s| (grad[s] - first).abs() <= 1e-9));
            }
        }
    }
}

#[test]
fn optimum_beats_a_fine_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let resolution = 301;
    let grid = simplex_grid(3, resolution).unwrap();
    for _ in 0..10 {
        let cov = random_spd(&mut rng, 3, 0.02);
        let mu = random_vec(&mut rng, 3, -0.3, 0.3);
        let model = MarketModel::from_covariance(mu, cov).unwrap();
        let best = optimal_allocation(&model).unwrap();
        let best_reward = quadratic_reward(&best, &model).unwrap();
        let (grid_best, grid_reward) =
            grid.iter().map(|p| (p, quadratic_reward(p, &model).unwrap())).max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!(best_reward >= grid_reward - 1e-12);
        assert!(best_reward - grid_reward <= 1e-3);
        assert!(linf(&best, grid_best) <= 0.05, "{best:?} vs {grid_best:?}");
    }
}

#[test]
fn boundary_optimum_is_reached_algebraically() {
    let model = MarketModel::from_covariance(vec![0.5, 0.0], DMatrix::from_diagonal_element(2, 2, 0.01)).unwrap();
    assert_eq!(optimal_allocation(&model).unwrap().weights(), &[1.0, 0.0]);
    let traj = continuous_flow_sampled(&model, &LogitVector::zeros(2), 3.0e6, 10.0, 1000).unwrap();
    assert!(linf(traj.terminal(), &[1.0, 0.0]) <= 1e-6, "{:?}", traj.terminal());
    let report = verify_convergence(&traj, &model).unwrap();
    assert!(!report.interior);
    assert_eq!(report.nearest_support, vec![0]);
    assert!(report.monotone_reward);
}

#[test]
fn interior_flow_reaches_the_planted_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let target = random_interior(&mut rng, 3, 0.15);
    let model = model_with_optimum(&mut rng, &target);
    let traj = continuous_flow(&model, &LogitVector::zeros(3), 2000.0, 0.5).unwrap();
    assert!(linf(traj.terminal(), &target) <= 1e-8);
    assert!(linf(&optimal_allocation(&model).unwrap(), &target) <= 1e-12);
}

#[test]
fn onflow_tracks_the_optimum_on_simulated_markets() {
    // pi* = (0.6, 0.4) with equal unit-scale variances
    let cov = DMatrix::from_diagonal_element(2, 2, 0.5);
    let model = MarketModel::from_covariance(vec![0.35, 0.25], cov).unwrap();
    let optimum = optimal_allocation(&model).unwrap();
    assert!(linf(&optimum, &[0.6, 0.4]) <= 1e-12);
    let rel = simulate_lognormal(&model, 1_000_000, 0.01, 99).unwrap();
    let config = OnflowConfig::new(0.05, FeeSchedule::zero()).unwrap().with_substeps(2).unwrap();
    let path = onflow_allocate(&rel, &config).unwrap();
    let tail = &path[path.len() / 2..];
    let avg: Vec<f64> = (0..2).map(|k| tail.iter().map(|p| p[k]).sum::<f64>() / tail.len() as f64).collect();
    assert!(linf(&avg, &optimum) <= 0.05, "{avg:?}");
}

#[test]
fn eg_forms_agree_on_real_data() {
    for pair in 1..=4 {
        let rel = nyse_pair(pair);
        let mult = eg_allocate(&rel, 0.05).unwrap();
        let add = eg_allocate_logits(&rel, 0.05).unwrap();
        for (a, b) in mult.iter().zip(&add) {
            assert!(linf(a, b) <= 1e-10);
        }
    }
}

#[test]
fn eg_matches_a_direct_update() {
    let rel = nyse_pair(3).truncated(500);
    let eta = 0.05;
    let got = eg_allocate(&rel, eta).unwrap();
    let mut w = vec![0.5, 0.5];
    for (t, f) in rel.rows().iter().enumerate() {
        let gross = w[0] * f[0] + w[1] * f[1];
        let raw: Vec<f64> = (0..2).map(|k| w[k] * (eta * f[k] / gross).exp()).collect();
        let s = raw[0] + raw[1];
        w = raw.iter().map(|x| x / s).collect();
        assert!(linf(&got[t + 1], &w) <= 1e-12);
    }
}
