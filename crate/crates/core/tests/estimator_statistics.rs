use trotter_mc::estimator::{
    allocate, calibrate, mse_bound, mse_report, rate_bound, run_estimate, CalibrationOptions, MonteCarloSystem,
    SimulationPlan,
};
use trotter_mc::oscillator::{OscillatorConfig, OscillatorSystem};
use trotter_mc::systems::pauli_xz;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn estimates(system: &dyn MonteCarloSystem, m: usize, n: usize, seeds: u64) -> Vec<f64> {
    (0..seeds)
        .map(|seed| run_estimate(&SimulationPlan::new(system.horizon(), m, n, seed).unwrap(), system).unwrap().theta_hat)
        .collect()
}

#[test]
fn estimator_is_unbiased_for_the_simulated_mean() {
    let sys = pauli_xz();
    let target = sys.simulated_distribution(4).unwrap().mean();
    let thetas = estimates(&sys, 4, 10, 10_000);
    let (mean, var) = mean_var(&thetas);
    let se = (var / thetas.len() as f64).sqrt();
    assert!((mean - target).abs() < 4.0 * se, "mean {mean} target {target} se {se}");
}

#[test]
fn estimator_variance_scales_as_one_over_n() {
    let sys = pauli_xz();
    let n = 10;
    let sim_var = sys.simulated_distribution(6).unwrap().variance();
    let thetas = estimates(&sys, 6, n, 10_000);
    let (_, var) = mean_var(&thetas);
    let expected = sim_var / n as f64;
    assert!((var / expected - 1.0).abs() < 0.10, "var {var} expected {expected}");
}

#[test]
fn oscillator_estimates_concentrate() {
    let sys = OscillatorSystem::new(OscillatorConfig::default()).unwrap();
    let thetas = estimates(&sys, 277, 18, 500);
    let inside = thetas.iter().filter(|t| (*t - 0.6).abs() <= 0.097).count();
    assert!(inside as f64 >= 0.99 * thetas.len() as f64, "{inside}/500 within 3 sd");
}

#[test]
fn bias_ratio_under_step_halving() {
    let sys = pauli_xz();
    for m in [10, 20, 40] {
        let coarse = mse_report(&SimulationPlan::new(1.0, m, 1, 0).unwrap(), &sys).unwrap();
        let fine = mse_report(&SimulationPlan::new(1.0, 2 * m, 1, 0).unwrap(), &sys).unwrap();
        let ratio = coarse.bias.abs() / fine.bias.abs();
        assert!((3.4..=4.6).contains(&ratio), "m={m} ratio {ratio}");
    }
}

#[test]
fn commuting_system_has_no_bias() {
    let sys = OscillatorSystem::new(OscillatorConfig { dimensions: 1, levels: 4, horizon: 1.0 }).unwrap();
    let grid = [0.002, 0.004, 0.008, 0.016];
    let result = calibrate(&sys, &grid, &CalibrationOptions::default()).unwrap();
    assert!(result.c2 >= 0.0);
    for p in &result.points {
        assert!(p.bias.abs() < 1e-3 * p.delta, "bias {} at {}", p.bias, p.delta);
    }
}

#[test]
fn oscillator_calibration_and_allocation() {
    let sys = OscillatorSystem::new(OscillatorConfig::default()).unwrap();
    let result = calibrate(&sys, &[0.002, 0.004, 0.008, 0.016], &CalibrationOptions::default()).unwrap();
    assert!((result.c1 / 0.01875 - 1.0).abs() < 0.05, "c1 {}", result.c1);
    let alloc = allocate(5000, result.c1, result.c2).unwrap();
    let scan = (1..=5000).min_by(|&a, &b| {
        mse_bound(5000, result.c1, result.c2, a).partial_cmp(&mse_bound(5000, result.c1, result.c2, b)).unwrap()
    });
    assert_eq!(Some(alloc.m), scan);
    assert_eq!(alloc.n, 5000 / alloc.m);
}

#[test]
fn allocation_is_near_continuous_minimum() {
    let continuous = 1.25 * 4f64.powf(0.2);
    for (budget, c1, c2) in [(1_000, 0.01875, 2.6e-3), (10_000, 1.0, 1.0), (100_000, 0.5, 40.0), (100_000, 0.01, 1e-3)] {
        let alloc = allocate(budget, c1, c2).unwrap();
        let ratio = alloc.bound / (continuous * rate_bound(budget, c1, c2));
        assert!((1.0..=1.05).contains(&ratio), "N={budget} ratio {ratio}");
    }
}
