mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trotter_mc::estimator::{allocate, mse_bound, SimulationPlan};
use trotter_mc::measurement::distribution;
use trotter_mc::operators::{exact_propagator, HamiltonianSum, LocalTerm, ObservableSpec};
use trotter_mc::state::inner_product;
use trotter_mc::trotter::{evolve, trotter_step};

use common::{random_hermitian, random_state};

fn two_qubit_chain(seed: u64) -> HamiltonianSum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = vec![
        LocalTerm::new(vec![0, 1], random_hermitian(&mut rng, 4)).unwrap(),
        LocalTerm::new(vec![1, 2], random_hermitian(&mut rng, 4)).unwrap(),
        LocalTerm::new(vec![0], random_hermitian(&mut rng, 2)).unwrap(),
    ];
    HamiltonianSum::new(vec![2, 2, 2], terms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocation_beats_every_integer(budget in 1u64..3000, c1 in 1e-3f64..10.0, c2 in 0.0f64..1e3) {
        let a = allocate(budget, c1, c2).unwrap();
        prop_assert!(a.m >= 1 && a.m as u64 <= budget);
        prop_assert_eq!(a.m as u64 * a.n as u64 + a.slack, budget);
        for m in 1..=budget as usize {
            prop_assert!(a.bound <= mse_bound(budget, c1, c2, m));
        }
    }

    #[test]
    fn plan_accounting(horizon in 0.1f64..10.0, budget in 1u64..100_000, m in 1usize..1000) {
        prop_assume!(m as u64 <= budget);
        let plan = SimulationPlan::from_budget(horizon, budget, m, 0).unwrap();
        prop_assert!(plan.total() <= budget);
        prop_assert!(plan.slack() < m as u64);
        prop_assert!((plan.delta() * m as f64 - horizon).abs() <= 1e-12 * horizon);
    }

    #[test]
    fn trotter_evolution_preserves_norm(seed in any::<u64>(), delta in 0.001f64..0.5, m in 1usize..20) {
        let h = two_qubit_chain(seed);
        let step = trotter_step(&h, delta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let psi = random_state(&mut rng, vec![2, 2, 2]);
        let out = evolve(&psi, &step, m).unwrap();
        prop_assert!((out.final_state.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn small_step_tracks_exact_propagator(seed in any::<u64>()) {
        let h = two_qubit_chain(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let psi = random_state(&mut rng, vec![2, 2, 2]);
        let delta = 1e-3;
        let trotter = evolve(&psi, &trotter_step(&h, delta).unwrap(), 1).unwrap().final_state;
        let exact = exact_propagator(&h, delta).unwrap().apply(&psi).unwrap();
        let overlap = inner_product(&trotter, &exact).unwrap().norm();
        prop_assert!(1.0 - overlap < 1e-10);
    }

    #[test]
    fn distribution_moments(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = ObservableSpec::from_hermitian(vec![2, 2], &random_hermitian(&mut rng, 4)).unwrap();
        let psi = random_state(&mut rng, vec![2, 2]);
        let dist = distribution(&x, &psi).unwrap();
        let total: f64 = dist.outcomes().iter().map(|o| o.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(dist.variance() >= 0.0);
        let lo = x.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(dist.mean() >= lo - 1e-12 && dist.mean() <= hi + 1e-12);
    }
}
