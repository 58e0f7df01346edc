//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use trotter_mc::estimator::{
    allocate, calibrate, default_pilot_grid, mse_bound, rate_bound, run_estimate, CalibrationOptions,
    MonteCarloSystem, SimulationPlan,
};
use trotter_mc::measurement::{collapse, distribution, sample, OutcomeDistribution};
use trotter_mc::operators::{
    embed_block, exact_propagator, operator_distance, HamiltonianSum, LocalTerm, ObservableSpec, Power,
};
use trotter_mc::oscillator::{OscillatorConfig, OscillatorSystem};
use trotter_mc::state::{state_distance, EnsembleState, PureState};
use trotter_mc::systems::pauli_xz;
use trotter_mc::trotter::{evolve, halving_grid, trotter_step, fit_loglog};
use trotter_mc::{CMatrix, C64};

const GROUND_TRUTH_TOL: f64 = 1e-10;
const THETA: f64 = 0.6;
const SECOND_MOMENT: f64 = 0.37875;
const VARIANCE: f64 = 0.01875;

const VARIANCE_LAW_SEEDS: u64 = 2000;
const VARIANCE_LAW_N: usize = 18;
const VARIANCE_LAW_M: usize = 277;
const VARIANCE_LAW_REL_TOL: f64 = 0.10;
const SIMULATED_VARIANCE_REL_TOL: f64 = 0.01;

const STEP_ERROR_START: f64 = 0.1;
const STEP_ERROR_HALVINGS: i32 = 5;
const SINGLE_STEP_SLOPE: f64 = 3.0;
const HORIZON_SLOPE: f64 = 2.0;
const SLOPE_TOL: f64 = 0.15;

const DOUBLING_RATIO: (f64, f64) = (3.4, 4.6);
const DOUBLING_PAIRS: [(usize, usize); 3] = [(100, 200), (150, 300), (300, 600)];

const SUBADDITIVITY_POWERS: [usize; 4] = [2, 4, 8, 16];
const SUBADDITIVITY_SLACK: f64 = 1e-12;

const ALLOCATOR_TRIPLES: usize = 200;
const ALLOCATOR_MAX_N: u64 = 10_000;
const RATE_BUDGETS: [u64; 3] = [1_000, 10_000, 100_000];
const RATE_FACTOR: f64 = 1.05;

const SWEEP_BUDGET: &str = "5000";
const SWEEP_BAND: (f64, f64) = (0.002, 0.006);

const CHI_SQUARE_SAMPLES: usize = 100_000;
const CHI_SQUARE_ALPHA: f64 = 0.001;
const COLLAPSE_TOL: f64 = 1e-10;

const ORACLE_CASES: usize = 100;
const ORACLE_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn in_band(x: f64, band: (f64, f64)) -> bool {
    band.0 <= x && x <= band.1
}

fn oscillator() -> OscillatorSystem {
    OscillatorSystem::new(OscillatorConfig::default()).unwrap()
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_trotter-mc")).args(args).output().expect("binary runs")
}

fn ground_truth() -> Outcome {
    let out = cli(&["oscillator-report"]);
    if !out.status.success() {
        return Outcome { pass: false, detail: format!("exit {:?}", out.status.code()) };
    }
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let theta = v["theta"].as_f64().unwrap();
    let second = v["second_moment"].as_f64().unwrap();
    let pass = within(theta, THETA, GROUND_TRUTH_TOL)
        && within(second, SECOND_MOMENT, GROUND_TRUTH_TOL)
        && v["dims"].as_u64() == Some(4096);
    Outcome {
        pass,
        detail: format!(
            "θ = {theta} (|Δ| = {:.1e}), tr(X²ρ) = {second} (|Δ| = {:.1e}), tol {GROUND_TRUTH_TOL:e}",
            (theta - THETA).abs(),
            (second - SECOND_MOMENT).abs()
        ),
    }
}

fn variance_law() -> Outcome {
    let sys = oscillator();
    let simulated = sys.simulated_distribution(VARIANCE_LAW_M).unwrap().variance();
    let estimates: Vec<f64> = (0..VARIANCE_LAW_SEEDS)
        .map(|seed| {
            let plan = SimulationPlan::new(1.0, VARIANCE_LAW_M, VARIANCE_LAW_N, seed).unwrap();
            run_estimate(&plan, &sys).unwrap().theta_hat
        })
        .collect();
    let k = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / k;
    let var = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let scaled = var * VARIANCE_LAW_N as f64;
    let law = ((scaled - simulated) / simulated).abs();
    let paper = ((simulated - VARIANCE) / VARIANCE).abs();
    Outcome {
        pass: law <= VARIANCE_LAW_REL_TOL && paper <= SIMULATED_VARIANCE_REL_TOL,
        detail: format!(
            "n·Var(θ̂) = {scaled:.6} vs Var_ρ̃(X) = {simulated:.6} (rel {law:.3} ≤ {VARIANCE_LAW_REL_TOL}); \
             Var_ρ̃(X) vs {VARIANCE} rel {paper:.2e} ≤ {SIMULATED_VARIANCE_REL_TOL}"
        ),
    }
}

fn step_error_order() -> Outcome {
    let sys = pauli_xz();
    let h = sys.hamiltonian();
    let deltas = halving_grid(STEP_ERROR_START, STEP_ERROR_START / 2f64.powi(STEP_ERROR_HALVINGS));
    let mut single = Vec::new();
    let mut horizon = Vec::new();
    for &d in &deltas {
        let step = trotter_step(h, d).unwrap();
        single.push(operator_distance(&step, &exact_propagator(h, d).unwrap()).unwrap());
        let m = (1.0 / d).round() as usize;
        let exact = exact_propagator(h, m as f64 * d).unwrap();
        horizon.push(operator_distance(&Power { map: &step, times: m }, &exact).unwrap());
    }
    let s1 = fit_loglog(&deltas, &single, 0.0).slope.unwrap_or(f64::NAN);
    let s2 = fit_loglog(&deltas, &horizon, 0.0).slope.unwrap_or(f64::NAN);
    Outcome {
        pass: deltas.len() == STEP_ERROR_HALVINGS as usize + 1
            && within(s1, SINGLE_STEP_SLOPE, SLOPE_TOL)
            && within(s2, HORIZON_SLOPE, SLOPE_TOL),
        detail: format!(
            "{} step sizes; single-step slope {s1:.4} (target {SINGLE_STEP_SLOPE} ± {SLOPE_TOL}), \
             fixed-horizon slope {s2:.4} (target {HORIZON_SLOPE} ± {SLOPE_TOL})",
            deltas.len()
        ),
    }
}

fn state_error_and_bias_order() -> Outcome {
    let sys = oscillator();
    let exact = sys.exact_final_state(1.0).unwrap();
    let errors = |m: usize| {
        let s = sys.trotterized_by_dimension(m).unwrap();
        let x = sys.build_observable(1.0 / m as f64).unwrap();
        let bias = (distribution(&x, &s).unwrap().mean() - THETA).abs();
        (state_distance(&s, &exact).unwrap(), bias)
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (a, b) in DOUBLING_PAIRS {
        let (ea, eb) = (errors(a), errors(b));
        let (rs, rb) = (ea.0 / eb.0, ea.1 / eb.1);
        pass &= in_band(rs, DOUBLING_RATIO) && in_band(rb, DOUBLING_RATIO);
        parts.push(format!("m {a}→{b}: state ×{rs:.3}, bias ×{rb:.3}"));
    }
    Outcome { pass, detail: format!("{} (band {:?})", parts.join("; "), DOUBLING_RATIO) }
}

fn subadditivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    for dims in [vec![2], vec![2, 2], vec![2, 2, 2], vec![4, 4]] {
        let d: usize = dims.iter().product();
        let n = dims.len();
        let mut terms = vec![LocalTerm::new((0..n).collect(), random_hermitian(&mut rng, d)).unwrap()];
        terms.push(LocalTerm::new(vec![0], random_hermitian(&mut rng, dims[0])).unwrap());
        let h = HamiltonianSum::new(dims.clone(), terms).unwrap();
        for delta in [0.3, 0.05] {
            let u = trotter_step(&h, delta).unwrap();
            let v = exact_propagator(&h, delta).unwrap();
            let base = operator_distance(&u, &v).unwrap();
            for j in SUBADDITIVITY_POWERS {
                let g = operator_distance(&Power { map: &u, times: j }, &Power { map: &v, times: j }).unwrap();
                worst = worst.max(g - j as f64 * base);
                cases += 1;
            }
        }
        // two unrelated unitaries
        let a = random_unitary(&mut rng, d);
        let b = random_unitary(&mut rng, d);
        let base = operator_distance(&a, &b).unwrap();
        for j in SUBADDITIVITY_POWERS {
            let g = operator_distance(&Power { map: &a, times: j }, &Power { map: &b, times: j }).unwrap();
            worst = worst.max(g - j as f64 * base);
            cases += 1;
        }
    }
    Outcome {
        pass: worst <= SUBADDITIVITY_SLACK,
        detail: format!("{cases} cases, max Γ(U^j,V^j) − jΓ(U,V) = {worst:.3e} ≤ {SUBADDITIVITY_SLACK:e}"),
    }
}

fn allocator_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..ALLOCATOR_TRIPLES {
        let n = rng.random_range(1..=ALLOCATOR_MAX_N);
        let c1 = 10f64.powf(rng.random_range(-3.0..2.0));
        let c2 = 10f64.powf(rng.random_range(-3.0..6.0));
        let a = allocate(n, c1, c2).unwrap();
        let best = (1..=n as usize).map(|m| mse_bound(n, c1, c2, m)).fold(f64::INFINITY, f64::min);
        if mse_bound(n, c1, c2, a.m) > best {
            mismatches += 1;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{ALLOCATOR_TRIPLES} random triples, N ≤ {ALLOCATOR_MAX_N}: {mismatches} worse than brute-force scan"),
    }
}

fn allocator_rate() -> Outcome {
    let sys = oscillator();
    let cal = calibrate(&sys, &default_pilot_grid(1.0), &CalibrationOptions::default()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in RATE_BUDGETS {
        let a = allocate(n, cal.c1, cal.c2).unwrap();
        let ratio = a.bound / rate_bound(n, cal.c1, cal.c2);
        pass &= ratio <= RATE_FACTOR;
        parts.push(format!("N={n}: m={} bound/rate = {ratio:.4}", a.m));
    }
    Outcome {
        pass,
        detail: format!(
            "C1 = {:.5}, C2 = {:.3e}; {} (limit {RATE_FACTOR})",
            cal.c1,
            cal.c2,
            parts.join("; ")
        ),
    }
}

fn sweep_shape() -> Outcome {
    let out = cli(&["sweep", "--system", "oscillator", "--budget", SWEEP_BUDGET]);
    if !out.status.success() {
        return Outcome { pass: false, detail: format!("exit {:?}", out.status.code()) };
    }
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("delta"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[5].parse().unwrap())
        })
        .collect();
    let k = (0..rows.len()).min_by(|&a, &b| rows[a].1.total_cmp(&rows[b].1)).unwrap();
    let interior = k > 0 && k + 1 < rows.len();
    let decreasing = rows[..=k].windows(2).all(|w| w[1].1 < w[0].1);
    let increasing = rows[k..].windows(2).all(|w| w[1].1 > w[0].1);
    let argmin = rows[k].0;
    Outcome {
        pass: interior && in_band(argmin, SWEEP_BAND) && decreasing && increasing,
        detail: format!(
            "{} points in (0, {}], argmin δ = {argmin:.5} (band {SWEEP_BAND:?}), interior = {interior}, \
             decreasing before = {decreasing}, increasing after = {increasing}",
            rows.len(),
            rows.last().unwrap().0
        ),
    }
}

fn chi_square_fixture(name: &str, dist: &OutcomeDistribution, draws: &[f64]) -> (bool, String) {
    let mut counts = vec![0u64; dist.outcomes().len()];
    for &d in draws {
        let i = dist.outcomes().iter().position(|o| o.eigenvalue == d).expect("drawn value is an outcome");
        counts[i] += 1;
    }
    let probs: Vec<f64> = dist.outcomes().iter().map(|o| o.probability).collect();
    let (stat, p) = chi_square(&counts, &probs);
    (p >= CHI_SQUARE_ALPHA, format!("{name} χ² = {stat:.1} p = {p:.3}"))
}

fn collapse_checks(x: &ObservableSpec, s: &PureState, rng: &mut ChaCha8Rng) -> (bool, f64) {
    let dist = distribution(x, s).unwrap();
    let mut worst = 0.0f64;
    let mut ok = true;
    for o in dist.outcomes().iter().filter(|o| o.probability > 1e-6) {
        let once = collapse(x, s, o.eigenvalue).unwrap();
        let twice = collapse(x, &once, o.eigenvalue).unwrap();
        worst = worst.max(state_distance(&once, &twice).unwrap());
        let again = distribution(x, &once).unwrap();
        let p = again.outcomes().iter().find(|q| q.eigenvalue == o.eigenvalue).unwrap().probability;
        worst = worst.max(1.0 - p);
        ok &= sample(x, &once, rng, 100).unwrap().iter().all(|&v| v == o.eigenvalue);
    }
    (ok && worst <= COLLAPSE_TOL, worst)
}

fn measurement_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pass = true;
    let mut parts = Vec::new();
    let mut worst_collapse = 0.0f64;

    let pxz = pauli_xz();
    let s = match pxz.exact_final_state().unwrap() {
        trotter_mc::state::MixedOrPure::Pure(s) => s,
        _ => unreachable!(),
    };
    let mut fixtures: Vec<(String, ObservableSpec, PureState)> = vec![("pauli-xz".into(), pxz.observable().clone(), s)];

    let dims = vec![2, 2, 2];
    let x = ObservableSpec::from_hermitian(dims.clone(), &random_hermitian(&mut rng, 8)).unwrap();
    fixtures.push(("random 3-qubit".into(), x, random_state(&mut rng, dims)));

    let osc = oscillator();
    fixtures.push((
        "oscillator m=277".into(),
        osc.build_observable(1.0 / 277.0).unwrap(),
        osc.trotterized_by_dimension(277).unwrap(),
    ));

    for (name, x, s) in &fixtures {
        let dist = distribution(x, s).unwrap();
        let draws = sample(x, s, &mut rng, CHI_SQUARE_SAMPLES).unwrap();
        let (ok, line) = chi_square_fixture(name, &dist, &draws);
        pass &= ok;
        parts.push(line);
        let (ok, worst) = collapse_checks(x, s, &mut rng);
        pass &= ok;
        worst_collapse = worst_collapse.max(worst);
    }

    // ensemble with a degenerate diagonal observable
    let x = ObservableSpec::diagonal(vec![2, 2], &[0.0, 1.0, 1.0, 2.0]).unwrap();
    let e = EnsembleState::new(vec![
        (0.3, random_state(&mut rng, vec![2, 2])),
        (0.7, random_state(&mut rng, vec![2, 2])),
    ])
    .unwrap();
    let dist = distribution(&x, &e).unwrap();
    let draws = sample(&x, &e, &mut rng, CHI_SQUARE_SAMPLES).unwrap();
    let (ok, line) = chi_square_fixture("ensemble", &dist, &draws);
    pass &= ok;
    parts.push(line);

    Outcome {
        pass,
        detail: format!(
            "{} (α = {CHI_SQUARE_ALPHA}); collapse/repeat defect {worst_collapse:.1e} ≤ {COLLAPSE_TOL:e}",
            parts.join(", ")
        ),
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dims = vec![2, 2, 2];
    let mut worst = 0.0f64;
    for case in 0..ORACLE_CASES {
        let terms = vec![
            LocalTerm::new(vec![0, 1], random_hermitian(&mut rng, 4)).unwrap(),
            LocalTerm::new(vec![2, 1], random_hermitian(&mut rng, 4)).unwrap(),
            LocalTerm::new(vec![0], random_hermitian(&mut rng, 2)).unwrap(),
            LocalTerm::new(vec![0, 2, 1], random_hermitian(&mut rng, 8)).unwrap(),
        ];
        let h = HamiltonianSum::new(dims.clone(), terms).unwrap();
        let step = trotter_step(&h, 0.05 + 0.01 * (case % 7) as f64).unwrap();
        let m = 1 + case % 5;
        let psi = random_state(&mut rng, dims.clone());
        let contracted = evolve(&psi, &step, m).unwrap().final_state;
        let dense_step = step.factors().iter().fold(CMatrix::identity(8, 8), |acc, f| {
            embed_block(f.sites(), f.block(), &dims).unwrap() * acc
        });
        let mut v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        for _ in 0..m {
            v = &dense_step * v;
        }
        let diff = contracted.amplitudes().iter().zip(v.iter()).map(|(a, b): (&C64, &C64)| (a - b).norm());
        worst = worst.max(diff.fold(0.0, f64::max));
    }
    Outcome {
        pass: worst <= ORACLE_TOL,
        detail: format!("{ORACLE_CASES} cases, max entrywise difference {worst:.2e} ≤ {ORACLE_TOL:e}"),
    }
}

fn main() {
    let criteria = [
        Criterion { id: "1", name: "oscillator ground truth", limit: Duration::from_secs(1), check: ground_truth },
        Criterion { id: "2", name: "variance law", limit: Duration::from_secs(120), check: variance_law },
        Criterion { id: "3", name: "Trotter step-error order", limit: Duration::from_secs(10), check: step_error_order },
        Criterion {
            id: "4",
            name: "state-error and bias order",
            limit: Duration::from_secs(60),
            check: state_error_and_bias_order,
        },
        Criterion { id: "5", name: "subadditivity", limit: Duration::from_secs(5), check: subadditivity },
        Criterion {
            id: "6a",
            name: "allocator optimality",
            limit: Duration::from_secs(30),
            check: allocator_optimality,
        },
        Criterion { id: "6b", name: "allocator rate bound", limit: Duration::from_secs(30), check: allocator_rate },
        Criterion { id: "7", name: "sweep shape", limit: Duration::from_secs(300), check: sweep_shape },
        Criterion {
            id: "8",
            name: "measurement statistics",
            limit: Duration::from_secs(30),
            check: measurement_statistics,
        },
        Criterion { id: "9", name: "oracle equivalence", limit: Duration::from_secs(10), check: oracle_equivalence },
    ];

    let mut failed = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.check);
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= c.limit, o.detail),
            Err(_) => (false, "check panicked".to_string()),
        };
        println!(
            "{} criterion {} ({}): {}; runtime {:.2}s ≤ {}s",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
        if !pass {
            failed.push(c.id);
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
