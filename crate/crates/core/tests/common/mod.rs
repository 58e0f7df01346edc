#![allow(dead_code)]

use rand::Rng;
use trotter_mc::operators::hermitian_exponential;
use trotter_mc::state::PureState;
use trotter_mc::{CMatrix, C64};

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    (&a + a.adjoint()).scale(0.5)
}

pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    hermitian_exponential(&random_hermitian(rng, n), 3.0).unwrap()
}

pub fn random_state(rng: &mut impl Rng, dims: Vec<usize>) -> PureState {
    let d = dims.iter().product();
    let amps = (0..d).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    PureState::normalized(dims, amps).unwrap()
}

pub fn pauli_x() -> CMatrix {
    let c = |re: f64| C64::new(re, 0.0);
    CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_z() -> CMatrix {
    let c = |re: f64| C64::new(re, 0.0);
    CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

/// Pearson statistic after pooling bins whose expected count is below 5,
/// and the upper-tail p-value.
pub fn chi_square(observed: &[u64], probabilities: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: u64 = observed.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pending = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        pending.0 += o as f64;
        pending.1 += p * total as f64;
        if pending.1 >= 5.0 {
            bins.push(pending);
            pending = (0.0, 0.0);
        }
    }
    if pending.1 > 0.0 || pending.0 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += pending.0;
                last.1 += pending.1;
            }
            None => bins.push(pending),
        }
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1).max(1) as f64;
    (stat, 1.0 - ChiSquared::new(dof).unwrap().cdf(stat))
}
