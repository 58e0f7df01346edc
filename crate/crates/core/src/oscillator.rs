//! The `d`-dimensional isotropic harmonic oscillator in a truncated
//! Hermite basis, with `K` levels per dimension.
//!
//! Basis label `k⃗ = (k_1, …, k_d)` maps to index `Σ k_j K^{j−1}`. The
//! Hamiltonian `H = Σ_j (ξ_j² − ∇_j²)/2` is diagonal with eigenvalues
//! `Σ k_j + d/2`, so exact evolution is a phase per label. The Trotterized
//! evolution splits each `H_j` into its `ξ²` and `−∇²` parts, which do not
//! commute once truncated.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::MonteCarloSystem;
use crate::measurement::{distribution, OutcomeDistribution};
use crate::operators::{Eigenbasis, HamiltonianSum, LocalTerm, ObservableSpec};
use crate::parallel::map_ordered;
use crate::state::PureState;
use crate::trotter::trotter_step;
use crate::{CMatrix, C64};

pub const MAX_HERMITE_ORDER: usize = 30;
pub const MAX_HERMITE_ARGUMENT: f64 = 20.0;
/// Largest `K^d` accepted by [`OscillatorSystem::new`].
pub const CAPACITY: usize = 1 << 20;
/// `X` eigenvalues are `(Σ k_j + d/2) / OBSERVABLE_SCALE`.
pub const OBSERVABLE_SCALE: f64 = 20.0;

const ORTHONORMALITY_TOLERANCE: f64 = 1e-8;

fn check_order(k: usize) -> Result<()> {
    if k > MAX_HERMITE_ORDER {
        return Err(Error::Validation(format!("Hermite order {k} exceeds {MAX_HERMITE_ORDER}")));
    }
    Ok(())
}

/// `p_0..=p_k` at `x`, where `h_k(x) = p_k(x) e^{-x²/2}`.
fn hermite_polynomials(k: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(k + 1);
    p.push(std::f64::consts::PI.powf(-0.25));
    if k >= 1 {
        p.push(std::f64::consts::SQRT_2 * x * p[0]);
    }
    for j in 1..k {
        let next = (2.0 / (j + 1) as f64).sqrt() * x * p[j] - (j as f64 / (j + 1) as f64).sqrt() * p[j - 1];
        p.push(next);
    }
    p
}

/// Normalized Hermite function `h_k(x)`.
pub fn hermite_eval(k: usize, x: f64) -> Result<f64> {
    check_order(k)?;
    if !(x.is_finite() && x.abs() <= MAX_HERMITE_ARGUMENT) {
        return Err(Error::Validation(format!("|x| = {} exceeds {MAX_HERMITE_ARGUMENT}", x.abs())));
    }
    Ok(hermite_polynomials(k, x)[k] * (-0.5 * x * x).exp())
}

/// Gauss–Hermite nodes and weights for `∫ f(x) e^{-x²} dx`, from the
/// eigendecomposition of the Jacobi matrix.
pub fn gauss_hermite(points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if points == 0 {
        return Err(Error::Validation("quadrature needs at least one point".into()));
    }
    let mut jacobi = DMatrix::<f64>::zeros(points, points);
    for i in 1..points {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteBasis {
    levels: usize,
}

impl HermiteBasis {
    /// Checks orthonormality of `h_0..h_{K−1}` under quadrature.
    pub fn new(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Validation(format!("truncation K = {levels} must be at least 2")));
        }
        check_order(levels - 1)?;
        let basis = Self { levels };
        let defect = basis.orthonormality_defect()?;
        if defect > ORTHONORMALITY_TOLERANCE {
            return Err(Error::NumericalInstability(format!("Hermite basis defect {defect:e}")));
        }
        Ok(basis)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn eval(&self, k: usize, x: f64) -> Result<f64> {
        if k >= self.levels {
            return Err(Error::Validation(format!("level {k} outside truncation K = {}", self.levels)));
        }
        hermite_eval(k, x)
    }

    /// Gram matrix `⟨h_j, h_k⟩` by Gauss–Hermite quadrature.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let k = self.levels;
        let (nodes, weights) = gauss_hermite(k + 8)?;
        let mut g = DMatrix::zeros(k, k);
        for (x, w) in nodes.iter().zip(&weights) {
            let p = hermite_polynomials(k - 1, *x);
            for i in 0..k {
                for j in 0..k {
                    g[(i, j)] += w * p[i] * p[j];
                }
            }
        }
        Ok(g)
    }

    pub fn orthonormality_defect(&self) -> Result<f64> {
        let g = self.gram()?;
        let n = self.levels;
        Ok((g - DMatrix::identity(n, n)).iter().fold(0.0f64, |acc, x| acc.max(x.abs())))
    }
}

/// Truncated lowering `A⁻` (entries `√(k+1)` at `(k, k+1)`) and raising
/// `A⁺ = (A⁻)ᵀ`.
pub fn ladder_matrices(levels: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut lower = DMatrix::zeros(levels, levels);
    for k in 0..levels.saturating_sub(1) {
        lower[(k, k + 1)] = ((k + 1) as f64).sqrt();
    }
    let raise = lower.transpose();
    (lower, raise)
}

/// Truncated projections of `ξ²` and `−∇²`: both have diagonal `k + 1/2`;
/// the `(k, k+2)` entries are `±√((k+1)(k+2))/2`.
pub fn quadrature_matrices(levels: usize) -> Result<(CMatrix, CMatrix)> {
    if levels < 2 {
        return Err(Error::Validation(format!("truncation K = {levels} must be at least 2")));
    }
    let mut xi2 = CMatrix::zeros(levels, levels);
    let mut lap = CMatrix::zeros(levels, levels);
    for k in 0..levels {
        let diag = C64::new(k as f64 + 0.5, 0.0);
        xi2[(k, k)] = diag;
        lap[(k, k)] = diag;
        if k + 2 < levels {
            let off = C64::new((((k + 1) * (k + 2)) as f64).sqrt() / 2.0, 0.0);
            xi2[(k, k + 2)] = off;
            xi2[(k + 2, k)] = off;
            lap[(k, k + 2)] = -off;
            lap[(k + 2, k)] = -off;
        }
    }
    Ok((xi2, lap))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorConfig {
    pub dimensions: usize,
    pub levels: usize,
    pub horizon: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self { dimensions: 6, levels: 4, horizon: 1.0 }
    }
}

/// Values recomputed by enumeration over every basis label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundTruth {
    pub theta: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub dims: usize,
}

#[derive(Debug, Clone)]
pub struct OscillatorSystem {
    config: OscillatorConfig,
    /// `d` terms, `H_j = diag(k + 1/2)` on site `j`.
    hamiltonian: HamiltonianSum,
    /// `2d` terms: `ξ_j²/2` for every `j`, then `−∇_j²/2` for every `j`.
    split: HamiltonianSum,
    factors: Vec<PureState>,
    initial: PureState,
    /// `Σ_j k_j` per basis index.
    level_sums: Vec<u32>,
}

impl OscillatorSystem {
    pub fn new(config: OscillatorConfig) -> Result<Self> {
        let OscillatorConfig { dimensions: d, levels: k, horizon } = config;
        if d == 0 {
            return Err(Error::Validation("need at least one dimension".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
        }
        HermiteBasis::new(k)?;
        let dim = (k as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
        if dim > CAPACITY as u128 {
            return Err(Error::Capacity { what: "oscillator basis", dim: dim.min(usize::MAX as u128) as usize, limit: CAPACITY });
        }
        let dims = vec![k; d];
        let (xi2, lap) = quadrature_matrices(k)?;
        let h_j = (&xi2 + &lap).scale(0.5);
        let hamiltonian =
            HamiltonianSum::new(dims.clone(), (0..d).map(|j| LocalTerm::new(vec![j], h_j.clone())).collect::<Result<_>>()?)?;
        let mut split_terms = Vec::with_capacity(2 * d);
        for j in 0..d {
            split_terms.push(LocalTerm::new(vec![j], xi2.scale(0.5))?);
        }
        for j in 0..d {
            split_terms.push(LocalTerm::new(vec![j], lap.scale(0.5))?);
        }
        let split = HamiltonianSum::new(dims, split_terms)?;

        let uniform = C64::new(1.0 / (k as f64).sqrt(), 0.0);
        let factors: Vec<PureState> =
            (0..d).map(|_| PureState::new(vec![k], vec![uniform; k])).collect::<Result<_>>()?;
        let initial = PureState::product(&factors)?;

        let n = dim as usize;
        let level_sums = (0..n)
            .map(|mut i| {
                let mut s = 0u32;
                for _ in 0..d {
                    s += (i % k) as u32;
                    i /= k;
                }
                s
            })
            .collect();
        Ok(Self { config, hamiltonian, split, factors, initial, level_sums })
    }

    pub fn config(&self) -> &OscillatorConfig {
        &self.config
    }

    pub fn dims(&self) -> &[usize] {
        self.hamiltonian.dims()
    }

    pub fn dim(&self) -> usize {
        self.level_sums.len()
    }

    pub fn hamiltonian(&self) -> &HamiltonianSum {
        &self.hamiltonian
    }

    pub fn split_hamiltonian(&self) -> &HamiltonianSum {
        &self.split
    }

    pub fn initial_state(&self) -> &PureState {
        &self.initial
    }

    /// `E = Σ k_j + d/2` at basis index `i`.
    pub fn energy(&self, i: usize) -> f64 {
        self.level_sums[i] as f64 + self.config.dimensions as f64 / 2.0
    }

    /// `X` eigenvalue at basis index `i`.
    pub fn weight(&self, i: usize) -> f64 {
        self.energy(i) / OBSERVABLE_SCALE
    }

    /// Qubit register value `z(b)` of basis index `i`. For `K = 2^q`, bit
    /// `b` of `k_j` is qubit `j + b·d`, so at `K = 4` we get
    /// `k⃗ = (z_1..z_d) + 2(z_{d+1}..z_{2d})`. Other `K` fall back to the
    /// basis index itself.
    pub fn register_value(&self, i: usize) -> u64 {
        let OscillatorConfig { dimensions: d, levels: k, .. } = self.config;
        if !k.is_power_of_two() {
            return i as u64;
        }
        let q = k.trailing_zeros() as usize;
        let mut rest = i;
        let mut z = 0u64;
        for j in 0..d {
            let kj = rest % k;
            rest /= k;
            for b in 0..q {
                if kj >> b & 1 == 1 {
                    z |= 1 << (j + b * d);
                }
            }
        }
        z
    }

    /// `X = (1/20) Σ (Σk + d/2) Q_{u_z}` with `u_z = e^{-iE_z z(b) δ}|z⟩`.
    pub fn build_observable(&self, delta: f64) -> Result<ObservableSpec> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Validation(format!("observable step must be positive, got {delta}")));
        }
        let n = self.dim();
        let phases = (0..n)
            .map(|i| C64::from_polar(1.0, -self.energy(i) * self.register_value(i) as f64 * delta))
            .collect();
        let values: Vec<f64> = (0..n).map(|i| self.weight(i)).collect();
        ObservableSpec::from_eigenpairs(self.dims().to_vec(), &values, Eigenbasis::PhasedComputational(phases))
    }

    /// `e^{-iHt}φ₀` in closed form.
    pub fn exact_final_state(&self, t: f64) -> Result<PureState> {
        let amps = self
            .initial
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, a)| a * C64::from_polar(1.0, -self.energy(i) * t))
            .collect();
        PureState::new(self.dims().to_vec(), amps)
    }

    /// `U_δ^m φ₀` with `δ = T/m`, through the full-register factorization.
    pub fn trotterized_final_state(&self, m: usize) -> Result<PureState> {
        let step = trotter_step(&self.split, self.step_size(m)?)?;
        Ok(crate::trotter::evolve(&self.initial, &step, m)?.final_state)
    }

    /// Same state as [`OscillatorSystem::trotterized_final_state`], evolving
    /// each dimension on its own `K`-vector and taking the tensor product.
    pub fn trotterized_by_dimension(&self, m: usize) -> Result<PureState> {
        let delta = self.step_size(m)?;
        let d = self.config.dimensions;
        let k = self.config.levels;
        let dims: Vec<usize> = (0..d).collect();
        let factors = map_ordered(&dims, |&j| -> Result<PureState> {
            let terms = self
                .split
                .terms()
                .iter()
                .filter(|t| t.sites() == [j])
                .map(|t| LocalTerm::new(vec![0], t.block().clone()))
                .collect::<Result<Vec<_>>>()?;
            let step = trotter_step(&HamiltonianSum::new(vec![k], terms)?, delta)?.to_dense()?;
            let mut v = nalgebra::DVector::from_column_slice(self.factors[j].amplitudes());
            for _ in 0..m {
                v = &step * v;
            }
            PureState::new(vec![k], v.as_slice().to_vec())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        PureState::product(&factors)
    }

    fn step_size(&self, m: usize) -> Result<f64> {
        if m == 0 {
            return Err(Error::Validation("step count must be at least 1".into()));
        }
        Ok(self.config.horizon / m as f64)
    }

    /// `θ`, `tr(X²ρ)` and the variance by direct enumeration over labels.
    pub fn ground_truth(&self) -> GroundTruth {
        let n = self.dim() as f64;
        let (s1, s2) = (0..self.dim()).fold((0.0, 0.0), |(a, b), i| {
            let e = self.energy(i);
            (a + e, b + e * e)
        });
        let theta = s1 / (OBSERVABLE_SCALE * n);
        let second_moment = s2 / (OBSERVABLE_SCALE * OBSERVABLE_SCALE * n);
        GroundTruth { theta, second_moment, variance: second_moment - theta * theta, dims: self.dim() }
    }
}

impl MonteCarloSystem for OscillatorSystem {
    fn name(&self) -> &str {
        "oscillator"
    }

    fn horizon(&self) -> f64 {
        self.config.horizon
    }

    fn exact_distribution(&self) -> Result<OutcomeDistribution> {
        let t = self.config.horizon;
        distribution(&self.build_observable(t)?, &self.exact_final_state(t)?)
    }

    fn simulated_distribution(&self, steps: usize) -> Result<OutcomeDistribution> {
        let x = self.build_observable(self.step_size(steps)?)?;
        distribution(&x, &self.trotterized_by_dimension(steps)?)
    }
}
