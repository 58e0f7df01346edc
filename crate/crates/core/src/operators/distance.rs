//! The operator distance `Γ(U₁, U₂) = max_{‖φ‖=1} ‖(U₁ − U₂)φ‖`.
//!
//! Small operators (`D ≤ dense_limit`) are densified and the largest
//! singular value of the difference is taken from an SVD. Larger operators
//! use power iteration on `(U₁ − U₂)†(U₁ − U₂)`, which only needs forward
//! and adjoint applications.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Propagator, UnitaryFactorization};
use crate::error::{Error, Result};
use crate::{CMatrix, C64};

/// Anything that can act on (and adjoint-act on) an amplitude vector.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply_vec(&self, v: &[C64]) -> Vec<C64>;
    fn apply_adjoint_vec(&self, v: &[C64]) -> Vec<C64>;
}

impl LinearMap for CMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        (self * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
    }

    fn apply_adjoint_vec(&self, v: &[C64]) -> Vec<C64> {
        (self.adjoint() * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

impl LinearMap for UnitaryFactorization {
    fn dim(&self) -> usize {
        UnitaryFactorization::dim(self)
    }

    fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = v.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    fn apply_adjoint_vec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = v.to_vec();
        self.adjoint().apply_in_place(&mut out);
        out
    }
}

impl LinearMap for Propagator {
    fn dim(&self) -> usize {
        self.dims().iter().product()
    }

    fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        match self {
            Propagator::Dense { matrix, .. } => matrix.apply_vec(v),
            Propagator::Factorized(f) => f.apply_vec(v),
        }
    }

    fn apply_adjoint_vec(&self, v: &[C64]) -> Vec<C64> {
        match self {
            Propagator::Dense { matrix, .. } => matrix.apply_adjoint_vec(v),
            Propagator::Factorized(f) => f.apply_adjoint_vec(v),
        }
    }
}

/// `map^times`, applied lazily.
pub struct Power<'a, M: LinearMap + ?Sized> {
    pub map: &'a M,
    pub times: usize,
}

impl<M: LinearMap + ?Sized> LinearMap for Power<'_, M> {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.times).fold(v.to_vec(), |acc, _| self.map.apply_vec(&acc))
    }

    fn apply_adjoint_vec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.times).fold(v.to_vec(), |acc, _| self.map.apply_adjoint_vec(&acc))
    }
}

/// Columns are the images of the computational basis vectors.
pub(crate) fn densify<M: LinearMap + ?Sized>(map: &M) -> CMatrix {
    let d = map.dim();
    let mut out = CMatrix::zeros(d, d);
    let mut e = vec![C64::new(0.0, 0.0); d];
    for j in 0..d {
        e[j] = C64::new(1.0, 0.0);
        let col = map.apply_vec(&e);
        out.set_column(j, &nalgebra::DVector::from_vec(col));
        e[j] = C64::new(0.0, 0.0);
    }
    out
}

#[derive(Debug, Clone)]
pub struct GammaOptions {
    /// Operators up to this dimension go through the dense SVD.
    pub dense_limit: usize,
    /// Relative change in the top eigenvalue estimate that stops iteration.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Start vector for power iteration; a fixed seeded vector if absent.
    pub start: Option<Vec<C64>>,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self { dense_limit: 64, tolerance: 1e-8, max_iterations: 10_000, start: None }
    }
}

pub fn operator_distance<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: LinearMap + ?Sized,
    B: LinearMap + ?Sized,
{
    operator_distance_with(a, b, &GammaOptions::default())
}

pub fn operator_distance_with<A, B>(a: &A, b: &B, opts: &GammaOptions) -> Result<f64>
where
    A: LinearMap + ?Sized,
    B: LinearMap + ?Sized,
{
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::Shape(format!("operator dimensions {d} and {}", b.dim())));
    }
    if d <= opts.dense_limit {
        let diff = densify(a) - densify(b);
        let svd = diff.svd(false, false);
        return Ok(svd.singular_values.iter().cloned().fold(0.0, f64::max));
    }
    power_iteration(a, b, d, opts)
}

fn normalize(v: &mut [C64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
    n
}

fn power_iteration<A, B>(a: &A, b: &B, d: usize, opts: &GammaOptions) -> Result<f64>
where
    A: LinearMap + ?Sized,
    B: LinearMap + ?Sized,
{
    let mut v = match &opts.start {
        Some(s) if s.len() == d => s.clone(),
        Some(s) => return Err(Error::Shape(format!("start vector has length {}, expected {d}", s.len()))),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..d).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
        }
    };
    if normalize(&mut v) == 0.0 {
        return Err(Error::Validation("power iteration start vector is zero".into()));
    }

    // λ ≈ ‖Av‖² for unit v; A†A is PSD so λ increases monotonically.
    let gram = |v: &[C64]| -> (Vec<C64>, f64) {
        let av: Vec<C64> = a.apply_vec(v).iter().zip(b.apply_vec(v)).map(|(x, y)| x - y).collect();
        let lambda = av.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let w: Vec<C64> = a
            .apply_adjoint_vec(&av)
            .iter()
            .zip(b.apply_adjoint_vec(&av))
            .map(|(x, y)| x - y)
            .collect();
        (w, lambda)
    };

    let mut lambda_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let (mut w, lambda) = gram(&v);
        if lambda == 0.0 {
            return Ok(0.0);
        }
        residual = w.iter().zip(&v).map(|(x, y)| (x - y * lambda).norm_sqr()).sum::<f64>().sqrt();
        // the eigenvalue estimate can stall well before the vector settles
        // when the top of the spectrum is clustered, so both must be small
        if (lambda - lambda_prev).abs() <= opts.tolerance * lambda && residual <= opts.tolerance.sqrt() * lambda {
            return Ok(lambda.sqrt());
        }
        lambda_prev = lambda;
        normalize(&mut w);
        v = w;
    }
    Err(Error::Convergence { iterations: opts.max_iterations, residual })
}
