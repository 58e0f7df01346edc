//! Observables in spectral form `X = Σ_a x_a Q_a`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::{hermitian_defect, HERMITIAN_TOLERANCE};
use crate::error::{Error, Result};
use crate::{CMatrix, C64};

/// Eigenvalues closer than this are merged into one spectral point.
pub const EIGENVALUE_MERGE_TOLERANCE: f64 = 1e-9;

const ORTHONORMAL_TOLERANCE: f64 = 1e-10;

/// Largest dense eigenbasis accepted (orthonormality check is cubic).
const DENSE_BASIS_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum Eigenbasis {
    /// Columns are the eigenvectors.
    Dense(CMatrix),
    /// `u_i = phase_i |i⟩`; each phase has unit modulus.
    PhasedComputational(Vec<C64>),
}

impl Eigenbasis {
    fn len(&self) -> usize {
        match self {
            Eigenbasis::Dense(m) => m.ncols(),
            Eigenbasis::PhasedComputational(p) => p.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Eigenbasis::Dense(m) => {
                if !m.is_square() {
                    return Err(Error::Shape(format!("eigenbasis is {}x{}", m.nrows(), m.ncols())));
                }
                if m.nrows() > DENSE_BASIS_LIMIT {
                    return Err(Error::Capacity { what: "dense eigenbasis", dim: m.nrows(), limit: DENSE_BASIS_LIMIT });
                }
                let n = m.nrows();
                let defect = (m.adjoint() * m - CMatrix::identity(n, n))
                    .iter()
                    .fold(0.0f64, |acc, z| acc.max(z.norm()));
                if defect > ORTHONORMAL_TOLERANCE {
                    return Err(Error::Validation(format!("eigenbasis not orthonormal (defect {defect:e})")));
                }
            }
            Eigenbasis::PhasedComputational(p) => {
                if let Some(z) = p.iter().find(|z| (z.norm() - 1.0).abs() > ORTHONORMAL_TOLERANCE) {
                    return Err(Error::Validation(format!("basis phase {z} is not unit modulus")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    dims: Vec<usize>,
    eigenvalues: Vec<f64>,
    basis: Eigenbasis,
    assignment: Vec<usize>,
}

impl ObservableSpec {
    /// `assignment[i]` is the index into `eigenvalues` owned by basis
    /// vector `i`. Eigenvalues must be pairwise separated by more than
    /// [`EIGENVALUE_MERGE_TOLERANCE`] and each must own a basis vector.
    pub fn new(dims: Vec<usize>, eigenvalues: Vec<f64>, basis: Eigenbasis, assignment: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if basis.len() != d || assignment.len() != d {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {d} basis vectors and assignments, got {} and {}",
                basis.len(),
                assignment.len()
            )));
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("eigenvalues must be finite".into()));
        }
        let mut sorted = eigenvalues.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[1] - w[0] <= EIGENVALUE_MERGE_TOLERANCE) {
            return Err(Error::Validation("eigenvalues are not pairwise distinct".into()));
        }
        let mut owned = vec![false; eigenvalues.len()];
        for &a in &assignment {
            if a >= eigenvalues.len() {
                return Err(Error::Shape(format!("assignment {a} out of range")));
            }
            owned[a] = true;
        }
        if owned.contains(&false) {
            return Err(Error::Validation("every eigenvalue needs at least one basis vector".into()));
        }
        basis.validate()?;
        Ok(Self { dims, eigenvalues, basis, assignment })
    }

    /// Groups per-vector eigenvalues into distinct spectral points.
    pub fn from_eigenpairs(dims: Vec<usize>, values: &[f64], basis: Eigenbasis) -> Result<Self> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let mut points: Vec<Vec<usize>> = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for &i in &order {
            if values[i] - last > EIGENVALUE_MERGE_TOLERANCE {
                points.push(Vec::new());
            }
            points.last_mut().unwrap().push(i);
            last = values[i];
        }
        let mut assignment = vec![0; values.len()];
        let mut eigenvalues = Vec::with_capacity(points.len());
        for (a, members) in points.iter().enumerate() {
            eigenvalues.push(members.iter().map(|&i| values[i]).sum::<f64>() / members.len() as f64);
            for &i in members {
                assignment[i] = a;
            }
        }
        Self::new(dims, eigenvalues, basis, assignment)
    }

    /// Diagonal in the computational basis.
    pub fn diagonal(dims: Vec<usize>, values: &[f64]) -> Result<Self> {
        Self::from_eigenpairs(dims, values, Eigenbasis::PhasedComputational(vec![C64::new(1.0, 0.0); values.len()]))
    }

    /// Spectral form of a dense Hermitian matrix.
    pub fn from_hermitian(dims: Vec<usize>, matrix: &CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Shape("observable matrix must be square".into()));
        }
        let defect = hermitian_defect(matrix);
        if defect > HERMITIAN_TOLERANCE {
            return Err(Error::Validation(format!("observable is not Hermitian (defect {defect:e})")));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let values: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        Self::from_eigenpairs(dims, &values, Eigenbasis::Dense(eig.eigenvectors))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.assignment.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &Eigenbasis {
        &self.basis
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Index of the spectral point equal to `x` within the merge tolerance.
    pub fn spectral_index(&self, x: f64) -> Option<usize> {
        self.eigenvalues.iter().position(|&e| (e - x).abs() <= EIGENVALUE_MERGE_TOLERANCE)
    }

    /// `c_i = ⟨u_i|ψ⟩`.
    pub fn coefficients(&self, amps: &[C64]) -> Vec<C64> {
        match &self.basis {
            Eigenbasis::Dense(m) => (m.adjoint() * nalgebra::DVector::from_column_slice(amps)).as_slice().to_vec(),
            Eigenbasis::PhasedComputational(p) => p.iter().zip(amps).map(|(ph, a)| ph.conj() * a).collect(),
        }
    }

    /// `Σ_i u_i c_i` for given coefficients.
    fn synthesize(&self, coeffs: &[C64]) -> Vec<C64> {
        match &self.basis {
            Eigenbasis::Dense(m) => (m * nalgebra::DVector::from_column_slice(coeffs)).as_slice().to_vec(),
            Eigenbasis::PhasedComputational(p) => p.iter().zip(coeffs).map(|(ph, c)| ph * c).collect(),
        }
    }

    /// `⟨ψ|Q_a|ψ⟩` for every spectral point `a` (unnormalized for non-unit input).
    pub fn spectral_weights(&self, amps: &[C64]) -> Vec<f64> {
        let mut w = vec![0.0; self.eigenvalues.len()];
        for (c, &a) in self.coefficients(amps).iter().zip(&self.assignment) {
            w[a] += c.norm_sqr();
        }
        w
    }

    /// `X|ψ⟩`.
    pub fn apply(&self, amps: &[C64]) -> Vec<C64> {
        let coeffs: Vec<C64> = self
            .coefficients(amps)
            .iter()
            .zip(&self.assignment)
            .map(|(c, &a)| c * self.eigenvalues[a])
            .collect();
        self.synthesize(&coeffs)
    }

    /// `Q_a|ψ⟩`.
    pub fn project(&self, a: usize, amps: &[C64]) -> Vec<C64> {
        let coeffs: Vec<C64> = self
            .coefficients(amps)
            .iter()
            .zip(&self.assignment)
            .map(|(c, &owner)| if owner == a { *c } else { C64::new(0.0, 0.0) })
            .collect();
        self.synthesize(&coeffs)
    }

    /// Dense `D×D` matrix, for oracle checks.
    pub fn to_dense(&self) -> Result<CMatrix> {
        let d = self.dim();
        if d > super::DENSE_LIMIT {
            return Err(Error::Capacity { what: "dense observable", dim: d, limit: super::DENSE_LIMIT });
        }
        let mut out = CMatrix::zeros(d, d);
        let mut e = vec![C64::new(0.0, 0.0); d];
        for j in 0..d {
            e[j] = C64::new(1.0, 0.0);
            out.set_column(j, &nalgebra::DVector::from_vec(self.apply(&e)));
            e[j] = C64::new(0.0, 0.0);
        }
        Ok(out)
    }

    pub fn to_record(&self) -> ObservableRecord {
        let d = self.dim();
        let vector = |i: usize| -> Vec<C64> {
            match &self.basis {
                Eigenbasis::Dense(m) => m.column(i).iter().cloned().collect(),
                Eigenbasis::PhasedComputational(p) => {
                    let mut v = vec![C64::new(0.0, 0.0); d];
                    v[i] = p[i];
                    v
                }
            }
        };
        let vectors: Vec<Vec<C64>> = (0..d).map(vector).collect();
        ObservableRecord {
            dims: Some(self.dims.clone()),
            eigenvalues: self.eigenvalues.clone(),
            basis_re: vectors.iter().map(|v| v.iter().map(|z| z.re).collect()).collect(),
            basis_im: vectors.iter().map(|v| v.iter().map(|z| z.im).collect()).collect(),
            assignment: self.assignment.clone(),
        }
    }

    pub fn from_record(record: ObservableRecord) -> Result<Self> {
        let d = record.basis_re.len();
        if record.basis_im.len() != d || record.basis_re.iter().chain(&record.basis_im).any(|v| v.len() != d) {
            return Err(Error::Shape("basis_re/basis_im must hold D vectors of length D".into()));
        }
        let basis = CMatrix::from_fn(d, d, |r, c| C64::new(record.basis_re[c][r], record.basis_im[c][r]));
        let dims = record.dims.unwrap_or_else(|| vec![d]);
        Self::new(dims, record.eigenvalues, Eigenbasis::Dense(basis), record.assignment)
    }
}

/// JSON form `{eigenvalues, basis_re, basis_im, assignment}`; `basis_re[i]`
/// holds the real parts of eigenvector `i`. `dims` defaults to `[D]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    pub eigenvalues: Vec<f64>,
    pub basis_re: Vec<Vec<f64>>,
    pub basis_im: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_eigenvalues_merge() {
        let x = ObservableSpec::diagonal(vec![4], &[1.0, 2.0, 1.0 + 1e-12, 2.0]).unwrap();
        assert_eq!(x.eigenvalues().len(), 2);
        assert_eq!(x.assignment(), &[0, 1, 0, 1]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let basis = Eigenbasis::PhasedComputational(vec![C64::new(1.0, 0.0); 2]);
        assert!(ObservableSpec::new(vec![2], vec![1.0, 1.0], basis.clone(), vec![0, 1]).is_err());
        assert!(ObservableSpec::new(vec![2], vec![1.0, 2.0], basis.clone(), vec![0, 2]).is_err());
        assert!(ObservableSpec::new(vec![2], vec![1.0, 2.0, 3.0], basis, vec![0, 1]).is_err());
        let skew = Eigenbasis::Dense(CMatrix::from_element(2, 2, C64::new(1.0, 0.0)));
        assert!(ObservableSpec::new(vec![2], vec![1.0, 2.0], skew, vec![0, 1]).is_err());
    }

    #[test]
    fn completeness_and_dense_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian(&mut rng, 16);
        let x = ObservableSpec::from_hermitian(vec![2, 2, 2, 2], &h).unwrap();
        for _ in 0..20 {
            let s = random_state(&mut rng, vec![2, 2, 2, 2]);
            let total: f64 = x.spectral_weights(s.amplitudes()).iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
        let back = x.to_dense().unwrap();
        assert!((back - h).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn projectors_are_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(&mut rng, 8);
        let x = ObservableSpec::from_hermitian(vec![8], &h).unwrap();
        let s = random_state(&mut rng, vec![8]);
        let once = x.project(3, s.amplitudes());
        let twice = x.project(3, &once);
        assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn record_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ObservableSpec::from_hermitian(vec![2, 2], &random_hermitian(&mut rng, 4)).unwrap();
        let json = serde_json::to_string(&x.to_record()).unwrap();
        let back = ObservableSpec::from_record(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, x);
    }
}
