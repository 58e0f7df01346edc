//! Local Hamiltonian terms and the operators built from them.
//!
//! States are never multiplied by full `D×D` matrices on the hot path:
//! [`apply_factor`] contracts a small block against the touched
//! subsystems only. [`embed_local`] materializes the Kronecker embedding
//! and exists for oracle checks and small dense propagators.

mod distance;
mod observable;

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::PureState;
use crate::{CMatrix, C64};

pub use distance::{operator_distance, operator_distance_with, GammaOptions, LinearMap, Power};
pub use observable::{Eigenbasis, ObservableRecord, ObservableSpec, EIGENVALUE_MERGE_TOLERANCE};

/// Guard on dense `D×D` materialization.
pub const DENSE_LIMIT: usize = 4096;

/// Hermiticity tolerance for local blocks.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Unitarity tolerance for factor blocks.
pub const UNITARY_TOLERANCE: f64 = 1e-10;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub(crate) fn hermitian_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub(crate) fn unitary_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    max_abs(&(m * m.adjoint() - CMatrix::identity(n, n)))
}

/// Checks that `sites` are distinct, in range, and returns the product of
/// their dimensions.
fn support_dim(sites: &[usize], dims: &[usize]) -> Result<usize> {
    if sites.is_empty() {
        return Err(Error::Shape("term acts on no sites".into()));
    }
    for (i, &s) in sites.iter().enumerate() {
        if s >= dims.len() {
            return Err(Error::Shape(format!("site {s} out of range for dims {dims:?}")));
        }
        if sites[..i].contains(&s) {
            return Err(Error::Shape(format!("site {s} repeated in {sites:?}")));
        }
    }
    Ok(sites.iter().map(|&s| dims[s]).product())
}

fn total_dim(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Index tables for contracting a block on `sites`.
///
/// `offsets[l]` is the full-space offset of block-local index `l` (with
/// `sites[0]` the least-significant block digit); `bases` lists every
/// full-space index whose touched digits are all zero.
#[derive(Debug)]
pub(crate) struct SupportIndex {
    pub offsets: Vec<usize>,
    pub bases: Vec<usize>,
}

impl SupportIndex {
    pub(crate) fn new(sites: &[usize], dims: &[usize]) -> Result<Self> {
        let block = support_dim(sites, dims)?;
        let mut strides = Vec::with_capacity(dims.len());
        let mut acc = 1;
        for &d in dims {
            strides.push(acc);
            acc *= d;
        }
        let full = acc;
        let mut offsets = Vec::with_capacity(block);
        for l in 0..block {
            let mut rem = l;
            let mut off = 0;
            for &s in sites {
                off += (rem % dims[s]) * strides[s];
                rem /= dims[s];
            }
            offsets.push(off);
        }
        let bases = (0..full)
            .filter(|&i| sites.iter().all(|&s| (i / strides[s]) % dims[s] == 0))
            .collect();
        Ok(Self { offsets, bases })
    }

    /// Block-local index of full index `i`, and its base.
    #[cfg(test)]
    fn split(&self, i: usize, sites: &[usize], dims: &[usize]) -> (usize, usize) {
        let mut strides = vec![0; dims.len()];
        let mut acc = 1;
        for (k, &d) in dims.iter().enumerate() {
            strides[k] = acc;
            acc *= d;
        }
        let mut local = 0;
        let mut mult = 1;
        let mut base = i;
        for &s in sites {
            let digit = (i / strides[s]) % dims[s];
            local += digit * mult;
            mult *= dims[s];
            base -= digit * strides[s];
        }
        (local, base)
    }
}

/// Applies `block` on `sites` to raw amplitudes in place.
pub(crate) fn contract_in_place(index: &SupportIndex, block: &CMatrix, amps: &mut [C64]) {
    let b = index.offsets.len();
    let mut gathered = vec![C64::new(0.0, 0.0); b];
    for &base in &index.bases {
        for (g, &off) in gathered.iter_mut().zip(&index.offsets) {
            *g = amps[base + off];
        }
        for (r, &off) in index.offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (c, g) in gathered.iter().enumerate() {
                acc += block[(r, c)] * g;
            }
            amps[base + off] = acc;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    sites: Vec<usize>,
    block: CMatrix,
}

impl LocalTerm {
    /// Rejects non-square or non-Hermitian blocks; sites are checked
    /// against dims when the term joins a [`HamiltonianSum`].
    pub fn new(sites: Vec<usize>, block: CMatrix) -> Result<Self> {
        if !block.is_square() {
            return Err(Error::Shape(format!(
                "block is {}x{}, expected square",
                block.nrows(),
                block.ncols()
            )));
        }
        let defect = hermitian_defect(&block);
        if defect > HERMITIAN_TOLERANCE {
            return Err(Error::Validation(format!("block is not Hermitian (defect {defect:e})")));
        }
        Ok(Self { sites, block })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn block(&self) -> &CMatrix {
        &self.block
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { sites: self.sites.clone(), block: self.block.scale(factor) }
    }
}

/// `H = Σ_ℓ H_ℓ` over a tensor-product space.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSum {
    dims: Vec<usize>,
    terms: Vec<LocalTerm>,
}

impl HamiltonianSum {
    pub fn new(dims: Vec<usize>, terms: Vec<LocalTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Validation("Hamiltonian needs at least one term".into()));
        }
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid dims {dims:?}")));
        }
        for t in &terms {
            let d = support_dim(&t.sites, &dims)?;
            if d != t.block.nrows() {
                return Err(Error::Shape(format!(
                    "term on sites {:?} needs a {d}x{d} block, got {}x{}",
                    t.sites,
                    t.block.nrows(),
                    t.block.ncols()
                )));
            }
        }
        Ok(Self { dims, terms })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        total_dim(&self.dims)
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    /// True when no two terms share a site (all terms commute).
    pub fn has_disjoint_supports(&self) -> bool {
        let mut seen = vec![false; self.dims.len()];
        for t in &self.terms {
            for &s in &t.sites {
                if seen[s] {
                    return false;
                }
                seen[s] = true;
            }
        }
        true
    }

    /// Dense `Σ_ℓ embed(H_ℓ)`.
    pub fn to_dense(&self) -> Result<CMatrix> {
        let d = self.dim();
        let mut h = CMatrix::zeros(d, d);
        for t in &self.terms {
            h += embed_local(t, &self.dims)?;
        }
        Ok(h)
    }

    /// Each term split into two equal halves, doubling L.
    pub fn split_terms(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .flat_map(|t| [t.scaled(0.5), t.scaled(0.5)])
            .collect();
        Self { dims: self.dims.clone(), terms }
    }

    pub fn to_record(&self) -> HamiltonianRecord {
        HamiltonianRecord {
            dims: self.dims.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let n = t.block.nrows();
                    let rows = |f: fn(&C64) -> f64| {
                        (0..n).map(|r| (0..n).map(|c| f(&t.block[(r, c)])).collect()).collect()
                    };
                    TermRecord { sites: t.sites.clone(), block_re: rows(|z| z.re), block_im: rows(|z| z.im) }
                })
                .collect(),
        }
    }

    pub fn from_record(record: HamiltonianRecord) -> Result<Self> {
        let terms = record
            .terms
            .into_iter()
            .map(|t| LocalTerm::new(t.sites, matrix_from_parts(&t.block_re, &t.block_im)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(record.dims, terms)
    }
}

/// JSON form `{dims, terms: [{sites, block_re, block_im}]}`; blocks are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianRecord {
    pub dims: Vec<usize>,
    pub terms: Vec<TermRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub sites: Vec<usize>,
    pub block_re: Vec<Vec<f64>>,
    pub block_im: Vec<Vec<f64>>,
}

pub(crate) fn matrix_from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMatrix> {
    let n = re.len();
    if im.len() != n || re.iter().chain(im).any(|row| row.len() != n) {
        return Err(Error::Shape("block_re/block_im must be matching square arrays".into()));
    }
    Ok(CMatrix::from_fn(n, n, |r, c| C64::new(re[r][c], im[r][c])))
}

/// Kronecker embedding of a term's block with identity on untouched sites.
pub fn embed_local(term: &LocalTerm, dims: &[usize]) -> Result<CMatrix> {
    embed_block(&term.sites, &term.block, dims)
}

pub fn embed_block(sites: &[usize], block: &CMatrix, dims: &[usize]) -> Result<CMatrix> {
    let d = total_dim(dims);
    if d > DENSE_LIMIT {
        return Err(Error::Capacity { what: "dense embedding", dim: d, limit: DENSE_LIMIT });
    }
    let index = SupportIndex::new(sites, dims)?;
    if block.nrows() != index.offsets.len() || !block.is_square() {
        return Err(Error::Shape(format!(
            "block {}x{} does not match support dimension {}",
            block.nrows(),
            block.ncols(),
            index.offsets.len()
        )));
    }
    let mut out = CMatrix::zeros(d, d);
    for &base in &index.bases {
        for (r, &ro) in index.offsets.iter().enumerate() {
            for (c, &co) in index.offsets.iter().enumerate() {
                out[(base + ro, base + co)] = block[(r, c)];
            }
        }
    }
    Ok(out)
}

/// Contracts `block` on `sites` against the state's amplitudes without
/// materializing the full-space matrix. The block need not be unitary, so
/// the raw amplitude vector is returned.
pub fn apply_factor(sites: &[usize], block: &CMatrix, state: &PureState) -> Result<Vec<C64>> {
    let index = SupportIndex::new(sites, state.dims())?;
    if block.nrows() != index.offsets.len() || !block.is_square() {
        return Err(Error::Shape(format!(
            "block {}x{} does not match support dimension {}",
            block.nrows(),
            block.ncols(),
            index.offsets.len()
        )));
    }
    let mut amps = state.amplitudes().to_vec();
    contract_in_place(&index, block, &mut amps);
    Ok(amps)
}

/// `e^{-i·block·dt}` for a Hermitian block via its eigendecomposition.
pub fn hermitian_exponential(block: &CMatrix, dt: f64) -> Result<CMatrix> {
    if !dt.is_finite() {
        return Err(Error::Validation(format!("time step {dt} is not finite")));
    }
    let defect = hermitian_defect(block);
    if defect > HERMITIAN_TOLERANCE {
        return Err(Error::Validation(format!("block is not Hermitian (defect {defect:e})")));
    }
    let eig = SymmetricEigen::new(block.clone());
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&lam| C64::from_polar(1.0, -lam * dt)),
    ));
    Ok(v * phases * v.adjoint())
}

/// One factor of a product formula: a unitary block on a set of sites.
#[derive(Debug, Clone)]
pub struct Factor {
    sites: Vec<usize>,
    block: Arc<CMatrix>,
}

impl Factor {
    pub fn new(sites: Vec<usize>, block: CMatrix) -> Self {
        Self { sites, block: Arc::new(block) }
    }

    pub(crate) fn shared(sites: Vec<usize>, block: Arc<CMatrix>) -> Self {
        Self { sites, block }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn block(&self) -> &CMatrix {
        &self.block
    }

    fn adjoint(&self) -> Self {
        Self::new(self.sites.clone(), self.block.adjoint())
    }
}

/// `(sites, e^{-i H_ℓ dt})`.
pub fn local_exponential(term: &LocalTerm, dt: f64) -> Result<Factor> {
    Ok(Factor::new(term.sites.clone(), hermitian_exponential(&term.block, dt)?))
}

/// Ordered product of unitary factors; the first factor acts first.
#[derive(Debug, Clone)]
pub struct UnitaryFactorization {
    dims: Vec<usize>,
    factors: Vec<Factor>,
    indices: Vec<Arc<SupportIndex>>,
}

impl UnitaryFactorization {
    pub fn new(dims: Vec<usize>, factors: Vec<Factor>) -> Result<Self> {
        let mut indices: Vec<Arc<SupportIndex>> = Vec::with_capacity(factors.len());
        for (k, f) in factors.iter().enumerate() {
            let defect = unitary_defect(&f.block);
            if defect > UNITARY_TOLERANCE {
                return Err(Error::Validation(format!("factor {k} is not unitary (defect {defect:e})")));
            }
            // factors on the same sites share their index tables
            let reuse = factors[..k].iter().position(|g| g.sites == f.sites);
            let index = match reuse {
                Some(j) => Arc::clone(&indices[j]),
                None => Arc::new(SupportIndex::new(&f.sites, &dims)?),
            };
            if index.offsets.len() != f.block.nrows() {
                return Err(Error::Shape(format!(
                    "factor {k} block is {}x{}, support dimension {}",
                    f.block.nrows(),
                    f.block.ncols(),
                    index.offsets.len()
                )));
            }
            indices.push(index);
        }
        Ok(Self { dims, factors, indices })
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        Self { dims, factors: Vec::new(), indices: Vec::new() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        total_dim(&self.dims)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// The inverse product: reversed order, adjoint blocks.
    pub fn adjoint(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            factors: self.factors.iter().rev().map(Factor::adjoint).collect(),
            indices: self.indices.iter().rev().cloned().collect(),
        }
    }

    /// `other ∘ self`: applies `self` first.
    pub fn then(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("dims {:?} vs {:?}", self.dims, other.dims)));
        }
        let mut out = self.clone();
        out.factors.extend(other.factors.iter().cloned());
        out.indices.extend(other.indices.iter().cloned());
        Ok(out)
    }

    pub(crate) fn apply_in_place(&self, amps: &mut [C64]) {
        for (f, idx) in self.factors.iter().zip(&self.indices) {
            contract_in_place(idx, &f.block, amps);
        }
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        if state.dims() != self.dims {
            return Err(Error::Shape(format!("state dims {:?} vs operator dims {:?}", state.dims(), self.dims)));
        }
        let mut amps = state.amplitudes().to_vec();
        self.apply_in_place(&mut amps);
        Ok(PureState::from_parts_unchecked(self.dims.clone(), amps))
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        let d = self.dim();
        if d > DENSE_LIMIT {
            return Err(Error::Capacity { what: "dense factorization", dim: d, limit: DENSE_LIMIT });
        }
        Ok(distance::densify(self))
    }
}

/// `e^{-iHt}` either as a dense matrix or as commuting local factors.
#[derive(Debug, Clone)]
pub enum Propagator {
    Dense { dims: Vec<usize>, matrix: CMatrix },
    Factorized(UnitaryFactorization),
}

impl Propagator {
    pub fn dims(&self) -> &[usize] {
        match self {
            Propagator::Dense { dims, .. } => dims,
            Propagator::Factorized(f) => f.dims(),
        }
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        match self {
            Propagator::Dense { dims, matrix } => {
                if state.dims() != dims.as_slice() {
                    return Err(Error::Shape(format!("state dims {:?} vs {:?}", state.dims(), dims)));
                }
                let v = nalgebra::DVector::from_column_slice(state.amplitudes());
                let out = matrix * v;
                Ok(PureState::from_parts_unchecked(dims.clone(), out.as_slice().to_vec()))
            }
            Propagator::Factorized(f) => f.apply(state),
        }
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        match self {
            Propagator::Dense { matrix, .. } => Ok(matrix.clone()),
            Propagator::Factorized(f) => f.to_dense(),
        }
    }
}

/// Exact `e^{-iHt}`. Terms on pairwise-disjoint sites commute and give a
/// factorized propagator; otherwise the dense Hamiltonian is
/// diagonalized, which requires `D ≤ DENSE_LIMIT`.
pub fn exact_propagator(h: &HamiltonianSum, t: f64) -> Result<Propagator> {
    if !t.is_finite() {
        return Err(Error::Validation(format!("time {t} is not finite")));
    }
    if h.has_disjoint_supports() {
        let factors = h
            .terms
            .iter()
            .map(|term| local_exponential(term, t))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Propagator::Factorized(UnitaryFactorization::new(h.dims.clone(), factors)?));
    }
    let d = h.dim();
    if d > DENSE_LIMIT {
        return Err(Error::Capacity { what: "dense propagator", dim: d, limit: DENSE_LIMIT });
    }
    let matrix = hermitian_exponential(&h.to_dense()?, t)?;
    Ok(Propagator::Dense { dims: h.dims.clone(), matrix })
}
