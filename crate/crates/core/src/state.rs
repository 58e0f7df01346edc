//! Pure states and weighted ensembles over a tensor-product basis.
//!
//! Basis index `i` is a mixed-radix number over `dims` with subsystem 0 as
//! the least-significant (fastest-varying) digit. Every Kronecker embedding
//! in the crate follows this ordering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Largest allowed deviation of a constructed state's norm from one.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Tolerance on ensemble weights summing to one.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    dims: Vec<usize>,
    amplitudes: Vec<C64>,
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Shape(format!("invalid subsystem dims {dims:?}")));
    }
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow")))?;
    if total != len {
        return Err(Error::Shape(format!(
            "dims {dims:?} give dimension {total}, got {len} amplitudes"
        )));
    }
    Ok(())
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

impl PureState {
    /// Builds a state, rejecting vectors whose norm is off by more than
    /// [`NORM_TOLERANCE`]. Use [`PureState::normalized`] to rescale.
    pub fn new(dims: Vec<usize>, amplitudes: Vec<C64>) -> Result<Self> {
        check_dims(&dims, amplitudes.len())?;
        let norm = norm_sqr(&amplitudes).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Validation(format!(
                "state norm {norm} deviates from 1 by more than {NORM_TOLERANCE:e}"
            )));
        }
        Ok(Self { dims, amplitudes })
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(dims: Vec<usize>, mut amplitudes: Vec<C64>) -> Result<Self> {
        check_dims(&dims, amplitudes.len())?;
        let norm = norm_sqr(&amplitudes).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Validation(format!("cannot normalize vector of norm {norm}")));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Ok(Self { dims, amplitudes })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(dims: Vec<usize>, index: usize) -> Result<Self> {
        let total: usize = dims.iter().product();
        if index >= total {
            return Err(Error::Shape(format!("basis index {index} out of range {total}")));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); total];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self::new(dims, amplitudes)
    }

    /// Tensor product of per-subsystem factors, factor 0 least significant.
    pub fn product(factors: &[PureState]) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::Validation("empty product".into()))?;
        let mut dims = first.dims.clone();
        let mut amps = first.amplitudes.clone();
        for f in &factors[1..] {
            let mut next = Vec::with_capacity(amps.len() * f.amplitudes.len());
            for &hi in &f.amplitudes {
                next.extend(amps.iter().map(|&lo| lo * hi));
            }
            amps = next;
            dims.extend_from_slice(&f.dims);
        }
        Self::new(dims, amps)
    }

    /// Used for evolved states whose norm drift is tracked by the caller.
    pub(crate) fn from_parts_unchecked(dims: Vec<usize>, amplitudes: Vec<C64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), amplitudes.len());
        Self { dims, amplitudes }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }

    pub fn to_record(&self) -> StateRecord {
        StateRecord {
            dims: self.dims.clone(),
            re: self.amplitudes.iter().map(|a| a.re).collect(),
            im: self.amplitudes.iter().map(|a| a.im).collect(),
        }
    }

    pub fn from_record(record: StateRecord) -> Result<Self> {
        if record.re.len() != record.im.len() {
            return Err(Error::Shape(format!(
                "re has {} entries, im has {}",
                record.re.len(),
                record.im.len()
            )));
        }
        let amps = record
            .re
            .iter()
            .zip(&record.im)
            .map(|(&re, &im)| C64::new(re, im))
            .collect();
        Self::new(record.dims, amps)
    }
}

/// JSON form of a pure state: `{dims, re, im}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub dims: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let record = StateRecord::deserialize(d)?;
        PureState::from_record(record).map_err(serde::de::Error::custom)
    }
}

/// Probabilistic mixture `ρ = Σ p_k |ψ_k⟩⟨ψ_k|`, kept in weighted form.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    components: Vec<(f64, PureState)>,
}

impl EnsembleState {
    pub fn new(components: Vec<(f64, PureState)>) -> Result<Self> {
        let (_, first) = components
            .first()
            .ok_or_else(|| Error::Validation("ensemble has no components".into()))?;
        let dims = first.dims();
        let mut total = 0.0;
        for (w, s) in &components {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Validation(format!("invalid ensemble weight {w}")));
            }
            if s.dims() != dims {
                return Err(Error::Shape(format!(
                    "ensemble component dims {:?} differ from {:?}",
                    s.dims(),
                    dims
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::Validation(format!("ensemble weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, PureState)] {
        &self.components
    }

    pub fn dims(&self) -> &[usize] {
        self.components[0].1.dims()
    }

    /// Applies the same map to every component, keeping the weights.
    pub fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&PureState) -> Result<PureState>,
    {
        let components = self
            .components
            .iter()
            .map(|(w, s)| Ok((*w, f(s)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }
}

/// Borrowed view over either kind of state.
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Pure(&'a PureState),
    Ensemble(&'a EnsembleState),
}

impl StateRef<'_> {
    pub fn dims(&self) -> &[usize] {
        match self {
            StateRef::Pure(s) => s.dims(),
            StateRef::Ensemble(e) => e.dims(),
        }
    }
}

impl<'a> From<&'a PureState> for StateRef<'a> {
    fn from(s: &'a PureState) -> Self {
        StateRef::Pure(s)
    }
}

impl<'a> From<&'a EnsembleState> for StateRef<'a> {
    fn from(e: &'a EnsembleState) -> Self {
        StateRef::Ensemble(e)
    }
}

/// Owned counterpart of [`StateRef`], used for system initial states.
#[derive(Debug, Clone, PartialEq)]
pub enum MixedOrPure {
    Pure(PureState),
    Ensemble(EnsembleState),
}

impl MixedOrPure {
    pub fn as_ref(&self) -> StateRef<'_> {
        match self {
            MixedOrPure::Pure(s) => StateRef::Pure(s),
            MixedOrPure::Ensemble(e) => StateRef::Ensemble(e),
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            MixedOrPure::Pure(s) => s.dims(),
            MixedOrPure::Ensemble(e) => e.dims(),
        }
    }

    pub fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&PureState) -> Result<PureState>,
    {
        Ok(match self {
            MixedOrPure::Pure(s) => MixedOrPure::Pure(f(s)?),
            MixedOrPure::Ensemble(e) => MixedOrPure::Ensemble(e.try_map(f)?),
        })
    }
}

fn same_dims(a: &PureState, b: &PureState) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::Shape(format!("dims {:?} vs {:?}", a.dims, b.dims)));
    }
    Ok(())
}

/// `⟨a|b⟩ = Σ conj(a_i) b_i`.
pub fn inner_product(a: &PureState, b: &PureState) -> Result<C64> {
    same_dims(a, b)?;
    Ok(a.amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Euclidean norm of `a − b` (phase sensitive).
pub fn state_distance(a: &PureState, b: &PureState) -> Result<f64> {
    same_dims(a, b)?;
    Ok(a.amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `min_α ‖a − e^{iα} b‖`, which for unit vectors is `√(2 − 2|⟨a|b⟩|)`.
pub fn phase_optimized_distance(a: &PureState, b: &PureState) -> Result<f64> {
    let overlap = inner_product(a, b)?.norm();
    Ok((2.0 - 2.0 * overlap).max(0.0).sqrt())
}
