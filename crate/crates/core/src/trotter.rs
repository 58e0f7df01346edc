//! Symmetric second-order product formula and its error studies.
//!
//! For `H = Σ_{ℓ=1}^{L} H_ℓ` one step is
//!
//! ```text
//! U_δ = [e^{-iH_1δ/2} ⋯ e^{-iH_Lδ/2}] [e^{-iH_Lδ/2} ⋯ e^{-iH_1δ/2}]
//! ```
//!
//! with local error `O(Lδ³)`; over a fixed horizon `T = mδ` the
//! accumulated operator error is `O(Lδ²)`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{
    exact_propagator, hermitian_exponential, operator_distance_with, Factor, GammaOptions,
    HamiltonianSum, Power, UnitaryFactorization,
};
use crate::parallel::map_ordered;
use crate::state::PureState;

/// Norm drift beyond this aborts evolution.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

/// Γ values below this are treated as numerical floor in slope fits.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// `t_j = jδ`, `j = 0..=m`, `δ = T/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
    pub delta: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Validation("step count must be at least 1".into()));
        }
        Ok(Self { horizon, steps, delta: horizon / steps as f64 })
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.delta
    }
}

/// Builds `U_δ` as `2L` factors: the half-step exponentials of `H_1..H_L`
/// followed by the same blocks in reverse order. Each distinct block is
/// computed once and shared. Negative `δ` gives the inverse step.
pub fn trotter_step(h: &HamiltonianSum, delta: f64) -> Result<UnitaryFactorization> {
    if !delta.is_finite() {
        return Err(Error::Validation(format!("step {delta} is not finite")));
    }
    let half: Vec<Arc<_>> = h
        .terms()
        .iter()
        .map(|t| hermitian_exponential(t.block(), delta / 2.0).map(Arc::new))
        .collect::<Result<_>>()?;
    let forward = h.terms().iter().zip(&half);
    let factors = forward
        .clone()
        .chain(forward.rev())
        .map(|(t, b)| Factor::shared(t.sites().to_vec(), Arc::clone(b)))
        .collect();
    UnitaryFactorization::new(h.dims().to_vec(), factors)
}

/// Which intermediate states [`evolve_with`] keeps.
#[derive(Debug, Clone, Default)]
pub enum Record {
    #[default]
    FinalOnly,
    All,
    /// Step indices in `1..=m`.
    At(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `(j, |ψ̃(t_j)⟩)` for the recorded indices, ascending.
    pub states: Vec<(usize, PureState)>,
    pub final_state: PureState,
    /// Largest `|‖ψ̃(t_j)‖ − 1|` seen.
    pub max_norm_drift: f64,
}

pub fn evolve(state0: &PureState, step: &UnitaryFactorization, m: usize) -> Result<Trajectory> {
    evolve_with(state0, step, m, &Record::FinalOnly)
}

/// Applies `step` `m` times. States are never renormalized; drift beyond
/// [`NORM_DRIFT_LIMIT`] is an error.
pub fn evolve_with(state0: &PureState, step: &UnitaryFactorization, m: usize, record: &Record) -> Result<Trajectory> {
    if state0.dims() != step.dims() {
        return Err(Error::Shape(format!("state dims {:?} vs step dims {:?}", state0.dims(), step.dims())));
    }
    let dims = state0.dims().to_vec();
    let mut amps = state0.amplitudes().to_vec();
    let mut states = Vec::new();
    let mut max_drift = 0.0f64;
    for j in 1..=m {
        step.apply_in_place(&mut amps);
        let drift = (amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift.is_nan() || drift > NORM_DRIFT_LIMIT {
            return Err(Error::NumericalInstability(format!("norm drift {drift:e} after step {j}")));
        }
        let keep = match record {
            Record::FinalOnly => false,
            Record::All => true,
            Record::At(idx) => idx.contains(&j),
        };
        if keep {
            states.push((j, PureState::from_parts_unchecked(dims.clone(), amps.clone())));
        }
    }
    Ok(Trajectory { states, final_state: PureState::from_parts_unchecked(dims, amps), max_norm_drift: max_drift })
}

/// Step counts compared in an error study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum StepSeries {
    /// `Γ(U_δ^j, e^{-iHjδ})` at a fixed `j`.
    Fixed(usize),
    /// `j = round(T/δ)`: accumulated error over a fixed horizon.
    Horizon(f64),
}

impl StepSeries {
    pub fn steps(&self, delta: f64) -> usize {
        match *self {
            StepSeries::Fixed(j) => j,
            StepSeries::Horizon(t) => ((t / delta).round() as usize).max(1),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            StepSeries::Fixed(j) => format!("j={j}"),
            StepSeries::Horizon(t) => format!("T={t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorPoint {
    pub series: usize,
    pub delta: f64,
    pub j: usize,
    pub gamma: f64,
}

/// Ordinary least squares of `ln y` on `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub points_used: usize,
    /// Fewer than two points above the floor.
    pub degenerate: bool,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64], floor: f64) -> SlopeFit {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y >= floor && y.is_finite())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if n < 2 || sxx == 0.0 {
        return SlopeFit { slope: None, intercept: None, points_used: n, degenerate: true };
    }
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    SlopeFit { slope: Some(slope), intercept: Some(mean_y - slope * mean_x), points_used: n, degenerate: false }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFit {
    pub series: StepSeries,
    pub label: String,
    #[serde(flatten)]
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorScaling {
    /// Ordered by δ, then series, as given.
    pub points: Vec<ErrorPoint>,
    pub fits: Vec<SeriesFit>,
}

/// Measures `Γ(U_δ^j, e^{-iHjδ})` over a δ grid for each series and fits
/// the log-log slope per series.
pub fn error_scaling(h: &HamiltonianSum, deltas: &[f64], series: &[StepSeries]) -> Result<ErrorScaling> {
    error_scaling_with(h, deltas, series, &GammaOptions::default())
}

pub fn error_scaling_with(
    h: &HamiltonianSum,
    deltas: &[f64],
    series: &[StepSeries],
    gamma: &GammaOptions,
) -> Result<ErrorScaling> {
    error_scaling_split(h, h, deltas, series, gamma)
}

/// As [`error_scaling_with`], with the product formula built from `split`
/// and the exact propagator from `exact`, two decompositions of the same
/// operator. A diagonal `exact` keeps the reference factorized.
pub fn error_scaling_split(
    split: &HamiltonianSum,
    exact: &HamiltonianSum,
    deltas: &[f64],
    series: &[StepSeries],
    gamma: &GammaOptions,
) -> Result<ErrorScaling> {
    if split.dims() != exact.dims() {
        return Err(Error::Shape(format!("dims {:?} vs {:?}", split.dims(), exact.dims())));
    }
    if deltas.len() < 5 {
        return Err(Error::Validation(format!("delta grid needs at least 5 points, got {}", deltas.len())));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Validation("delta grid must be positive and finite".into()));
    }
    let lo = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::Validation(format!("delta grid spans {lo}..{hi}, less than one decade")));
    }
    if series.is_empty() {
        return Err(Error::Validation("no step series requested".into()));
    }

    let jobs: Vec<(usize, f64)> = deltas.iter().flat_map(|&d| (0..series.len()).map(move |s| (s, d))).collect();
    let points = map_ordered(&jobs, |&(s, delta)| -> Result<ErrorPoint> {
        let j = series[s].steps(delta);
        let step = trotter_step(split, delta)?;
        let exact = exact_propagator(exact, j as f64 * delta)?;
        let gamma = operator_distance_with(&Power { map: &step, times: j }, &exact, gamma)?;
        Ok(ErrorPoint { series: s, delta, j, gamma })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let fits = series
        .iter()
        .enumerate()
        .map(|(s, ser)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                points.iter().filter(|p| p.series == s).map(|p| (p.delta, p.gamma)).unzip();
            SeriesFit { series: *ser, label: ser.label(), fit: fit_loglog(&xs, &ys, GAMMA_FLOOR) }
        })
        .collect();
    Ok(ErrorScaling { points, fits })
}

/// `δ₀, δ₀/2, …` while `δ ≥ end` (inclusive within rounding).
pub fn halving_grid(start: f64, end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut d = start;
    while d >= end * (1.0 - 1e-12) && out.len() < 64 {
        out.push(d);
        d /= 2.0;
    }
    out
}
