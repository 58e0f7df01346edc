//! Outcome distributions, moments, sampling and collapse for projective
//! measurements of an [`ObservableSpec`].

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::ObservableSpec;
use crate::state::{PureState, StateRef};

/// Probabilities in `[-NEGATIVE_CLAMP, 0)` are rounding noise and clamp to 0.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

/// Allowed deviation of total probability from one.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Outcomes below this probability cannot be collapsed onto.
pub const COLLAPSE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub eigenvalue: f64,
    pub probability: f64,
}

/// `P[X = x_a]` over distinct eigenvalues in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct OutcomeDistribution {
    outcomes: Vec<Outcome>,
}

impl OutcomeDistribution {
    pub fn new(mut outcomes: Vec<Outcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Validation("distribution has no outcomes".into()));
        }
        outcomes.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue));
        if outcomes.windows(2).any(|w| w[1].eigenvalue.partial_cmp(&w[0].eigenvalue) != Some(Ordering::Greater)) {
            return Err(Error::Validation("eigenvalues must be distinct".into()));
        }
        let mut total = 0.0;
        for o in &mut outcomes {
            if !o.probability.is_finite() || o.probability < -NEGATIVE_CLAMP {
                return Err(Error::Validation(format!(
                    "probability {} for outcome {}",
                    o.probability, o.eigenvalue
                )));
            }
            o.probability = o.probability.max(0.0);
            total += o.probability;
        }
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::Validation(format!("probabilities sum to {total}")));
        }
        Ok(Self { outcomes })
    }

    /// Single-outcome distribution.
    pub fn point(x: f64) -> Self {
        Self { outcomes: vec![Outcome { eigenvalue: x, probability: 1.0 }] }
    }

    /// `Σ_k w_k P_k`; all components must share the same eigenvalues.
    pub fn mixture(parts: &[(f64, OutcomeDistribution)]) -> Result<Self> {
        let (_, first) = parts.first().ok_or_else(|| Error::Validation("empty mixture".into()))?;
        let mut outcomes: Vec<Outcome> =
            first.outcomes.iter().map(|o| Outcome { eigenvalue: o.eigenvalue, probability: 0.0 }).collect();
        for (w, d) in parts {
            if d.outcomes.len() != outcomes.len()
                || d.outcomes.iter().zip(&outcomes).any(|(a, b)| a.eigenvalue != b.eigenvalue)
            {
                return Err(Error::Shape("mixture components have different outcomes".into()));
            }
            for (o, p) in outcomes.iter_mut().zip(&d.outcomes) {
                o.probability += w * p.probability;
            }
        }
        Self::new(outcomes)
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn mean(&self) -> f64 {
        self.outcomes.iter().map(|o| o.eigenvalue * o.probability).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.outcomes.iter().map(|o| o.eigenvalue * o.eigenvalue * o.probability).sum()
    }

    /// `E[X²] − E[X]²`, with rounding noise below zero clamped.
    pub fn variance(&self) -> f64 {
        let v = self.second_moment() - self.mean().powi(2);
        if (-NEGATIVE_CLAMP..0.0).contains(&v) {
            0.0
        } else {
            v
        }
    }

    fn cumulative(&self) -> Vec<f64> {
        let total: f64 = self.outcomes.iter().map(|o| o.probability).sum();
        let mut acc = 0.0;
        self.outcomes
            .iter()
            .map(|o| {
                acc += o.probability / total;
                acc
            })
            .collect()
    }

    /// A reusable inverse-CDF sampler.
    pub fn sampler(&self) -> Sampler<'_> {
        Sampler { dist: self, cdf: self.cumulative() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let s = self.sampler();
        (0..count).map(|_| s.draw(rng)).collect()
    }
}

pub struct Sampler<'a> {
    dist: &'a OutcomeDistribution,
    cdf: Vec<f64>,
}

impl Sampler<'_> {
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u);
        // u can exceed the last entry only through rounding; fall back to
        // the last outcome with positive probability
        k.min(self.last_positive())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.dist.outcomes[self.draw_index(rng)].eigenvalue
    }

    fn last_positive(&self) -> usize {
        self.dist.outcomes.iter().rposition(|o| o.probability > 0.0).unwrap_or(0)
    }
}

fn check_dims(x: &ObservableSpec, dims: &[usize]) -> Result<()> {
    if x.dims() != dims {
        return Err(Error::Shape(format!("observable dims {:?} vs state dims {:?}", x.dims(), dims)));
    }
    Ok(())
}

fn pure_distribution(x: &ObservableSpec, s: &PureState) -> Result<OutcomeDistribution> {
    check_dims(x, s.dims())?;
    let weights = x.spectral_weights(s.amplitudes());
    OutcomeDistribution::new(
        x.eigenvalues()
            .iter()
            .zip(weights)
            .map(|(&eigenvalue, probability)| Outcome { eigenvalue, probability })
            .collect(),
    )
}

/// `P[X = x_a] = tr(ρ Q_a)`.
pub fn distribution<'a>(x: &ObservableSpec, state: impl Into<StateRef<'a>>) -> Result<OutcomeDistribution> {
    match state.into() {
        StateRef::Pure(s) => pure_distribution(x, s),
        StateRef::Ensemble(e) => {
            let parts = e
                .components()
                .iter()
                .map(|(w, s)| Ok((*w, pure_distribution(x, s)?)))
                .collect::<Result<Vec<_>>>()?;
            OutcomeDistribution::mixture(&parts)
        }
    }
}

/// `tr(ρX)`.
pub fn expectation<'a>(x: &ObservableSpec, state: impl Into<StateRef<'a>>) -> Result<f64> {
    Ok(distribution(x, state)?.mean())
}

/// `tr(ρX²) − tr(ρX)²`.
pub fn variance<'a>(x: &ObservableSpec, state: impl Into<StateRef<'a>>) -> Result<f64> {
    Ok(distribution(x, state)?.variance())
}

/// `count` i.i.d. measurement results. For ensembles each draw first picks
/// a component with probability `p_k`, then measures it.
pub fn sample<'a, R: Rng + ?Sized>(
    x: &ObservableSpec,
    state: impl Into<StateRef<'a>>,
    rng: &mut R,
    count: usize,
) -> Result<Vec<f64>> {
    match state.into() {
        StateRef::Pure(s) => Ok(pure_distribution(x, s)?.sample(rng, count)),
        StateRef::Ensemble(e) => {
            let dists = e
                .components()
                .iter()
                .map(|(_, s)| pure_distribution(x, s))
                .collect::<Result<Vec<_>>>()?;
            let weights = OutcomeDistribution {
                outcomes: e
                    .components()
                    .iter()
                    .enumerate()
                    .map(|(k, (w, _))| Outcome { eigenvalue: k as f64, probability: *w })
                    .collect(),
            };
            let pick = weights.sampler();
            let samplers: Vec<Sampler<'_>> = dists.iter().map(|d| d.sampler()).collect();
            Ok((0..count).map(|_| samplers[pick.draw_index(rng)].draw(rng)).collect())
        }
    }
}

/// `Q_a|ψ⟩ / ‖Q_a|ψ⟩‖` for the spectral point equal to `outcome`.
pub fn collapse(x: &ObservableSpec, state: &PureState, outcome: f64) -> Result<PureState> {
    check_dims(x, state.dims())?;
    let a = x
        .spectral_index(outcome)
        .ok_or(Error::InvalidCollapse { outcome, probability: 0.0 })?;
    let projected = x.project(a, state.amplitudes());
    let probability: f64 = projected.iter().map(|z| z.norm_sqr()).sum();
    if probability <= COLLAPSE_THRESHOLD {
        return Err(Error::InvalidCollapse { outcome, probability });
    }
    PureState::normalized(state.dims().to_vec(), projected)
}

/// Independent stream for replicate `i` of a run seeded with `master_seed`.
/// Streams depend only on `(master_seed, i)`, never on scheduling.
pub fn replicate_rng(master_seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}

/// CSV with header `replicate,draw_index,outcome`.
pub fn write_samples_csv<W: Write>(mut w: W, replicates: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "# schema=1")?;
    writeln!(w, "replicate,draw_index,outcome")?;
    for (r, draws) in replicates.iter().enumerate() {
        for (k, x) in draws.iter().enumerate() {
            writeln!(w, "{r},{k},{x}")?;
        }
    }
    Ok(())
}
