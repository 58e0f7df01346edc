//! Monte Carlo estimation of `θ = tr(Xρ)` from Trotterized simulations,
//! with the bias/variance/MSE bookkeeping and the split of a budget of
//! `N = m·n` state approximations into `m` steps and `n` replicates.
//!
//! The MSE bound being balanced is
//!
//! ```text
//! E[(θ̂ − θ)²] ≤ C₁/n + C₂/m⁴ = C₁/(Nδ) + C₂δ⁴/T⁴
//! ```
//!
//! where `C₁` is the variance of a single measurement and `C₂` scales the
//! squared Trotter bias.
//!
//! A classical simulator evolves the initial state deterministically, so
//! the `n` "identically simulated" systems share one evolved state. The
//! evolution runs once per plan while the budget still charges `m` steps
//! per replicate.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measurement::{replicate_rng, OutcomeDistribution};
use crate::parallel::{map_ordered, map_range};

/// Biases at or below this magnitude count as numerically zero.
pub const BIAS_FLOOR: f64 = 1e-12;

/// A system whose observable can be measured after exact or Trotterized
/// evolution over `[0, T]`.
pub trait MonteCarloSystem: Sync {
    fn name(&self) -> &str;

    fn horizon(&self) -> f64;

    /// Distribution of `X` under the exact final state `ρ`. Returns a
    /// capacity error when no exact propagation path exists.
    fn exact_distribution(&self) -> Result<OutcomeDistribution>;

    /// Distribution of `X` under `ρ̃` after `steps` Trotter steps of size `T/steps`.
    fn simulated_distribution(&self, steps: usize) -> Result<OutcomeDistribution>;

    /// Reference for sampled-bias estimates: the exact distribution when
    /// available, otherwise a simulation with four times the steps.
    fn reference_distribution(&self, steps: usize) -> Result<OutcomeDistribution> {
        match self.exact_distribution() {
            Err(Error::Capacity { .. }) => self.simulated_distribution(steps * 4),
            other => other,
        }
    }
}

/// `θ = tr(Xρ)` under exact evolution.
pub fn true_value(system: &dyn MonteCarloSystem) -> Result<f64> {
    Ok(system.exact_distribution()?.mean())
}

/// `m` steps per replicate, `n` replicates, `N = m·n` state approximations.
/// `budget ≥ N` is what the caller allowed; the difference is slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationPlan {
    horizon: f64,
    steps: usize,
    replicates: usize,
    budget: u64,
    seed: u64,
}

impl SimulationPlan {
    pub fn new(horizon: f64, steps: usize, replicates: usize, seed: u64) -> Result<Self> {
        Self::validate(horizon, steps, replicates)?;
        Ok(Self { horizon, steps, replicates, budget: steps as u64 * replicates as u64, seed })
    }

    /// `n = floor(budget / m)`.
    pub fn from_budget(horizon: f64, budget: u64, steps: usize, seed: u64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Validation("step count must be at least 1".into()));
        }
        let replicates = (budget / steps as u64) as usize;
        if replicates == 0 {
            return Err(Error::Validation(format!("budget {budget} cannot fund one replicate of {steps} steps")));
        }
        Self::validate(horizon, steps, replicates)?;
        Ok(Self { horizon, steps, replicates, budget, seed })
    }

    /// `m = round(T/δ)`, then as [`SimulationPlan::from_budget`].
    pub fn from_delta(horizon: f64, budget: u64, delta: f64, seed: u64) -> Result<Self> {
        Self::from_budget(horizon, budget, steps_for_delta(horizon, delta)?, seed)
    }

    /// Explicit `(m, n)` drawn from a larger budget.
    pub fn with_budget(self, budget: u64) -> Result<Self> {
        if budget < self.total() {
            return Err(Error::Validation(format!("budget {budget} is below m·n = {}", self.total())));
        }
        Ok(Self { budget, ..self })
    }

    fn validate(horizon: f64, steps: usize, replicates: usize) -> Result<()> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 || replicates == 0 {
            return Err(Error::Validation(format!("need m ≥ 1 and n ≥ 1, got m={steps}, n={replicates}")));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// `N = m·n`.
    pub fn total(&self) -> u64 {
        self.steps as u64 * self.replicates as u64
    }

    pub fn delta(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn slack(&self) -> u64 {
        self.budget - self.total()
    }
}

impl Serialize for SimulationPlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SimulationPlan", 6)?;
        st.serialize_field("T", &self.horizon)?;
        st.serialize_field("m", &self.steps)?;
        st.serialize_field("n", &self.replicates)?;
        st.serialize_field("N", &self.total())?;
        st.serialize_field("delta", &self.delta())?;
        st.serialize_field("seed", &self.seed)?;
        st.end()
    }
}

pub fn steps_for_delta(horizon: f64, delta: f64) -> Result<usize> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Validation(format!("step size must be positive, got {delta}")));
    }
    let m = (horizon / delta).round();
    if m < 1.0 {
        return Err(Error::Validation(format!("step size {delta} exceeds horizon {horizon}")));
    }
    Ok(m as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasMode {
    /// Exact expectations when an exact path exists, otherwise no bias.
    #[default]
    Exact,
    /// Difference of two sample means (simulated vs reference), each of
    /// size `n`, drawn on streams disjoint from the estimate's.
    Sampled,
}

#[derive(Debug, Clone, Default)]
pub struct EstimateOptions {
    pub bias: BiasMode,
    /// Omit wall time, for byte-reproducible reports.
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub system: String,
    pub plan: SimulationPlan,
    pub theta_hat: f64,
    pub sample_variance: f64,
    pub bias_est: Option<f64>,
    pub mse_est: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_theta: Option<f64>,
    pub slack: u64,
    /// SHA-256 over the replicate outcomes in replicate order.
    pub outcomes_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
    #[serde(skip)]
    pub outcomes: Vec<f64>,
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

fn digest(xs: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in xs {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One measurement per replicate; replicate `i` draws from stream
/// `stream_offset + i` of `seed`.
fn draw_replicates(dist: &OutcomeDistribution, seed: u64, stream_offset: u64, n: usize) -> Vec<f64> {
    let sampler = dist.sampler();
    map_range(n as u64, |i| sampler.draw(&mut replicate_rng(seed, stream_offset + i)))
}

/// `θ̂ = (1/n) Σ X_j` with sample variance (divisor `n − 1`).
pub fn run_estimate(plan: &SimulationPlan, system: &dyn MonteCarloSystem) -> Result<EstimateReport> {
    run_estimate_with(plan, system, &EstimateOptions::default())
}

pub fn run_estimate_with(
    plan: &SimulationPlan,
    system: &dyn MonteCarloSystem,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    if (plan.horizon() - system.horizon()).abs() > 1e-12 * system.horizon() {
        return Err(Error::Validation(format!(
            "plan horizon {} differs from system horizon {}",
            plan.horizon(),
            system.horizon()
        )));
    }
    let start = Instant::now();
    let n = plan.replicates();
    let simulated = system.simulated_distribution(plan.steps())?;
    let outcomes = draw_replicates(&simulated, plan.seed(), 0, n);
    let (theta_hat, sample_variance) = mean_and_variance(&outcomes);

    let exact = match system.exact_distribution() {
        Ok(d) => Some(d),
        Err(Error::Capacity { .. }) => None,
        Err(e) => return Err(e),
    };
    let true_theta = exact.as_ref().map(OutcomeDistribution::mean);
    let bias_est = match opts.bias {
        BiasMode::Exact => true_theta.map(|t| simulated.mean() - t),
        BiasMode::Sampled => {
            let reference = match exact {
                Some(d) => d,
                None => system.reference_distribution(plan.steps())?,
            };
            let (ref_mean, _) = mean_and_variance(&draw_replicates(&reference, plan.seed(), n as u64, n));
            Some(theta_hat - ref_mean)
        }
    };
    let mse_est = bias_est.map(|b| sample_variance / n as f64 + b * b);
    Ok(EstimateReport {
        system: system.name().to_string(),
        plan: *plan,
        theta_hat,
        sample_variance,
        bias_est,
        mse_est,
        true_theta,
        slack: plan.slack(),
        outcomes_digest: digest(&outcomes),
        wall_ms: (!opts.no_timestamp).then(|| start.elapsed().as_secs_f64() * 1e3),
        outcomes,
    })
}

/// Exact MSE decomposition at a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseBreakdown {
    pub plan: SimulationPlan,
    pub theta: f64,
    /// `tr(Xρ̃)`.
    pub simulated_mean: f64,
    /// `Var_ρ̃(X)`.
    pub simulated_variance: f64,
    /// `Var_ρ̃(X)/n`.
    pub variance_term: f64,
    /// `tr(Xρ̃) − tr(Xρ)`.
    pub bias: f64,
    pub mse: f64,
}

impl MseBreakdown {
    pub fn bias_sq(&self) -> f64 {
        self.bias * self.bias
    }
}

/// Bias and variance from exact expectations, no sampling:
/// `MSE = Var_ρ̃(X)/n + (tr(Xρ̃) − tr(Xρ))²`.
pub fn mse_report(plan: &SimulationPlan, system: &dyn MonteCarloSystem) -> Result<MseBreakdown> {
    let theta = true_value(system)?;
    mse_report_against(plan, system, theta)
}

fn mse_report_against(plan: &SimulationPlan, system: &dyn MonteCarloSystem, theta: f64) -> Result<MseBreakdown> {
    let simulated = system.simulated_distribution(plan.steps())?;
    let simulated_mean = simulated.mean();
    let simulated_variance = simulated.variance();
    let variance_term = simulated_variance / plan.replicates() as f64;
    let bias = simulated_mean - theta;
    Ok(MseBreakdown {
        plan: *plan,
        theta,
        simulated_mean,
        simulated_variance,
        variance_term,
        bias,
        mse: variance_term + bias * bias,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub mode: CalibrationMode,
    /// Samples per pilot point and per reference in sampled mode.
    pub pilot_n: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { mode: CalibrationMode::Exact, pilot_n: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub delta: f64,
    pub m: usize,
    pub bias: f64,
    pub bias_sq: f64,
    /// `bias² − C₂(δ/T)⁴`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub c1: f64,
    pub c2: f64,
    /// All pilot biases sat at the numerical floor; `c2` is zero.
    pub degenerate: bool,
    pub mode: CalibrationMode,
    pub points: Vec<CalibrationPoint>,
}

/// Default pilot grid: five log-spaced steps in `[T/512, T/32]`.
pub fn default_pilot_grid(horizon: f64) -> Vec<f64> {
    let (lo, hi) = ((horizon / 512.0).ln(), (horizon / 32.0).ln());
    (0..5).map(|k| (lo + (hi - lo) * k as f64 / 4.0).exp()).collect()
}

/// `C₁` is the variance of `X` under `ρ̃` at the finest pilot step; `C₂`
/// is the least-squares slope (through the origin) of `bias(δ)²` against
/// `(δ/T)⁴`. Each pilot δ is snapped to `T/m` with `m = round(T/δ)`.
pub fn calibrate(
    system: &dyn MonteCarloSystem,
    pilot_grid: &[f64],
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    if pilot_grid.len() < 4 {
        return Err(Error::Validation(format!("pilot grid needs at least 4 points, got {}", pilot_grid.len())));
    }
    let t = system.horizon();
    let steps = pilot_grid.iter().map(|&d| steps_for_delta(t, d)).collect::<Result<Vec<_>>>()?;
    let lo = *steps.iter().max().unwrap() as f64;
    let hi = *steps.iter().min().unwrap() as f64;
    if lo / hi < 10f64.sqrt() * (1.0 - 1e-9) {
        return Err(Error::Validation("pilot grid must span at least half a decade".into()));
    }
    if opts.mode == CalibrationMode::Sampled && opts.pilot_n < 2 {
        return Err(Error::Validation("sampled calibration needs pilot_n ≥ 2".into()));
    }

    let theta = match opts.mode {
        CalibrationMode::Exact => Some(true_value(system)?),
        CalibrationMode::Sampled => None,
    };
    let per_point = map_ordered(&steps, |&m| -> Result<(f64, f64)> {
        let sim = system.simulated_distribution(m)?;
        match theta {
            Some(theta) => Ok((sim.mean() - theta, sim.variance())),
            None => {
                let n = opts.pilot_n;
                let (sim_mean, sim_var) = mean_and_variance(&draw_replicates(&sim, opts.seed, 2 * m as u64 * n as u64, n));
                let reference = system.reference_distribution(m)?;
                let (ref_mean, _) =
                    mean_and_variance(&draw_replicates(&reference, opts.seed, (2 * m as u64 + 1) * n as u64, n));
                Ok((sim_mean - ref_mean, sim_var))
            }
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let finest = (0..steps.len()).max_by_key(|&i| steps[i]).unwrap();
    let c1 = per_point[finest].1;
    if c1.is_nan() || c1 <= 0.0 {
        return Err(Error::Validation(format!("variance constant C1 = {c1} must be positive")));
    }

    let xs: Vec<f64> = steps.iter().map(|&m| (1.0 / m as f64).powi(4)).collect();
    let degenerate = per_point.iter().all(|(b, _)| b.abs() <= BIAS_FLOOR);
    let c2 = if degenerate {
        0.0
    } else {
        let sxy: f64 = xs.iter().zip(&per_point).map(|(x, (b, _))| x * b * b).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        sxy / sxx
    };
    let points = steps
        .iter()
        .zip(&xs)
        .zip(&per_point)
        .map(|((&m, &x), &(bias, _))| CalibrationPoint {
            delta: t / m as f64,
            m,
            bias,
            bias_sq: bias * bias,
            residual: bias * bias - c2 * x,
        })
        .collect();
    Ok(CalibrationResult { c1, c2, degenerate, mode: opts.mode, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Allocation {
    pub m: usize,
    pub n: usize,
    pub budget: u64,
    /// `budget − m·n`, left unspent.
    pub slack: u64,
    /// Real-valued `(C₂/C₁)^{1/5} N^{1/5}`.
    pub m_star: f64,
    /// `C₁·m/N + C₂/m⁴` at the chosen `m`.
    pub bound: f64,
}

/// `C₁·m/N + C₂/m⁴`.
pub fn mse_bound(budget: u64, c1: f64, c2: f64, m: usize) -> f64 {
    c1 * m as f64 / budget as f64 + c2 / (m as f64).powi(4)
}

/// `C₁^{4/5} C₂^{1/5} N^{-4/5}`.
pub fn rate_bound(budget: u64, c1: f64, c2: f64) -> f64 {
    c1.powf(0.8) * c2.powf(0.2) * (budget as f64).powf(-0.8)
}

/// Integer `m ∈ [1, N]` minimizing `C₁·m/N + C₂/m⁴`, with `n = ⌊N/m⌋`.
///
/// The bound is convex in `m` with real minimizer `4^{1/5} m*`, so a scan
/// over `[m*/4, 4m*]` plus the endpoints `1` and `N` finds the integer
/// optimum. Ties go to the smaller `m`.
pub fn allocate(budget: u64, c1: f64, c2: f64) -> Result<Allocation> {
    if budget == 0 {
        return Err(Error::Validation("budget must be at least 1".into()));
    }
    if !(c1.is_finite() && c1 > 0.0) {
        return Err(Error::Validation(format!("C1 must be positive, got {c1}")));
    }
    if !(c2.is_finite() && c2 >= 0.0) {
        return Err(Error::Validation(format!("C2 must be non-negative, got {c2}")));
    }
    let n_real = budget as f64;
    let m_star = (c2 / c1).powf(0.2) * n_real.powf(0.2);
    let m = if c2 == 0.0 {
        1
    } else {
        let lo = ((m_star / 4.0).floor() as u64).clamp(1, budget);
        let hi = ((m_star * 4.0).ceil() as u64).clamp(1, budget);
        let candidates = std::iter::once(1).chain(lo..=hi).chain(std::iter::once(budget));
        let mut best = (f64::INFINITY, u64::MAX);
        for m in candidates {
            let b = mse_bound(budget, c1, c2, m as usize);
            if b < best.0 || (b == best.0 && m < best.1) {
                best = (b, m);
            }
        }
        best.1 as usize
    };
    let n = (budget / m as u64) as usize;
    Ok(Allocation {
        m,
        n,
        budget,
        slack: budget - m as u64 * n as u64,
        m_star,
        bound: mse_bound(budget, c1, c2, m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub m: usize,
    pub n: usize,
    pub variance_term: f64,
    pub bias_sq: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPoint {
    pub delta: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    Increasing,
    Flat,
}

/// A maximal run of rows (by index, inclusive) with one trend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub trend: Trend,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub budget: u64,
    pub theta: f64,
    /// Ascending in δ.
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SkippedPoint>,
    pub argmin: Option<usize>,
    pub segments: Vec<Segment>,
}

impl Sweep {
    pub fn argmin_delta(&self) -> Option<f64> {
        self.argmin.map(|i| self.rows[i].delta)
    }

    /// The minimum is at neither end of the grid.
    pub fn has_interior_minimum(&self) -> bool {
        matches!(self.argmin, Some(i) if i > 0 && i + 1 < self.rows.len())
    }

    /// Strictly decreasing up to the argmin, then strictly increasing.
    pub fn is_unimodal(&self) -> bool {
        let trends: Vec<Trend> = self.segments.iter().map(|s| s.trend).collect();
        trends == [Trend::Decreasing, Trend::Increasing]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# schema=1")?;
        writeln!(w, "delta,m,n,variance_term,bias_sq,mse")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{:e},{:e},{:e}", r.delta, r.m, r.n, r.variance_term, r.bias_sq, r.mse)?;
        }
        Ok(())
    }
}

fn segments(rows: &[SweepRow]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for i in 1..rows.len() {
        let d = rows[i].mse - rows[i - 1].mse;
        let trend = if d < 0.0 {
            Trend::Decreasing
        } else if d > 0.0 {
            Trend::Increasing
        } else {
            Trend::Flat
        };
        match out.last_mut() {
            Some(s) if s.trend == trend => s.end = i,
            _ => out.push(Segment { start: i - 1, end: i, trend }),
        }
    }
    out
}

/// Exact-mode MSE at each δ of the grid with `m = round(T/δ)` and
/// `n = ⌊N/m⌋`. Points that cannot fund a replicate are skipped and
/// recorded. Rows are reported at the snapped step `T/m`, ascending.
pub fn delta_sweep(system: &dyn MonteCarloSystem, budget: u64, grid: &[f64]) -> Result<Sweep> {
    let t = system.horizon();
    let theta = true_value(system)?;
    let mut plans = Vec::new();
    let mut skipped = Vec::new();
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    for &delta in &sorted {
        match SimulationPlan::from_delta(t, budget, delta, 0) {
            Ok(p) => plans.push(p),
            Err(e) => skipped.push(SkippedPoint { delta, reason: e.to_string() }),
        }
    }
    let rows = map_ordered(&plans, |p| -> Result<SweepRow> {
        let b = mse_report_against(p, system, theta)?;
        Ok(SweepRow {
            delta: p.delta(),
            m: p.steps(),
            n: p.replicates(),
            variance_term: b.variance_term,
            bias_sq: b.bias_sq(),
            mse: b.mse,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let argmin = (0..rows.len()).min_by(|&a, &b| rows[a].mse.total_cmp(&rows[b].mse));
    let segments = segments(&rows);
    Ok(Sweep { budget, theta, rows, skipped, argmin, segments })
}

/// `n` evenly spaced points `δ_max·k/n`, `k = 1..=n`.
pub fn linear_grid(delta_max: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| delta_max * k as f64 / n as f64).collect()
}
