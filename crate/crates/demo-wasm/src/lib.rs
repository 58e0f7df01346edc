use serde_json::json;
use trotter_mc::estimator::{allocate, delta_sweep, linear_grid, mse_bound, rate_bound};
use trotter_mc::operators::GammaOptions;
use trotter_mc::systems::System;
use trotter_mc::trotter::{error_scaling_split, halving_grid, StepSeries};
use wasm_bindgen::prelude::*;

fn builtin(name: &str) -> Result<System, String> {
    System::builtin(name)
        .ok_or_else(|| format!("unknown system {name:?}"))?
        .map_err(|e| e.to_string())
}

/// MSE decomposition over `points` step sizes in `(0, delta_max]`.
pub fn sweep_json(system: &str, budget: u64, delta_max: f64, points: usize) -> Result<String, String> {
    let system = builtin(system)?;
    let grid = linear_grid(delta_max, points);
    let sweep = delta_sweep(system.monte_carlo(), budget, &grid).map_err(|e| e.to_string())?;
    serde_json::to_string(&sweep).map_err(|e| e.to_string())
}

/// Γ of the product formula against the exact propagator on a halving grid.
pub fn trotter_error_json(system: &str, delta0: f64, halvings: u32) -> Result<String, String> {
    let system = builtin(system)?;
    let grid = halving_grid(delta0, delta0 / 2f64.powi(halvings as i32));
    let series = [StepSeries::Fixed(1), StepSeries::Horizon(system.monte_carlo().horizon())];
    let scaling = error_scaling_split(
        system.split_hamiltonian(),
        system.exact_hamiltonian(),
        &grid,
        &series,
        &GammaOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    serde_json::to_string(&scaling).map_err(|e| e.to_string())
}

/// Integer allocation plus the bound curve `C1·m/N + C2/m⁴` for plotting.
pub fn allocate_json(budget: u64, c1: f64, c2: f64) -> Result<String, String> {
    let a = allocate(budget, c1, c2).map_err(|e| e.to_string())?;
    let top = (4 * a.m).clamp(8, budget as usize);
    let curve: Vec<_> = (1..=top).map(|m| [m as f64, mse_bound(budget, c1, c2, m)]).collect();
    Ok(json!({ "allocation": a, "rate": rate_bound(budget, c1, c2), "curve": curve }).to_string())
}

#[wasm_bindgen]
pub fn mse_sweep(system: &str, budget: u32, delta_max: f64, points: u32) -> Result<String, JsError> {
    sweep_json(system, budget as u64, delta_max, points as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn trotter_error(system: &str, delta0: f64, halvings: u32) -> Result<String, JsError> {
    trotter_error_json(system, delta0, halvings).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn allocate_budget(budget: u32, c1: f64, c2: f64) -> Result<String, JsError> {
    allocate_json(budget as u64, c1, c2).map_err(|e| JsError::new(&e))
}
