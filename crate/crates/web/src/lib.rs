//! WebAssembly bindings for the browser demo in `www/`. Every export returns
//! a JSON string.

use serde_json::json;
use wasm_bindgen::prelude::*;

use safeplan::envs::circuit::{grid_circuit, CircuitConfig};
use safeplan::envs::jam;
use safeplan::planner::{rp_solve, RpOptions};
use safeplan::secure::{accident_threshold, secure_threshold};
use safeplan::sim::simulate;
use safeplan::{SafetySpec, ThreatMode};

fn js(e: safeplan::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Baseline threat of one moving obstacle around an agent with velocity
/// code `velocity` (0 still, 1..=4 for N, E, S, W). Returns `{"grid": rows}`.
#[wasm_bindgen]
pub fn threat_heatmap(velocity: usize, radius: usize, move_prob: f64, horizon: usize) -> Result<String, JsError> {
    let grid = jam::threat_heatmap(velocity, radius.min(6), move_prob, horizon.min(12)).map_err(js)?;
    Ok(json!({ "grid": grid }).to_string())
}

/// Per-step threshold for every horizon in `1..=max_horizon`, in both modes.
#[wasm_bindgen]
pub fn threshold_curve(budget: f64, beta: f64, max_horizon: usize) -> Result<String, JsError> {
    let mut rows = Vec::new();
    for t in 1..=max_horizon.min(500) {
        rows.push(json!({
            "horizon": t,
            "discounted": secure_threshold(budget, beta, t).map_err(js)?,
            "accident": accident_threshold(budget, t, 1.0).map_err(js)?,
        }));
    }
    Ok(json!({ "rows": rows }).to_string())
}

/// Solves a built-in circuit under an accident budget and samples one lap.
#[wasm_bindgen]
pub fn solve_circuit(layout: &str, budget: f64, horizon: usize, drift: f64, seed: u64) -> Result<String, JsError> {
    let cfg = CircuitConfig { horizon: horizon.clamp(1, 60), drift, ..CircuitConfig::with_layout(layout) };
    let circuit = grid_circuit(&cfg).map_err(js)?;
    let safety = SafetySpec::new(budget, ThreatMode::AccidentProbability).map_err(js)?;
    let sol = rp_solve(&circuit.cmdp, &safety, &RpOptions::default()).map_err(js)?;
    let traj = simulate(&circuit.cmdp, &sol.policy, seed).map_err(js)?;
    let path: Vec<_> = traj
        .states
        .iter()
        .zip(&traj.accidents)
        .map(|(&s, &crash)| {
            let p = circuit.pose(s);
            json!({ "x": p.x, "y": p.y, "heading": p.heading, "speed": p.speed, "crash": crash })
        })
        .collect();
    let cells: Vec<_> = circuit.cells.iter().map(|&(x, y)| [x, y]).collect();
    Ok(json!({
        "width": circuit.layout.width,
        "height": circuit.layout.height,
        "cells": cells,
        "certified": sol.certified,
        "x_star": sol.x_star,
        "expected_return": sol.expected_return,
        "start_threats": sol.start_threats,
        "secure_states": sol.secure.n_secure_states(),
        "states": circuit.cmdp.n_states,
        "diagnostics": sol.diagnostics,
        "path": path,
    })
    .to_string())
}
