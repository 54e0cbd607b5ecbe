//! Three operations for the static demo page in `www/`. Each exported
//! function returns a flat `Float64Array`; the layout is given per function.
//! The plain-Rust versions underneath are what the tests call.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use satgame::aoi::{satisfaction, CycleParams, SatisfactionParams};
use satgame::game::{
    baseline_strategy, feasible_reward_interval, reduced_server_utility, select_nodes, solve_equilibrium,
    BaselineKind, NodeParams, ServerParams, TaskParams,
};
use satgame::harness::{random_instance, stream_seed, PoolSection, ServerSection};

fn server(quality_scale: f64, profit: f64, budget: f64) -> ServerParams {
    ServerParams {
        satisfaction: SatisfactionParams::new(1.0, 20.0, quality_scale),
        profit,
        budget,
        aoi_cap: f64::INFINITY,
        latency_cap: f64::INFINITY,
    }
}

fn node(cost: f64, idle_slots: u32, rate: f64) -> NodeParams {
    let span = idle_slots as f64;
    NodeParams { cost, idle_slots, rate, period_min: span + 0.5, period_max: span + 6.0 }
}

/// `(period, satisfaction)` pairs over `points` periods past the idle span.
pub fn satisfaction_points(idle_slots: u32, rate: f64, quality_scale: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least two points".into());
    }
    let task = TaskParams::default();
    let params = SatisfactionParams::new(1.0, 20.0, quality_scale);
    let mut out = Vec::with_capacity(2 * points);
    for k in 1..=points {
        let period = idle_slots as f64 * task.slot + 12.0 * k as f64 / points as f64;
        let cycle = CycleParams::new(period, idle_slots, task.slot, task.horizon, rate);
        out.push(period);
        out.push(satisfaction(&cycle, &params).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

/// `[reward, period, node utility, server utility]` at the equilibrium, then
/// `(reward, server utility)` pairs tracing the server's curve.
pub fn single_node_points(
    cost: f64,
    idle_slots: u32,
    rate: f64,
    quality_scale: f64,
    profit: f64,
    budget: f64,
) -> Result<Vec<f64>, String> {
    let n = node(cost, idle_slots, rate);
    let s = server(quality_scale, profit, budget);
    let task = TaskParams::default();
    let eq = solve_equilibrium(&[n], &s, &task).map_err(|e| e.to_string())?;
    let mut out =
        vec![eq.profile.rewards[0], eq.profile.periods[0], eq.node_utilities[0], eq.server_utility];
    let (lo, hi) = feasible_reward_interval(&n, &s, &task).map_err(|e| e.to_string())?;
    let hi = hi.min(budget);
    if hi > lo {
        for k in 0..=100 {
            let r = lo + (hi - lo) * k as f64 / 100.0;
            if let Ok(v) = reduced_server_utility(r, &n, &s, &task) {
                out.push(r);
                out.push(v);
            }
        }
    }
    Ok(out)
}

/// Rows of `(count, proposed, best baseline)` for counts 5, 10, ..., 25 on
/// one random 25-node pool.
pub fn node_count_points(seed: u64, budget: f64) -> Result<Vec<f64>, String> {
    let task = TaskParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nodes, s) = random_instance(&PoolSection::default(), &ServerSection::default(), budget, &task, &mut rng);
    let mut out = Vec::new();
    for count in (5..=25).step_by(5) {
        let (_, alloc) = select_nodes(&nodes, count, &s, &task).map_err(|e| e.to_string())?;
        let mut best = f64::NEG_INFINITY;
        for kind in BaselineKind::ALL {
            let (_, b) = baseline_strategy(kind, &nodes, count, &s, &task, stream_seed(seed, count as u64))
                .map_err(|e| e.to_string())?;
            best = best.max(b.value);
        }
        out.extend([count as f64, alloc.value, best]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn satisfaction_curve(idle_slots: u32, rate: f64, quality_scale: f64, points: usize) -> Result<Vec<f64>, JsError> {
    satisfaction_points(idle_slots, rate, quality_scale, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn single_node(
    cost: f64,
    idle_slots: u32,
    rate: f64,
    quality_scale: f64,
    profit: f64,
    budget: f64,
) -> Result<Vec<f64>, JsError> {
    single_node_points(cost, idle_slots, rate, quality_scale, profit, budget).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn node_count_sweep(seed: u32, budget: f64) -> Result<Vec<f64>, JsError> {
    node_count_points(seed as u64, budget).map_err(|e| JsError::new(&e))
}
