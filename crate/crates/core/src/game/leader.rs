//! The server's per-node problem after folding in the node's best response.

use super::utility::{best_response, node_reward, node_satisfaction};
use super::{NodeParams, ServerParams, TaskParams};
use crate::aoi::{latency_turning_period, latency_unchecked};
use crate::error::{Constraint, Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Constants of the reduced objective for one node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Leader {
    cost: f64,
    a: f64,
    slot: f64,
    quality_gain: f64,
    latency_gain: f64,
}

impl Leader {
    pub(crate) fn new(node: &NodeParams, server: &ServerParams, task: &TaskParams) -> Self {
        let s = &server.satisfaction;
        Self {
            cost: node.cost,
            a: node.idle_slots as f64,
            slot: task.slot,
            quality_gain: task.horizon * s.quality_scale * node.rate * s.quality_weight * server.profit,
            latency_gain: s.latency_weight * server.profit,
        }
    }

    pub(crate) fn regime_upper(&self) -> f64 {
        self.cost / (self.a * self.slot)
    }

    pub(crate) fn value(&self, r: f64) -> f64 {
        let (a, t, s) = (self.a, self.slot, self.cost);
        let th = s / r;
        let gap = th - a * t;
        let quality = gap / (th * (t * th + t * t * (a * a - a) / 2.0));
        let latency = latency_unchecked(th, a, t);
        self.quality_gain * quality - self.latency_gain * latency - r * (r / s).ln()
    }

    pub(crate) fn slope(&self, r: f64) -> f64 {
        let (a, t, s) = (self.a, self.slot, self.cost);
        let q = (a * a - a) * t * r + 2.0 * s;
        let quality = -2.0 * self.quality_gain * ((a.powi(3) - a * a) * t * t * r * r + 4.0 * a * s * t * r - 2.0 * s * s)
            / (s * t * q * q);
        let latency = self.latency_gain
            * ((a.powi(3) - 3.0 * a * a - 2.0 * a) * t.powi(3) * r.powi(3) + (3.0 - 3.0 * a) * s * s * t * r + 2.0 * s.powi(3))
            / (2.0 * s * t * r.powi(3));
        quality + latency - (r / s).ln() - 1.0
    }

    pub(crate) fn curvature(&self, r: f64) -> f64 {
        let (a, t, s) = (self.a, self.slot, self.cost);
        let q = (a * a - a) * t * r + 2.0 * s;
        let spread = s - (a - 1.0) * t * r;
        -8.0 * self.quality_gain * a * (a + 1.0) * s / q.powi(3)
            - 3.0 * self.latency_gain * s * spread / (t * r.powi(4))
            - 1.0 / r
    }

    /// Maximizer of `value(r) - price*r` on `[lo, hi]`, using that the slope is decreasing.
    pub(crate) fn argmax_priced(&self, price: f64, lo: f64, hi: f64) -> f64 {
        if self.slope(lo) - price <= 0.0 {
            return lo;
        }
        if self.slope(hi) - price >= 0.0 {
            return hi;
        }
        let (mut l, mut h) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (l + h);
            if m <= l || m >= h {
                break;
            }
            if self.slope(m) > price {
                l = m;
            } else {
                h = m;
            }
        }
        0.5 * (l + h)
    }
}

fn check_regime(leader: &Leader, reward: f64) -> Result<()> {
    let upper = leader.regime_upper();
    if !(reward > 0.0 && reward < upper) {
        return Err(Error::OutOfRegime { reward, upper });
    }
    Ok(())
}

/// Server utility from one node once the node answers with `cost/r`.
pub fn reduced_server_utility(reward: f64, node: &NodeParams, server: &ServerParams, task: &TaskParams) -> Result<f64> {
    let leader = Leader::new(node, server, task);
    check_regime(&leader, reward)?;
    Ok(leader.value(reward))
}

/// Closed-form first and second derivative of the reduced server utility.
pub fn reduced_server_utility_derivatives(
    reward: f64,
    node: &NodeParams,
    server: &ServerParams,
    task: &TaskParams,
) -> Result<(f64, f64)> {
    let leader = Leader::new(node, server, task);
    check_regime(&leader, reward)?;
    Ok((leader.slope(reward), leader.curvature(reward)))
}

/// Server utility from one node when the node plays its clamped best response.
pub fn leader_objective(reward: f64, node: &NodeParams, server: &ServerParams, task: &TaskParams) -> Result<f64> {
    let th = best_response(node, reward);
    Ok(server.profit * node_satisfaction(node, server, task, th)? - node_reward(reward, th)?)
}

/// Periods that respect the node bounds and the server's AoI and latency caps.
pub fn feasible_period_interval(node: &NodeParams, server: &ServerParams, task: &TaskParams) -> Result<(f64, f64)> {
    let infeasible = |constraint| Error::Infeasible { node: 0, constraint };
    node.validate(task)?;
    let (a, t) = (node.idle_slots as f64, task.slot);
    let (mut lo, mut hi) = (node.period_min, node.period_max);

    // AoI is t + t²(a²+a)/(2·gap): decreasing, so the cap is a lower bound on the period
    if server.aoi_cap <= t {
        return Err(infeasible(Constraint::Aoi));
    }
    let aoi_floor = a * t + t * t * (a * a + a) / (2.0 * (server.aoi_cap - t));
    lo = lo.max(aoi_floor);
    if lo > hi {
        return Err(infeasible(Constraint::Aoi));
    }

    // latency falls then rises around its turning period
    let e = |th: f64| latency_unchecked(th, a, t);
    let turn = latency_turning_period(node.idle_slots, t);
    let cap = server.latency_cap;
    if e(turn.clamp(lo, hi)) > cap {
        return Err(infeasible(Constraint::Latency));
    }
    if lo < turn && e(lo) > cap {
        lo = boundary(|th| e(th) <= cap, turn.min(hi), lo);
    }
    if hi > turn && e(hi) > cap {
        hi = boundary(|th| e(th) <= cap, turn.max(lo), hi);
    }
    if lo > hi {
        return Err(infeasible(Constraint::Latency));
    }
    Ok((lo, hi))
}

// bisects between a point meeting the cap and one violating it; returns the
// end that meets it
fn boundary(ok: impl Fn(f64) -> bool, mut good: f64, mut bad: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (good + bad);
        if m == good || m == bad {
            break;
        }
        if ok(m) {
            good = m;
        } else {
            bad = m;
        }
    }
    good
}

/// Unit rewards whose best response lands inside the feasible period interval.
pub fn feasible_reward_interval(node: &NodeParams, server: &ServerParams, task: &TaskParams) -> Result<(f64, f64)> {
    let (lo, hi) = feasible_period_interval(node, server, task)?;
    Ok((node.cost / hi, node.cost / lo))
}

/// Best unit reward for one node, ignoring the shared budget.
pub fn optimize_unit_reward(node: &NodeParams, server: &ServerParams, task: &TaskParams) -> Result<f64> {
    let (lo, hi) = feasible_reward_interval(node, server, task)?;
    let leader = Leader::new(node, server, task);
    Ok(golden_then_polish(&leader, lo, hi))
}

pub(crate) fn golden_then_polish(leader: &Leader, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (leader.value(x1), leader.value(x2));
    while b - a > 1e-7 * (1.0 + hi) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = leader.value(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = leader.value(x1);
        }
    }
    // the golden bracket pins the optimum; finish on the sign of the slope
    let pad = 1e-6 * (1.0 + hi);
    let (bl, bh) = ((a - pad).max(lo), (b + pad).min(hi));
    if leader.slope(bl) > 0.0 && leader.slope(bh) < 0.0 {
        leader.argmax_priced(0.0, bl, bh)
    } else {
        leader.argmax_priced(0.0, lo, hi)
    }
}

/// Projected Newton ascent on the reduced objective from an arbitrary start.
pub fn ascend_unit_reward(node: &NodeParams, server: &ServerParams, task: &TaskParams, start: f64) -> Result<f64> {
    let (lo, hi) = feasible_reward_interval(node, server, task)?;
    let leader = Leader::new(node, server, task);
    let mut r = start.clamp(lo, hi);
    for _ in 0..500 {
        let g = leader.slope(r);
        let h = leader.curvature(r);
        let mut step = if h < 0.0 { -g / h } else { g.signum() * (hi - lo) * 0.1 };
        let base = leader.value(r);
        let mut next = (r + step).clamp(lo, hi);
        while leader.value(next) < base && (next - r).abs() > 1e-16 {
            step *= 0.5;
            next = (r + step).clamp(lo, hi);
        }
        if (next - r).abs() <= 1e-15 * (1.0 + r) {
            r = next;
            break;
        }
        r = next;
    }
    Ok(r)
}
