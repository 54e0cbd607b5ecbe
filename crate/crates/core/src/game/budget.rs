//! Shared-budget allocation across nodes by water-filling on the shadow price.

use super::leader::{feasible_reward_interval, golden_then_polish, leader_objective, Leader};
use super::utility::{best_response, node_satisfaction};
use super::{Binding, NodeParams, ServerParams, StrategyProfile, TaskParams};
use crate::aoi::{aoi_unchecked, latency_unchecked};
use crate::error::{Constraint, Error, Result};

/// Per-node data reused across many allocations over subsets.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub node: NodeParams,
    /// `None` when the node's caps cannot be met at any period.
    pub solo: Option<Solo>,
    pub infeasible: Option<Constraint>,
    /// Value to the server when the node is paid nothing.
    pub idle_value: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Solo {
    pub leader: Leader,
    pub lo: f64,
    pub hi: f64,
    pub reward: f64,
    pub value: f64,
}

impl Prepared {
    pub(crate) fn new(node: &NodeParams, server: &ServerParams, task: &TaskParams) -> Result<Self> {
        node.validate(task)?;
        let idle_value = leader_objective(0.0, node, server, task)?;
        let (solo, infeasible) = match feasible_reward_interval(node, server, task) {
            Ok((lo, hi)) => {
                let leader = Leader::new(node, server, task);
                let reward = golden_then_polish(&leader, lo, hi);
                (Some(Solo { leader, lo, hi, reward, value: leader.value(reward) }), None)
            }
            Err(Error::Infeasible { constraint, .. }) => (None, Some(constraint)),
            Err(e) => return Err(e),
        };
        Ok(Self { node: *node, solo, infeasible, idle_value })
    }

    pub(crate) fn all(nodes: &[NodeParams], server: &ServerParams, task: &TaskParams) -> Result<Vec<Self>> {
        nodes.iter().map(|n| Prepared::new(n, server, task)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub profile: StrategyProfile,
    pub shadow_price: f64,
    /// Nodes left at zero reward, with the constraint that ruled them out
    /// (`None` when the budget could not reach their feasible range).
    pub excluded: Vec<(usize, Option<Constraint>)>,
    /// Server utility summed over all nodes of the profile.
    pub value: f64,
}

/// Water-filling allocation of the shared budget.
pub fn allocate_budget(nodes: &[NodeParams], server: &ServerParams, task: &TaskParams) -> Result<Allocation> {
    server.validate()?;
    task.validate()?;
    let prepared = Prepared::all(nodes, server, task)?;
    let idx: Vec<usize> = (0..nodes.len()).collect();
    Ok(allocate_prepared(&prepared, &idx, server.budget))
}

/// Allocation restricted to `subset` (indices into `prepared`); the profile
/// follows the order of `subset`.
///
/// Each node is either unfunded (zero reward) or paid within its feasible
/// range. The funded set comes from a price search on the relaxed problem,
/// the budget is then water-filled over that set, and single-node toggles
/// repair what the relaxation misses.
pub(crate) fn allocate_prepared(prepared: &[Prepared], subset: &[usize], budget: f64) -> Allocation {
    let k = subset.len();
    let solos: Vec<Option<Solo>> = subset.iter().map(|&i| prepared[i].solo).collect();
    let idle: Vec<f64> = subset.iter().map(|&i| prepared[i].idle_value).collect();

    let mut funded: Vec<bool> = solos.iter().map(|s| s.is_some()).collect();
    let spend0: f64 = solos.iter().flatten().map(|s| s.reward).sum();
    let (mut rewards, mut price, mut value);
    if spend0 <= budget {
        rewards = solos.iter().map(|s| s.map_or(0.0, |s| s.reward)).collect::<Vec<_>>();
        price = 0.0;
        value = total_value(&solos, &idle, &rewards);
    } else {
        // relaxed problem: each node independently takes the better of zero and its priced optimum
        let pick = |mu: f64, out: &mut Vec<f64>| -> f64 {
            out.clear();
            let mut total = 0.0;
            for (j, s) in solos.iter().enumerate() {
                let r = match s {
                    Some(s) => {
                        let r = priced_argmax(s, mu);
                        if s.leader.value(r) - mu * r > idle[j] { r } else { 0.0 }
                    }
                    None => 0.0,
                };
                out.push(r);
                total += r;
            }
            total
        };
        let mut buf = Vec::with_capacity(k);
        let (mut lo, mut hi) = (0.0, 1.0);
        while pick(hi, &mut buf) > budget {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if pick(mid, &mut buf) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        pick(hi, &mut buf);
        for j in 0..k {
            funded[j] = buf[j] > 0.0;
        }
        (rewards, price) = water_fill(&solos, &funded, budget);
        value = total_value(&solos, &idle, &rewards);

        // toggle single nodes while that helps
        loop {
            let mut best: Option<(usize, Vec<f64>, f64, f64)> = None;
            for j in 0..k {
                if solos[j].is_none() {
                    continue;
                }
                funded[j] = !funded[j];
                let floor: f64 = (0..k).filter(|&i| funded[i]).map(|i| solos[i].unwrap().lo).sum();
                if floor <= budget {
                    let (r, mu) = water_fill(&solos, &funded, budget);
                    let v = total_value(&solos, &idle, &r);
                    let bar = best.as_ref().map_or(value, |b| b.2);
                    if v > bar + 1e-12 * bar.abs().max(1.0) {
                        best = Some((j, r, v, mu));
                    }
                }
                funded[j] = !funded[j];
            }
            match best {
                Some((j, r, v, mu)) => {
                    funded[j] = !funded[j];
                    rewards = r;
                    value = v;
                    price = mu;
                }
                None => break,
            }
        }
    }

    let mut periods = vec![0.0; k];
    let mut excluded = Vec::new();
    for (pos, &i) in subset.iter().enumerate() {
        periods[pos] = best_response(&prepared[i].node, rewards[pos]);
        if rewards[pos] == 0.0 {
            excluded.push((pos, prepared[i].infeasible));
        }
    }
    Allocation { profile: StrategyProfile { rewards, periods }, shadow_price: price, excluded, value }
}

fn total_value(solos: &[Option<Solo>], idle: &[f64], rewards: &[f64]) -> f64 {
    let mut v = 0.0;
    for j in 0..solos.len() {
        v += match solos[j] {
            Some(s) if rewards[j] > 0.0 => s.leader.value(rewards[j]),
            _ => idle[j],
        };
    }
    v
}

/// Budget split over the funded nodes with a common marginal value; assumes
/// the funded lower ends fit in the budget. Returns rewards and the price.
fn water_fill(solos: &[Option<Solo>], funded: &[bool], budget: f64) -> (Vec<f64>, f64) {
    let k = solos.len();
    let mut rewards = vec![0.0; k];
    let mut spend = 0.0;
    for j in 0..k {
        if funded[j] {
            rewards[j] = solos[j].unwrap().reward;
            spend += rewards[j];
        }
    }
    if spend <= budget {
        return (rewards, 0.0);
    }
    let at = |mu: f64, out: &mut Vec<f64>| -> f64 {
        out.clear();
        let mut total = 0.0;
        for j in 0..k {
            let r = if funded[j] { priced_argmax(&solos[j].unwrap(), mu) } else { 0.0 };
            out.push(r);
            total += r;
        }
        total
    };
    let mut lo = 0.0;
    let mut hi = (0..k)
        .filter(|&j| funded[j])
        .map(|j| solos[j].unwrap().leader.slope(solos[j].unwrap().lo))
        .fold(0.0, f64::max);
    let mut buf = Vec::with_capacity(k);
    let mut best = Vec::new();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let total = at(mid, &mut buf);
        if total > budget {
            lo = mid;
        } else {
            hi = mid;
            best.clone_from(&buf);
            if budget - total <= 1e-10 * budget.max(1.0) {
                break;
            }
        }
    }
    if best.is_empty() {
        at(hi, &mut best);
    }
    (best, hi)
}

// argmax of value - mu*r on the node's range: Newton on the decreasing slope, guarded by bisection
pub(crate) fn priced_argmax(s: &Solo, mu: f64) -> f64 {
    let l = &s.leader;
    if l.slope(s.lo) <= mu {
        return s.lo;
    }
    if l.slope(s.hi) >= mu {
        return s.hi;
    }
    let (mut a, mut b) = (s.lo, s.hi);
    let mut x = s.reward.clamp(a, b);
    for _ in 0..200 {
        let g = l.slope(x) - mu;
        if g == 0.0 {
            break;
        }
        if g > 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = x - g / l.curvature(x);
        let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x || b - a <= 4.0 * f64::EPSILON * b {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Uniformly rescale rewards whose total exceeds the budget.
pub fn project_to_budget(raw: &[f64], budget: f64) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total <= budget {
        return raw.to_vec();
    }
    let scale = budget / total;
    raw.iter().map(|r| r * scale).collect()
}

/// Constraint flags for a node sitting at `period`.
pub(crate) fn binding_flags(
    node: &NodeParams,
    server: &ServerParams,
    task: &TaskParams,
    period: f64,
    budget_active: bool,
    excluded: bool,
) -> Binding {
    let a = node.idle_slots as f64;
    let t = task.slot;
    let tol = 1e-9;
    Binding {
        budget: budget_active && !excluded,
        aoi: aoi_unchecked(period, a, t) >= server.aoi_cap * (1.0 - tol),
        latency: latency_unchecked(period, a, t) >= server.latency_cap * (1.0 - tol),
        period_min: period <= node.period_min * (1.0 + tol),
        period_max: period >= node.period_max * (1.0 - tol),
        excluded,
    }
}

/// Server utility of one node for given reward and period.
pub(crate) fn node_value(node: &NodeParams, server: &ServerParams, task: &TaskParams, reward: f64, period: f64) -> Result<f64> {
    Ok(server.profit * node_satisfaction(node, server, task, period)? - reward * (1.0 / period).ln())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::leader::optimize_unit_reward;
    use super::*;

    #[test]
    fn slack_budget_returns_solo_optima() {
        let nodes = ref_nodes();
        let s = ref_server(1e6);
        let alloc = allocate_budget(&nodes, &s, &task()).unwrap();
        for (i, n) in nodes.iter().enumerate() {
            let r = optimize_unit_reward(n, &s, &task()).unwrap();
            assert_eq!(alloc.profile.rewards[i], r);
        }
        assert_eq!(alloc.shadow_price, 0.0);
    }

    #[test]
    fn reference_instance_values() {
        let nodes = ref_nodes();
        let alloc = allocate_budget(&nodes, &ref_server(50.0), &task()).unwrap();
        let want = [0.86720, 1.25964, 1.53816];
        for i in 0..3 {
            assert!((alloc.profile.rewards[i] - want[i]).abs() < 2e-5, "{:?}", alloc.profile.rewards);
        }
        assert!((alloc.value - 765.896).abs() < 1e-2, "{}", alloc.value);
    }

    #[test]
    fn symmetric_pair_splits_budget() {
        // a long worst-case period makes leaving a node unpaid costly, so both get funded
        let n = NodeParams { cost: 2.0, idle_slots: 2, rate: 10.0, period_min: 2.5, period_max: 20.0 };
        let s = unit_server(3.0);
        let solo = optimize_unit_reward(&n, &s, &task()).unwrap();
        let tight = ServerParams { budget: solo, ..s };
        let alloc = allocate_budget(&[n, n], &tight, &task()).unwrap();
        assert!((alloc.profile.rewards[0] - 0.5 * solo).abs() < 1e-9);
        assert_eq!(alloc.profile.rewards[0], alloc.profile.rewards[1]);
        assert!((alloc.profile.spend() - solo).abs() < 1e-8);
    }

    #[test]
    fn short_worst_period_prefers_funding_one() {
        let n = NodeParams { cost: 2.0, idle_slots: 2, rate: 10.0, period_min: 2.5, period_max: 8.0 };
        let s = unit_server(3.0);
        let solo = optimize_unit_reward(&n, &s, &task()).unwrap();
        let alloc = allocate_budget(&[n, n], &ServerParams { budget: solo, ..s }, &task()).unwrap();
        assert_eq!(alloc.profile.rewards, vec![solo, 0.0]);
        assert_eq!(alloc.excluded, vec![(1, None)]);
    }

    #[test]
    fn tight_budget_matches_grid() {
        let nodes = ref_nodes();
        let s = ref_server(2.5);
        let alloc = allocate_budget(&nodes, &s, &task()).unwrap();
        assert!((alloc.profile.spend() - 2.5).abs() < 1e-8);
        assert!(alloc.shadow_price > 0.0);
        let iv: Vec<(f64, f64)> = nodes.iter().map(|n| feasible_reward_interval(n, &s, &task()).unwrap()).collect();
        let val = |i: usize, r: f64| leader_objective(r, &nodes[i], &s, &task()).unwrap();
        let step = 1e-2;
        let grid: Vec<Vec<(f64, f64)>> = (0..3)
            .map(|i| {
                let (lo, hi) = iv[i];
                let n = ((hi - lo) / step).floor() as usize;
                std::iter::once(0.0).chain((0..=n).map(|k| lo + k as f64 * step)).map(|r| (r, val(i, r))).collect()
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, [0.0; 3]);
        for &(r0, v0) in &grid[0] {
            for &(r1, v1) in &grid[1] {
                for &(r2, v2) in &grid[2] {
                    if r0 + r1 + r2 <= 2.5 && v0 + v1 + v2 > best.0 {
                        best = (v0 + v1 + v2, [r0, r1, r2]);
                    }
                }
            }
        }
        for i in 0..3 {
            assert!((alloc.profile.rewards[i] - best.1[i]).abs() <= 2e-2, "{:?} vs {:?}", alloc.profile.rewards, best.1);
        }
        assert!(alloc.value >= best.0 - 1e-9);
    }

    #[test]
    fn water_level_equalizes_slopes() {
        let nodes = ref_nodes();
        let s = ref_server(2.5);
        let alloc = allocate_budget(&nodes, &s, &task()).unwrap();
        for (i, n) in nodes.iter().enumerate() {
            let (lo, hi) = feasible_reward_interval(n, &s, &task()).unwrap();
            let r = alloc.profile.rewards[i];
            if r > lo + 1e-9 && r < hi - 1e-9 {
                let l = Leader::new(n, &s, &task());
                assert!((l.slope(r) - alloc.shadow_price).abs() < 1e-6 * alloc.shadow_price.max(1.0));
            }
        }
    }

    #[test]
    fn budget_below_floor_excludes_nodes() {
        let nodes = ref_nodes();
        let s = ref_server(0.5);
        let alloc = allocate_budget(&nodes, &s, &task()).unwrap();
        assert!(alloc.profile.spend() <= 0.5 + 1e-9);
        assert!(!alloc.excluded.is_empty());
        for &(i, why) in &alloc.excluded {
            assert_eq!(alloc.profile.rewards[i], 0.0);
            assert!(why.is_none());
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_budget(&[1.0, 1.0], 3.0), vec![1.0, 1.0]);
        assert_eq!(project_to_budget(&[2.0, 2.0], 2.0), vec![1.0, 1.0]);
        assert_eq!(project_to_budget(&[0.0, 4.0], 2.0), vec![0.0, 2.0]);
    }
}
