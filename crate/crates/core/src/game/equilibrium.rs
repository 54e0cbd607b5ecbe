use super::budget::{allocate_budget, binding_flags, node_value};
use super::leader::feasible_reward_interval;
use super::utility::{best_response, node_utility};
use super::{Equilibrium, NodeParams, ServerParams, TaskParams};
use crate::error::{Error, Result};

/// Grid step for node deviations in the period.
pub const PERIOD_STEP: f64 = 1e-2;
/// Grid step for server deviations in the unit reward.
pub const REWARD_STEP: f64 = 1e-3;

pub fn solve_equilibrium(nodes: &[NodeParams], server: &ServerParams, task: &TaskParams) -> Result<Equilibrium> {
    let alloc = allocate_budget(nodes, server, task)?;
    let profile = alloc.profile;
    let mut node_utilities = Vec::with_capacity(nodes.len());
    let mut binding = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let (r, th) = (profile.rewards[i], profile.periods[i]);
        node_utilities.push(node_utility(r, th, node.cost)?);
        let excluded = alloc.excluded.iter().any(|e| e.0 == i);
        binding.push(binding_flags(node, server, task, th, alloc.shadow_price > 0.0, excluded));
    }
    Ok(Equilibrium {
        profile,
        node_utilities,
        server_utility: alloc.value,
        shadow_price: alloc.shadow_price,
        binding,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// Node `node` gains `gain` by moving to `period`.
    Node { node: usize, period: f64, gain: f64 },
    /// The server gains `gain` by setting `node` to `reward`, optionally
    /// financed by moving `donor` to `donor_reward`.
    Server { node: usize, reward: f64, donor: Option<(usize, f64)>, gain: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accept,
    Reject(Witness),
}

impl Verdict {
    pub fn accepted(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).floor() as usize;
    (0..=n).map(move |k| lo + k as f64 * step).chain(std::iter::once(hi))
}

/// Checks unilateral grid deviations: each node over its period range, the
/// server over single-node reward changes within the budget and over
/// budget-neutral transfers between two nodes. Server deviations stay inside
/// each node's feasible reward range.
pub fn verify_equilibrium(
    eq: &Equilibrium,
    nodes: &[NodeParams],
    server: &ServerParams,
    task: &TaskParams,
    eps: f64,
) -> Result<Verdict> {
    let p = &eq.profile;
    if p.rewards.len() != nodes.len() || p.periods.len() != nodes.len() {
        return Err(Error::Shape { expected: nodes.len(), got: p.rewards.len() });
    }
    for (i, node) in nodes.iter().enumerate() {
        let here = node_utility(p.rewards[i], p.periods[i], node.cost)?;
        for th in grid(node.period_min, node.period_max, PERIOD_STEP) {
            let gain = node_utility(p.rewards[i], th, node.cost)? - here;
            if gain > eps {
                return Ok(Verdict::Reject(Witness::Node { node: i, period: th, gain }));
            }
        }
    }

    let current: Vec<f64> = (0..nodes.len())
        .map(|i| node_value(&nodes[i], server, task, p.rewards[i], p.periods[i]))
        .collect::<Result<_>>()?;
    let moved = |i: usize, r: f64| -> Result<f64> {
        let th = best_response(&nodes[i], r);
        node_value(&nodes[i], server, task, r, th)
    };
    let ranges: Vec<Option<(f64, f64)>> =
        nodes.iter().map(|n| feasible_reward_interval(n, server, task).ok()).collect();
    let slack = server.budget - p.spend();
    let tol = 1e-9;

    let mut options: Vec<Vec<(f64, f64)>> = Vec::with_capacity(nodes.len());
    for i in 0..nodes.len() {
        let mut opts = Vec::new();
        if let Some((lo, hi)) = ranges[i] {
            for r in grid(lo, hi, REWARD_STEP) {
                opts.push((r, moved(i, r)? - current[i]));
            }
        }
        options.push(opts);
    }
    for i in 0..nodes.len() {
        for &(r, gain) in &options[i] {
            if r - p.rewards[i] <= slack + tol && gain > eps {
                return Ok(Verdict::Reject(Witness::Server { node: i, reward: r, donor: None, gain }));
            }
        }
    }
    // transfers: raise i, cut j by the same amount
    for i in 0..nodes.len() {
        for &(r, gain_i) in &options[i] {
            let delta = r - p.rewards[i];
            if delta <= slack + tol {
                continue;
            }
            for j in 0..nodes.len() {
                if j == i {
                    continue;
                }
                let rj = p.rewards[j] - (delta - slack.max(0.0));
                let Some((lo, _)) = ranges[j] else { continue };
                if rj < lo - tol {
                    continue;
                }
                let gain = gain_i + moved(j, rj)? - current[j];
                if gain > eps {
                    return Ok(Verdict::Reject(Witness::Server { node: i, reward: r, donor: Some((j, rj)), gain }));
                }
            }
        }
    }
    Ok(Verdict::Accept)
}
