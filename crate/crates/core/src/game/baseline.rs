//! Reference pricing rules the optimized mechanism is compared against.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::budget::{allocate_prepared, node_value, project_to_budget, Allocation, Prepared};
use super::selection::select_prepared;
use super::utility::best_response;
use super::{NodeParams, ServerParams, StrategyProfile, TaskParams};
use crate::aoi::quality_unchecked;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Highest-quality nodes first, each paid its quality-maximizing price.
    QualityFirst,
    /// Cheapest nodes first, each paid its quality-maximizing price.
    PriceFirst,
    /// Optimized selection, uniformly random prices scaled into the budget.
    RandomPricing,
    /// Uniformly random selection, optimized prices.
    RandomSubset,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] =
        [BaselineKind::QualityFirst, BaselineKind::PriceFirst, BaselineKind::RandomPricing, BaselineKind::RandomSubset];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::QualityFirst => "quality_first",
            BaselineKind::PriceFirst => "price_first",
            BaselineKind::RandomPricing => "random_pricing",
            BaselineKind::RandomSubset => "random_subset",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid("baseline", format!("unknown kind `{s}`")))
    }
}

/// Selects `count` nodes and prices them by the given rule. The returned
/// allocation follows the order of the returned subset; unfunded nodes carry
/// zero reward and are listed as excluded.
pub fn baseline_strategy(
    kind: BaselineKind,
    nodes: &[NodeParams],
    count: usize,
    server: &ServerParams,
    task: &TaskParams,
    seed: u64,
) -> Result<(Vec<usize>, Allocation)> {
    if count < 1 || count > nodes.len() {
        return Err(invalid("count", format!("{count} not in 1..={}", nodes.len())));
    }
    server.validate()?;
    task.validate()?;
    let prepared = Prepared::all(nodes, server, task)?;
    baseline_prepared(kind, &prepared, count, server, task, seed)
}

pub(crate) fn baseline_prepared(
    kind: BaselineKind,
    prepared: &[Prepared],
    count: usize,
    server: &ServerParams,
    task: &TaskParams,
    seed: u64,
) -> Result<(Vec<usize>, Allocation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        BaselineKind::QualityFirst => {
            let score = |i: usize| match prepared[i].solo {
                Some(s) => quality_unchecked(
                    &prepared[i].node.cycle(task, prepared[i].node.cost / s.reward),
                    server.satisfaction.quality_scale,
                ),
                None => f64::NEG_INFINITY,
            };
            let mut order: Vec<usize> = (0..prepared.len()).collect();
            order.sort_by(|&x, &y| score(y).total_cmp(&score(x)).then(x.cmp(&y)));
            fund_in_order(prepared, &order[..count], server, task)
        }
        BaselineKind::PriceFirst => {
            let mut order: Vec<usize> = (0..prepared.len()).collect();
            order.sort_by(|&x, &y| {
                let key = |i: usize| if prepared[i].solo.is_some() { prepared[i].node.cost } else { f64::INFINITY };
                key(x).total_cmp(&key(y)).then(x.cmp(&y))
            });
            fund_in_order(prepared, &order[..count], server, task)
        }
        BaselineKind::RandomPricing => {
            let (subset, _) = select_prepared(prepared, count, server.budget);
            let raw: Vec<f64> = subset
                .iter()
                .map(|&i| match prepared[i].solo {
                    Some(s) => rng.random_range(s.lo..=s.hi),
                    None => 0.0,
                })
                .collect();
            let rewards = project_to_budget(&raw, server.budget);
            let alloc = settle(prepared, &subset, rewards, server, task)?;
            Ok((subset, alloc))
        }
        BaselineKind::RandomSubset => {
            let mut subset = sample(&mut rng, prepared.len(), count).into_vec();
            subset.sort_unstable();
            let alloc = allocate_prepared(prepared, &subset, server.budget);
            Ok((subset, alloc))
        }
    }
}

// pays each node in `order` its quality-maximizing price until the budget runs short
fn fund_in_order(
    prepared: &[Prepared],
    order: &[usize],
    server: &ServerParams,
    task: &TaskParams,
) -> Result<(Vec<usize>, Allocation)> {
    let mut left = server.budget;
    let mut rewards = Vec::with_capacity(order.len());
    let mut open = true;
    for &i in order {
        let bid = prepared[i].solo.map(|s| {
            let th = quality_peak(&prepared[i].node, task, prepared[i].node.cost / s.hi, prepared[i].node.cost / s.lo);
            (prepared[i].node.cost / th).clamp(s.lo, s.hi)
        });
        match bid {
            Some(b) if open && b <= left => {
                left -= b;
                rewards.push(b);
            }
            _ => {
                open = open && bid.is_none();
                rewards.push(0.0);
            }
        }
    }
    // report in index order like the other rules
    let mut pairs: Vec<(usize, f64)> = order.iter().copied().zip(rewards).collect();
    pairs.sort_by_key(|p| p.0);
    let subset: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let rewards: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let alloc = settle(prepared, &subset, rewards, server, task)?;
    Ok((subset, alloc))
}

// period maximizing data quality on [lo, hi]; quality rises then falls in the period
fn quality_peak(node: &NodeParams, task: &TaskParams, lo: f64, hi: f64) -> f64 {
    let q = |th: f64| quality_unchecked(&node.cycle(task, th), 1.0);
    let g = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-10 * (1.0 + b) {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if q(x1) < q(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    0.5 * (a + b)
}

fn settle(
    prepared: &[Prepared],
    subset: &[usize],
    rewards: Vec<f64>,
    server: &ServerParams,
    task: &TaskParams,
) -> Result<Allocation> {
    let mut periods = Vec::with_capacity(subset.len());
    let mut value = 0.0;
    let mut excluded = Vec::new();
    for (pos, &i) in subset.iter().enumerate() {
        let node = &prepared[i].node;
        let th = best_response(node, rewards[pos]);
        value += node_value(node, server, task, rewards[pos], th)?;
        periods.push(th);
        if rewards[pos] == 0.0 {
            excluded.push((pos, prepared[i].infeasible));
        }
    }
    Ok(Allocation { profile: StrategyProfile { rewards, periods }, shadow_price: 0.0, excluded, value })
}
