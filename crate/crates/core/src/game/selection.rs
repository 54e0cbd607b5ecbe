use super::budget::{allocate_prepared, Allocation, Prepared};
use super::{NodeParams, ServerParams, TaskParams};
use crate::error::{invalid, Result};

/// Equilibrium server utility when only `subset` takes part.
pub fn subset_utility(
    nodes: &[NodeParams],
    subset: &[usize],
    server: &ServerParams,
    task: &TaskParams,
) -> Result<Allocation> {
    let prepared = Prepared::all(nodes, server, task)?;
    Ok(allocate_prepared(&prepared, subset, server.budget))
}

/// Picks `count` nodes: greedy by marginal server utility, then single swaps
/// until no exchange improves. Returns the sorted subset and its allocation.
pub fn select_nodes(
    nodes: &[NodeParams],
    count: usize,
    server: &ServerParams,
    task: &TaskParams,
) -> Result<(Vec<usize>, Allocation)> {
    if count < 1 || count > nodes.len() {
        return Err(invalid("count", format!("{count} not in 1..={}", nodes.len())));
    }
    server.validate()?;
    task.validate()?;
    let prepared = Prepared::all(nodes, server, task)?;
    Ok(select_prepared(&prepared, count, server.budget))
}

pub(crate) fn select_prepared(prepared: &[Prepared], count: usize, budget: f64) -> (Vec<usize>, Allocation) {
    let n = prepared.len();
    let eval = |s: &[usize]| allocate_prepared(prepared, s, budget);

    // no budget pressure: utilities add up, so the top standalone values are optimal
    let solo_value = |i: usize| prepared[i].solo.map_or(prepared[i].idle_value, |s| s.value);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| solo_value(y).total_cmp(&solo_value(x)).then(x.cmp(&y)));
    let mut top: Vec<usize> = order[..count].to_vec();
    top.sort_unstable();
    let spend: f64 = top.iter().filter_map(|&i| prepared[i].solo.map(|s| s.reward)).sum();
    if spend <= budget {
        let alloc = eval(&top);
        return (top, alloc);
    }

    if subset_count(n, count) <= ENUMERATION_LIMIT {
        return enumerate_best(prepared, n, count, budget);
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let mut current = eval(&chosen);
    while chosen.len() < count {
        let mut best: Option<(usize, Allocation)> = None;
        for j in 0..n {
            if chosen.contains(&j) {
                continue;
            }
            let mut trial = chosen.clone();
            trial.push(j);
            trial.sort_unstable();
            let a = eval(&trial);
            if best.as_ref().is_none_or(|b| a.value > b.1.value) {
                best = Some((j, a));
            }
        }
        let (j, a) = best.expect("a candidate remains");
        chosen.push(j);
        chosen.sort_unstable();
        current = a;
    }

    loop {
        let mut improved: Option<(Vec<usize>, Allocation)> = None;
        for out in 0..chosen.len() {
            for j in 0..n {
                if chosen.contains(&j) {
                    continue;
                }
                let mut trial = chosen.clone();
                trial[out] = j;
                trial.sort_unstable();
                let a = eval(&trial);
                let bar = improved.as_ref().map_or(current.value, |b| b.1.value);
                if a.value > bar + 1e-12 * bar.abs().max(1.0) {
                    improved = Some((trial, a));
                }
            }
        }
        match improved {
            Some((s, a)) => {
                chosen = s;
                current = a;
            }
            None => break,
        }
    }
    (chosen, current)
}

/// Pools with at most this many subsets of the requested size are searched exhaustively.
pub const ENUMERATION_LIMIT: u64 = 1024;

fn subset_count(n: usize, k: usize) -> u64 {
    let k = k.min(n - k) as u64;
    let mut c: u64 = 1;
    for j in 0..k {
        c = c.saturating_mul(n as u64 - j) / (j + 1);
    }
    c
}

fn enumerate_best(prepared: &[Prepared], n: usize, count: usize, budget: f64) -> (Vec<usize>, Allocation) {
    let mut idx: Vec<usize> = (0..count).collect();
    let mut best: Option<(Vec<usize>, Allocation)> = None;
    loop {
        let a = allocate_prepared(prepared, &idx, budget);
        if best.as_ref().is_none_or(|b| a.value > b.1.value) {
            best = Some((idx.clone(), a));
        }
        // next combination in lexicographic order
        let mut k = count;
        while k > 0 && idx[k - 1] == n - count + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for j in k..count {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best.expect("at least one subset")
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_nodes(rng: &mut ChaCha8Rng, n: usize) -> Vec<NodeParams> {
        (0..n)
            .map(|_| {
                let a = rng.random_range(1..=8u32);
                node(rng.random_range(1.0..5.0) * a as f64, a, rng.random_range(10.0..80.0))
            })
            .collect()
    }

    fn exhaustive(nodes: &[NodeParams], count: usize, s: &ServerParams) -> f64 {
        let n = nodes.len();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != count {
                continue;
            }
            let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            best = best.max(subset_utility(nodes, &subset, s, &task()).unwrap().value);
        }
        best
    }

    #[test]
    fn subset_counts() {
        assert_eq!(subset_count(6, 3), 20);
        assert_eq!(subset_count(25, 12), 5_200_300);
        assert_eq!(subset_count(8, 8), 1);
    }

    #[test]
    fn greedy_path_on_large_pool_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nodes = random_nodes(&mut rng, 25);
        let s = ref_server(20.0);
        let (chosen, a) = select_nodes(&nodes, 12, &s, &task()).unwrap();
        for out in 0..chosen.len() {
            for j in (0..25).filter(|j| !chosen.contains(j)) {
                let mut t = chosen.clone();
                t[out] = j;
                t.sort_unstable();
                assert!(subset_utility(&nodes, &t, &s, &task()).unwrap().value <= a.value + 1e-9);
            }
        }
    }

    #[test]
    fn full_count_takes_everything() {
        let nodes = ref_nodes();
        let (s, _) = select_nodes(&nodes, 3, &ref_server(2.5), &task()).unwrap();
        assert_eq!(s, vec![0, 1, 2]);
        assert!(select_nodes(&nodes, 0, &ref_server(2.5), &task()).is_err());
        assert!(select_nodes(&nodes, 4, &ref_server(2.5), &task()).is_err());
    }

    #[test]
    fn single_pick_is_best_singleton() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nodes = random_nodes(&mut rng, 6);
        let s = ref_server(50.0);
        let (pick, a) = select_nodes(&nodes, 1, &s, &task()).unwrap();
        let best = (0..6)
            .map(|i| subset_utility(&nodes, &[i], &s, &task()).unwrap().value)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.value, best);
        assert_eq!(pick.len(), 1);
    }

    #[test]
    fn matches_enumeration_on_small_pools() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let size = 4 + trial % 5;
            let nodes = random_nodes(&mut rng, size);
            // budgets that bind for some counts and not others
            let budget = rng.random_range(2.0..12.0);
            let s = ref_server(budget);
            for count in 1..=size {
                let (_, a) = select_nodes(&nodes, count, &s, &task()).unwrap();
                let want = exhaustive(&nodes, count, &s);
                assert!(
                    (a.value - want).abs() <= 1e-9 * want.abs().max(1.0),
                    "trial {trial} count {count}: {} vs {want}",
                    a.value
                );
            }
        }
    }
}
