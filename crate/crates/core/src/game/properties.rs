//! Invariants of the solver over random instances.

use proptest::prelude::*;

use super::*;
use crate::aoi::SatisfactionParams;

fn node() -> impl Strategy<Value = NodeParams> {
    (1u32..=8, 1.0f64..5.0, 10.0f64..80.0).prop_map(|(a, unit, rate)| NodeParams {
        cost: unit * a as f64,
        idle_slots: a,
        rate,
        period_min: a as f64 + 0.5,
        period_max: a as f64 + 6.0,
    })
}

fn server(rho: f64, budget: f64) -> ServerParams {
    ServerParams {
        satisfaction: SatisfactionParams::new(1.0, 20.0, rho),
        profit: 3.0,
        budget,
        aoi_cap: f64::INFINITY,
        latency_cap: f64::INFINITY,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equilibrium_is_feasible_and_stable(
        nodes in prop::collection::vec(node(), 1..5),
        rho in 3.0f64..7.0,
        budget in 1.0f64..60.0,
    ) {
        let task = TaskParams::default();
        let s = server(rho, budget);
        let eq = solve_equilibrium(&nodes, &s, &task).unwrap();
        prop_assert!(eq.profile.spend() <= budget * (1.0 + 1e-9));
        for (i, n) in nodes.iter().enumerate() {
            let th = eq.profile.periods[i];
            prop_assert!(th >= n.period_min && th <= n.period_max);
            prop_assert_eq!(th, best_response(n, eq.profile.rewards[i]));
        }
        let verdict = verify_equilibrium(&eq, &nodes, &s, &task, 1e-6).unwrap();
        prop_assert!(verdict.accepted(), "{:?}", verdict);
    }

    #[test]
    fn best_response_is_monotone_in_reward(n in node(), r1 in 0.01f64..20.0, r2 in 0.01f64..20.0) {
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(best_response(&n, hi) <= best_response(&n, lo));
    }

    #[test]
    fn projection_lands_in_the_budget(raw in prop::collection::vec(0.0f64..30.0, 1..8), budget in 0.5f64..50.0) {
        let p = project_to_budget(&raw, budget);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!(p.iter().sum::<f64>() <= budget * (1.0 + 1e-12));
        let total: f64 = raw.iter().sum();
        if total > budget {
            for (a, b) in p.iter().zip(&raw) {
                prop_assert!((a * total - b * budget).abs() <= 1e-9 * budget * total);
            }
        }
        let again = project_to_budget(&p, budget);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn selection_beats_every_baseline(
        nodes in prop::collection::vec(node(), 6..10),
        count in 1usize..6,
        rho in 3.0f64..7.0,
        seed in any::<u64>(),
    ) {
        let task = TaskParams::default();
        let s = server(rho, 50.0);
        let (subset, alloc) = select_nodes(&nodes, count, &s, &task).unwrap();
        prop_assert_eq!(subset.len(), count);
        for kind in BaselineKind::ALL {
            let (_, b) = baseline_strategy(kind, &nodes, count, &s, &task, seed).unwrap();
            prop_assert!(b.value <= alloc.value + 1e-9 * alloc.value.abs().max(1.0), "{} wins", kind.name());
        }
    }
}
