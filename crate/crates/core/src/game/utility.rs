use super::{NodeParams, ServerParams, StrategyProfile, TaskParams};
use crate::aoi::satisfaction_unchecked;
use crate::error::{invalid, Error, Result};

/// Payment received by a node: `r * ln(1/period)`. Negative once the period exceeds one.
pub fn node_reward(reward: f64, period: f64) -> Result<f64> {
    if !(period > 0.0) {
        return Err(invalid("period", format!("{period} must be positive")));
    }
    Ok(reward * (1.0 / period).ln())
}

pub fn node_cost(cost: f64, period: f64) -> Result<f64> {
    if !(period > 0.0) {
        return Err(invalid("period", format!("{period} must be positive")));
    }
    Ok(cost / period)
}

pub fn node_utility(reward: f64, period: f64, cost: f64) -> Result<f64> {
    Ok(node_reward(reward, period)? - node_cost(cost, period)?)
}

/// First and second derivative of the node utility in the period.
pub fn node_utility_derivatives(reward: f64, period: f64, cost: f64) -> (f64, f64) {
    let first = cost / (period * period) - reward / period;
    let second = (reward * period - 2.0 * cost) / period.powi(3);
    (first, second)
}

/// Utility-maximizing period for a posted unit reward; zero reward leaves only
/// the cost, so the node stretches to its longest period.
pub fn best_response(node: &NodeParams, reward: f64) -> f64 {
    if reward <= 0.0 {
        return node.period_max;
    }
    (node.cost / reward).clamp(node.period_min, node.period_max)
}

/// Satisfaction the server draws from one node at a given period.
pub fn node_satisfaction(node: &NodeParams, server: &ServerParams, task: &TaskParams, period: f64) -> Result<f64> {
    let cyc = node.cycle(task, period);
    cyc.validate()?;
    Ok(satisfaction_unchecked(&cyc, &server.satisfaction))
}

pub fn server_utility(
    profile: &StrategyProfile,
    nodes: &[NodeParams],
    server: &ServerParams,
    task: &TaskParams,
) -> Result<f64> {
    if profile.rewards.len() != nodes.len() {
        return Err(Error::Shape { expected: nodes.len(), got: profile.rewards.len() });
    }
    if profile.periods.len() != nodes.len() {
        return Err(Error::Shape { expected: nodes.len(), got: profile.periods.len() });
    }
    let mut total = 0.0;
    for (i, node) in nodes.iter().enumerate() {
        let (r, th) = (profile.rewards[i], profile.periods[i]);
        total += server.profit * node_satisfaction(node, server, task, th)? - node_reward(r, th)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn reward_cost_utility_values() {
        assert!((node_reward(0.5, 4.0).unwrap() + 0.69314718).abs() < 1e-8);
        assert_eq!(node_reward(0.0, 7.0).unwrap(), 0.0);
        assert_eq!(node_reward(2.0, 1.0).unwrap(), 0.0);
        assert!(node_reward(1.0, 0.0).is_err());
        assert_eq!(node_cost(2.0, 4.0).unwrap(), 0.5);
        assert_eq!(node_cost(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(node_cost(0.5, 0.5).unwrap(), 1.0);
        assert!(node_cost(1.0, -1.0).is_err());
        assert!((node_utility(0.5, 4.0, 2.0).unwrap() + 1.19314718).abs() < 1e-8);
        assert_eq!(node_utility(0.0, 4.0, 2.0).unwrap(), -0.5);
        assert_eq!(node_utility(1.0, 1.0, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn derivative_values() {
        let (f, s) = node_utility_derivatives(0.5, 4.0, 2.0);
        assert!(f.abs() < 1e-15 && (s + 0.03125).abs() < 1e-15);
        let (f, s) = node_utility_derivatives(0.5, 2.0, 2.0);
        assert!((f - 0.25).abs() < 1e-15 && (s + 0.375).abs() < 1e-15);
    }

    #[test]
    fn best_response_values() {
        let n = NodeParams { cost: 2.0, idle_slots: 1, rate: 10.0, period_min: 1.0, period_max: 10.0 };
        assert_eq!(best_response(&n, 0.5), 4.0);
        assert_eq!(best_response(&n, 0.1), 10.0);
        assert_eq!(best_response(&n, 5.0), 1.0);
        assert_eq!(best_response(&n, 0.0), 10.0);
    }

    #[test]
    fn server_utility_values() {
        let n = NodeParams { cost: 2.0, idle_slots: 2, rate: 10.0, period_min: 2.5, period_max: 8.0 };
        let s = unit_server(3.0);
        let p = StrategyProfile { rewards: vec![0.5], periods: vec![4.0] };
        let v = server_utility(&p, &[n], &s, &task()).unwrap();
        assert!((v - 21.69314718).abs() < 1e-7);
        let p2 = StrategyProfile { rewards: vec![0.5, 0.5], periods: vec![4.0, 4.0] };
        assert!((server_utility(&p2, &[n, n], &s, &task()).unwrap() - 2.0 * v).abs() < 1e-12);
        let z = ServerParams { profit: 0.0, ..s };
        let p0 = StrategyProfile { rewards: vec![0.0], periods: vec![6.3] };
        assert_eq!(server_utility(&p0, &[n], &z, &task()).unwrap(), 0.0);
        assert!(server_utility(&p2, &[n], &s, &task()).is_err());
    }

    proptest! {
        #[test]
        fn first_derivative_matches_finite_difference(r in 0.01f64..5.0, th in 0.5f64..20.0, c in 0.1f64..10.0) {
            let h = 1e-6;
            let fd = (node_utility(r, th + h, c).unwrap() - node_utility(r, th - h, c).unwrap()) / (2.0 * h);
            let (f, s) = node_utility_derivatives(r, th, c);
            prop_assert!((f - fd).abs() <= 1e-5 * fd.abs().max(1e-3));
            let (fp, _) = node_utility_derivatives(r, th + h, c);
            let (fm, _) = node_utility_derivatives(r, th - h, c);
            let fd2 = (fp - fm) / (2.0 * h);
            prop_assert!((s - fd2).abs() <= 1e-5 * fd2.abs().max(1e-3));
            prop_assert_eq!(s < 0.0, th < 2.0 * c / r);
        }

        #[test]
        fn best_response_beats_grid(c in 0.1f64..10.0, r in 0.0f64..5.0, lo in 0.5f64..5.0, w in 0.1f64..20.0) {
            let n = NodeParams { cost: c, idle_slots: 1, rate: 1.0, period_min: lo, period_max: lo + w };
            let best = best_response(&n, r);
            prop_assert!(best >= n.period_min && best <= n.period_max);
            let ub = node_utility(r, best, c).unwrap();
            for k in 0..=2000 {
                let th = lo + w * k as f64 / 2000.0;
                prop_assert!(ub >= node_utility(r, th, c).unwrap() - 1e-12);
            }
        }
    }
}
