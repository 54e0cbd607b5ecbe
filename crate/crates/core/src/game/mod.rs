//! Leader-follower pricing game between the training server and caching nodes.

mod baseline;
mod budget;
mod equilibrium;
mod leader;
#[cfg(test)]
mod properties;
mod selection;
mod utility;

pub use baseline::{baseline_strategy, BaselineKind};
pub use budget::{allocate_budget, project_to_budget, Allocation};
pub use equilibrium::{solve_equilibrium, verify_equilibrium, Verdict, Witness};
pub use leader::{
    ascend_unit_reward, feasible_period_interval, feasible_reward_interval, leader_objective,
    optimize_unit_reward, reduced_server_utility, reduced_server_utility_derivatives,
};
pub use selection::{select_nodes, subset_utility};
pub use utility::{
    best_response, node_cost, node_reward, node_satisfaction, node_utility,
    node_utility_derivatives, server_utility,
};

use crate::aoi::{CycleParams, SatisfactionParams};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParams {
    /// Unit cost of sustaining the update cycle.
    pub cost: f64,
    pub idle_slots: u32,
    /// Samples per slot.
    pub rate: f64,
    pub period_min: f64,
    pub period_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerParams {
    pub satisfaction: SatisfactionParams,
    /// Profit per unit of satisfaction.
    pub profit: f64,
    /// Total reward budget.
    pub budget: f64,
    pub aoi_cap: f64,
    pub latency_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskParams {
    pub horizon: f64,
    pub slot: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self { horizon: 10.0, slot: 1.0 }
    }
}

impl NodeParams {
    pub fn cycle(&self, task: &TaskParams, period: f64) -> CycleParams {
        CycleParams::new(period, self.idle_slots, task.slot, task.horizon, self.rate)
    }

    pub fn validate(&self, task: &TaskParams) -> Result<()> {
        if !(self.cost > 0.0 && self.cost.is_finite()) {
            return Err(invalid("cost", format!("{} is not positive", self.cost)));
        }
        if self.idle_slots < 1 {
            return Err(invalid("idle_slots", "must be at least 1"));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(invalid("rate", format!("{} is not positive", self.rate)));
        }
        let span = self.idle_slots as f64 * task.slot;
        if !(self.period_min > span && self.period_min < self.period_max && self.period_max.is_finite()) {
            return Err(invalid(
                "period bounds",
                format!("need {span} < {} < {}", self.period_min, self.period_max),
            ));
        }
        Ok(())
    }
}

impl ServerParams {
    pub fn validate(&self) -> Result<()> {
        self.satisfaction.validate()?;
        if !(self.profit > 0.0 && self.profit.is_finite()) {
            return Err(invalid("profit", "must be positive"));
        }
        if !(self.budget > 0.0) {
            return Err(invalid("budget", "must be positive"));
        }
        if !(self.aoi_cap > 0.0) {
            return Err(invalid("aoi_cap", "must be positive"));
        }
        if !(self.latency_cap > 0.0) {
            return Err(invalid("latency_cap", "must be positive"));
        }
        Ok(())
    }
}

impl TaskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.slot > 0.0 && self.slot.is_finite()) {
            return Err(invalid("slot", "must be positive"));
        }
        Ok(())
    }
}

/// Joint decisions: per-node unit rewards and update periods.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrategyProfile {
    pub rewards: Vec<f64>,
    pub periods: Vec<f64>,
}

impl StrategyProfile {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn spend(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Which constraints are active for one node at the equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Binding {
    pub budget: bool,
    pub aoi: bool,
    pub latency: bool,
    pub period_min: bool,
    pub period_max: bool,
    /// Node left unfunded because the budget cannot reach its feasible range.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub profile: StrategyProfile,
    pub node_utilities: Vec<f64>,
    pub server_utility: f64,
    /// Shadow price of the shared budget.
    pub shadow_price: f64,
    pub binding: Vec<Binding>,
}

impl Equilibrium {
    /// Nodes whose utility at the equilibrium is negative.
    pub fn negative_utility_nodes(&self) -> Vec<usize> {
        (0..self.node_utilities.len()).filter(|&i| self.node_utilities[i] < 0.0).collect()
    }
}
