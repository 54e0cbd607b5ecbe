//! Repeated pricing game as a partially observed multi-agent environment.
//!
//! Agent 0 is the server, agents `1..=n` the nodes. Each round the server
//! posts bids (projected onto the budget), every node sees its own bid and
//! picks a period, and all agents are paid their game utilities.
//!
//! Observations are scaled into `[0, 1]` by the action boxes:
//!
//! * server: bid history (`L x n`, oldest round first) then period history (`L x n`)
//! * node `i`: for each past round, its own bid followed by the other nodes'
//!   periods; then the bid announced for the current round as the last entry

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::game::{node_utility, project_to_budget, server_utility, solve_equilibrium};
use crate::game::{NodeParams, ServerParams, StrategyProfile, TaskParams};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub nodes: Vec<NodeParams>,
    pub server: ServerParams,
    pub task: TaskParams,
    /// Rounds of history in each observation.
    pub history: usize,
    pub max_steps: usize,
    /// Upper end of each bid's action box.
    pub bid_cap: f64,
    /// Server reward is divided by this.
    pub server_scale: f64,
    /// Node rewards are divided by these.
    pub node_scales: Vec<f64>,
    /// Nodes also see the other nodes' past bids.
    pub share_bids: bool,
}

impl EnvConfig {
    /// Defaults: three rounds of history, 50 steps, bid box `[0, 3]`, and
    /// rewards scaled by the magnitudes of the analytic equilibrium utilities.
    pub fn new(nodes: Vec<NodeParams>, server: ServerParams, task: TaskParams) -> Result<Self> {
        let eq = solve_equilibrium(&nodes, &server, &task)?;
        let scale = |v: f64| if v.abs() > 1e-9 { v.abs() } else { 1.0 };
        Ok(Self {
            node_scales: eq.node_utilities.iter().map(|&u| scale(u)).collect(),
            server_scale: scale(eq.server_utility),
            nodes,
            server,
            task,
            history: 3,
            max_steps: 50,
            bid_cap: 3.0,
            share_bids: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(invalid("nodes", "need at least one node"));
        }
        for n in &self.nodes {
            n.validate(&self.task)?;
        }
        self.server.validate()?;
        if self.history < 1 {
            return Err(invalid("history", "must be at least 1"));
        }
        if self.max_steps < 1 {
            return Err(invalid("max_steps", "must be at least 1"));
        }
        if !(self.bid_cap > 0.0 && self.bid_cap.is_finite()) {
            return Err(invalid("bid_cap", format!("{} is not positive", self.bid_cap)));
        }
        if self.node_scales.len() != self.nodes.len() {
            return Err(Error::Shape { expected: self.nodes.len(), got: self.node_scales.len() });
        }
        if std::iter::once(&self.server_scale).chain(&self.node_scales).any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("reward scale", "scales must be positive"));
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.nodes.len() + 1
    }

    pub fn server_obs_width(&self) -> usize {
        2 * self.nodes.len() * self.history
    }

    pub fn node_obs_width(&self) -> usize {
        let n = self.nodes.len();
        let bids = if self.share_bids { n } else { 1 };
        self.history * (bids + n - 1) + 1
    }

    pub fn obs_width(&self, agent: usize) -> usize {
        if agent == 0 {
            self.server_obs_width()
        } else {
            self.node_obs_width()
        }
    }

    /// Bid as a fraction of the cap.
    pub fn bid_unit(&self, bid: f64) -> f64 {
        bid / self.bid_cap
    }

    /// Period as a fraction of node `i`'s box.
    pub fn period_unit(&self, i: usize, period: f64) -> f64 {
        let n = &self.nodes[i];
        (period - n.period_min) / (n.period_max - n.period_min)
    }

    pub fn period_from_unit(&self, i: usize, u: f64) -> f64 {
        let n = &self.nodes[i];
        n.period_min + u * (n.period_max - n.period_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Observations for the next round, server first. Node entries carry a
    /// zero in the announced-bid slot until the next bids are known.
    pub observations: Vec<Vec<f64>>,
    /// Scaled rewards, server first.
    pub rewards: Vec<f64>,
    /// Unscaled utilities, server first.
    pub utilities: Vec<f64>,
    /// Bids after budget projection.
    pub bids: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    round: usize,
    bids: VecDeque<Vec<f64>>,
    periods: VecDeque<Vec<f64>>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let mut env = Self { config, round: 0, bids: VecDeque::new(), periods: VecDeque::new() };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Past `(bids, periods)` profiles, oldest first.
    pub fn history(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.bids.iter().cloned().zip(self.periods.iter().cloned()).collect()
    }

    /// Clears the round counter and fills the history with mid-box profiles.
    /// The environment itself has no randomness.
    pub fn reset(&mut self) -> Vec<Vec<f64>> {
        let c = &self.config;
        let mid_bids = vec![0.5 * c.bid_cap; c.nodes.len()];
        let mid_periods: Vec<f64> = c.nodes.iter().map(|n| 0.5 * (n.period_min + n.period_max)).collect();
        self.round = 0;
        self.bids = std::iter::repeat_n(mid_bids, c.history).collect();
        self.periods = std::iter::repeat_n(mid_periods, c.history).collect();
        self.observations()
    }

    pub fn server_observation(&self) -> Vec<f64> {
        let c = &self.config;
        let mut o = Vec::with_capacity(c.server_obs_width());
        for b in &self.bids {
            o.extend(b.iter().map(|&r| c.bid_unit(r)));
        }
        for p in &self.periods {
            o.extend(p.iter().enumerate().map(|(j, &th)| c.period_unit(j, th)));
        }
        o
    }

    /// Observation of node `i` (0-based among nodes) given its announced bid.
    pub fn node_observation(&self, i: usize, announced: f64) -> Vec<f64> {
        let c = &self.config;
        let mut o = Vec::with_capacity(c.node_obs_width());
        for (b, p) in self.bids.iter().zip(&self.periods) {
            if c.share_bids {
                o.extend(b.iter().map(|&r| c.bid_unit(r)));
            } else {
                o.push(c.bid_unit(b[i]));
            }
            o.extend(p.iter().enumerate().filter(|(j, _)| *j != i).map(|(j, &th)| c.period_unit(j, th)));
        }
        o.push(c.bid_unit(announced));
        o
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        let mut all = vec![self.server_observation()];
        all.extend((0..self.config.nodes.len()).map(|i| self.node_observation(i, 0.0)));
        all
    }

    /// Clips raw bids into the box and projects them onto the budget.
    pub fn announce(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let c = &self.config;
        if raw.len() != c.nodes.len() {
            return Err(Error::Shape { expected: c.nodes.len(), got: raw.len() });
        }
        if raw.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite { agent: 0 });
        }
        let boxed: Vec<f64> = raw.iter().map(|r| r.clamp(0.0, c.bid_cap)).collect();
        Ok(project_to_budget(&boxed, c.server.budget))
    }

    /// Applies one round. Periods are clipped into each node's box.
    pub fn step(&mut self, raw_bids: &[f64], periods: &[f64]) -> Result<StepOutcome> {
        let n = self.config.nodes.len();
        let bids = self.announce(raw_bids)?;
        if periods.len() != n {
            return Err(Error::Shape { expected: n, got: periods.len() });
        }
        if let Some(i) = periods.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { agent: i + 1 });
        }
        let periods: Vec<f64> = self
            .config
            .nodes
            .iter()
            .zip(periods)
            .map(|(node, &p)| p.clamp(node.period_min, node.period_max))
            .collect();
        let (utilities, rewards) = self.pay(&bids, &periods)?;
        self.bids.pop_front();
        self.periods.pop_front();
        self.bids.push_back(bids.clone());
        self.periods.push_back(periods);
        self.round += 1;
        Ok(StepOutcome {
            observations: self.observations(),
            rewards,
            utilities,
            bids,
            done: self.round >= self.config.max_steps,
        })
    }

    fn pay(&self, bids: &[f64], periods: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let c = &self.config;
        let profile = StrategyProfile { rewards: bids.to_vec(), periods: periods.to_vec() };
        let mut utilities = vec![server_utility(&profile, &c.nodes, &c.server, &c.task)?];
        for (i, node) in c.nodes.iter().enumerate() {
            utilities.push(node_utility(bids[i], periods[i], node.cost)?);
        }
        let rewards = utilities
            .iter()
            .enumerate()
            .map(|(k, u)| u / if k == 0 { c.server_scale } else { c.node_scales[k - 1] })
            .collect();
        Ok((utilities, rewards))
    }
}

/// One CSV row per agent and step: `episode, step, agent, action_0.., reward`.
/// The server fills one action column per node; nodes fill only `action_0`.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    width: usize,
    rows: Vec<(usize, usize, usize, Vec<f64>, f64)>,
}

impl EpisodeTrace {
    pub fn new(nodes: usize) -> Self {
        Self { width: nodes, rows: Vec::new() }
    }

    pub fn record(&mut self, episode: usize, step: usize, bids: &[f64], periods: &[f64], rewards: &[f64]) {
        self.rows.push((episode, step, 0, bids.to_vec(), rewards[0]));
        for (i, &p) in periods.iter().enumerate() {
            self.rows.push((episode, step, i + 1, vec![p], rewards[i + 1]));
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["episode".to_string(), "step".to_string(), "agent".to_string()];
        header.extend((0..self.width).map(|k| format!("action_{k}")));
        header.push("reward".to_string());
        w.write_record(&header)?;
        for (ep, st, agent, acts, rew) in &self.rows {
            let mut rec = vec![ep.to_string(), st.to_string(), agent_name(*agent)];
            rec.extend((0..self.width).map(|k| acts.get(k).map_or(String::new(), |v| format!("{v:?}"))));
            rec.push(format!("{rew:?}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn agent_name(agent: usize) -> String {
    if agent == 0 {
        "server".to_string()
    } else {
        format!("node{}", agent - 1)
    }
}
