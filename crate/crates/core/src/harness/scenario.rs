//! Scenario files: TOML with one section per concern.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Deserialize;

use crate::aoi::SatisfactionParams;
use crate::error::{Error, Result};
use crate::game::{NodeParams, ServerParams, TaskParams};

/// Documented parameter ranges; leaving them needs `allow_out_of_range`.
pub const IDLE_SLOTS_RANGE: (u32, u32) = (1, 8);
pub const RATE_RANGE: (f64, f64) = (10.0, 80.0);
pub const QUALITY_SCALE_RANGE: (f64, f64) = (3.0, 7.0);
pub const NODE_COUNT_RANGE: (usize, usize) = (5, 25);
pub const UNIT_COST_RANGE: (f64, f64) = (1.0, 5.0);
pub const HORIZON: f64 = 10.0;
pub const SLOT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Satisfaction against the update period.
    Satisfaction,
    /// Optimized mechanism against the baselines over node counts and budgets.
    Mechanism,
    /// Optimized bid against node cost.
    Bids,
    /// Federated training per scheme and node count.
    FederatedSweep,
    /// Multi-agent learning on a fixed instance.
    Drl,
    /// Solve and verify one instance.
    Equilibrium,
    /// Federated training driven by one instance's equilibrium.
    Federated,
    /// Brute-force cross-checks of the solver and the cycle model.
    Oracle,
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Satisfaction => "satisfaction",
            Kind::Mechanism => "mechanism",
            Kind::Bids => "bids",
            Kind::FederatedSweep => "federated_sweep",
            Kind::Drl => "drl",
            Kind::Equilibrium => "equilibrium",
            Kind::Federated => "federated",
            Kind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    /// Accept values outside the documented ranges; each one is reported.
    #[serde(default)]
    pub allow_out_of_range: bool,
    #[serde(default)]
    pub task: TaskSection,
    #[serde(default)]
    pub server: ServerSection,
    pub pool: Option<PoolSection>,
    #[serde(default, rename = "node")]
    pub nodes: Vec<NodeSection>,
    pub satisfaction: Option<SatisfactionSection>,
    pub mechanism: Option<MechanismSection>,
    pub bids: Option<BidSection>,
    pub federated: Option<FederatedSection>,
    pub drl: Option<DrlSection>,
    pub equilibrium: Option<EquilibriumSection>,
    pub oracle: Option<OracleSection>,
    /// Directory of the scenario file, for relative paths inside it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub horizon: f64,
    pub slot: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self { horizon: HORIZON, slot: SLOT }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServerSection {
    pub quality_weight: f64,
    pub latency_weight: f64,
    pub quality_scale: f64,
    pub profit: f64,
    pub budget: f64,
    pub aoi_cap: Option<f64>,
    pub latency_cap: Option<f64>,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            quality_weight: 1.0,
            latency_weight: 20.0,
            quality_scale: 5.0,
            profit: 3.0,
            budget: 50.0,
            aoi_cap: None,
            latency_cap: None,
        }
    }
}

/// Random candidate nodes. A node with `a` idle slots costs `unit_cost * a`
/// and may pick periods in `a*t + period_margin`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolSection {
    pub size: usize,
    pub idle_slots: [u32; 2],
    pub rate: [f64; 2],
    pub unit_cost: [f64; 2],
    pub period_margin: [f64; 2],
    /// Drawn once per instance; the server's fixed value is used when absent.
    pub quality_scale: Option<[f64; 2]>,
}

impl Default for PoolSection {
    fn default() -> Self {
        Self {
            size: 25,
            idle_slots: [1, 8],
            rate: [10.0, 80.0],
            unit_cost: [1.0, 5.0],
            period_margin: [0.5, 6.0],
            quality_scale: Some([3.0, 7.0]),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    pub cost: f64,
    pub idle_slots: u32,
    pub rate: f64,
    pub period_min: Option<f64>,
    pub period_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SatisfactionSection {
    pub idle_slots: Vec<u32>,
    pub rates: Vec<f64>,
    pub quality_scales: Vec<f64>,
    /// Grid points per curve.
    pub points: usize,
    /// The grid covers `(a*t, a*t + span]`.
    pub span: f64,
}

impl Default for SatisfactionSection {
    fn default() -> Self {
        Self {
            idle_slots: vec![1, 4, 8],
            rates: vec![10.0, 45.0, 80.0],
            quality_scales: vec![3.0, 5.0, 7.0],
            points: 200,
            span: 12.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechanismSection {
    pub instances: usize,
    pub counts: Vec<usize>,
    pub budgets: Vec<f64>,
    /// Budgets at which the margin and interior-peak shares are asserted;
    /// the others are only reported.
    pub assert_budgets: Vec<f64>,
    pub min_margin_share: f64,
    pub min_peak_share: f64,
}

impl Default for MechanismSection {
    fn default() -> Self {
        Self {
            instances: 100,
            counts: vec![5, 10, 15, 20, 25],
            budgets: vec![50.0],
            assert_budgets: vec![50.0],
            min_margin_share: 0.95,
            min_peak_share: 0.8,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BidSection {
    pub idle_slots: u32,
    pub costs: Vec<f64>,
    pub profits: Vec<f64>,
    pub rates: Vec<f64>,
    /// Every setting's rank correlation between cost and bid must be at most this.
    pub max_spearman: f64,
}

impl Default for BidSection {
    fn default() -> Self {
        Self {
            idle_slots: 2,
            costs: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            profits: vec![2.0, 3.0, 4.0],
            rates: vec![20.0, 50.0, 80.0],
            max_spearman: -0.9,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Delimited numeric rows with a trailing integer label; replaces the
    /// synthetic data when set.
    pub path: Option<PathBuf>,
    pub test_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 10,
            separation: 3.0,
            train_size: 4000,
            test_size: 1000,
            path: None,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederatedSection {
    /// Selected node counts, for the sweep.
    pub counts: Vec<usize>,
    /// `proposed`, `no_incentive` or a baseline name.
    pub schemes: Vec<String>,
    pub rounds: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    /// Samples a node processes per unit time.
    pub compute_rate: f64,
    /// Fixed per-round time on top of the slowest node.
    pub overhead: f64,
    pub min_accuracy: f64,
    pub min_loss_decrease_share: f64,
    pub data: DataSection,
}

impl Default for FederatedSection {
    fn default() -> Self {
        Self {
            counts: vec![5, 10, 15, 20, 25],
            schemes: ["proposed", "no_incentive", "quality_first", "price_first", "random_pricing", "random_subset"]
                .map(String::from)
                .to_vec(),
            rounds: 30,
            local_epochs: 1,
            learning_rate: 0.5,
            compute_rate: 100.0,
            overhead: 1.0,
            min_accuracy: 0.9,
            min_loss_decrease_share: 0.95,
            data: DataSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrlSection {
    pub episodes: usize,
    pub steps: usize,
    pub history: usize,
    pub bid_cap: f64,
    pub share_bids: bool,
    pub gamma: f64,
    pub batch: usize,
    pub capacity: usize,
    pub soft_rate: f64,
    pub hidden: usize,
    pub critic_rate: f64,
    pub actor_rate: f64,
    pub leader_rate: f64,
    pub warmup_episodes: usize,
    pub noise_start: f64,
    pub noise_floor: f64,
    /// Defaults to 70% of the episodes after warm-up.
    pub noise_decay_episodes: Option<usize>,
    pub logit_penalty: f64,
    pub eval_every: usize,
    pub eval_steps: usize,
    pub max_bid_gap: f64,
    pub max_value_gap: f64,
}

impl Default for DrlSection {
    fn default() -> Self {
        Self {
            episodes: 200,
            steps: 50,
            history: 3,
            bid_cap: 3.0,
            share_bids: false,
            gamma: 0.5,
            batch: 64,
            capacity: 100_000,
            soft_rate: 0.01,
            hidden: 64,
            critic_rate: 1e-3,
            actor_rate: 1e-3,
            leader_rate: 1e-4,
            warmup_episodes: 20,
            noise_start: 0.3,
            noise_floor: 0.02,
            noise_decay_episodes: None,
            logit_penalty: 1e-3,
            eval_every: 10,
            eval_steps: 20,
            max_bid_gap: 0.1,
            max_value_gap: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumSection {
    /// Largest unilateral gain the verifier tolerates.
    pub eps: f64,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        Self { eps: 1e-6 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// Random single-node instances solved against a grid search.
    pub instances: usize,
    pub reward_step: f64,
    pub period_step: f64,
    pub reward_tol: f64,
    pub period_tol: f64,
    pub value_rel_tol: f64,
    /// Random (node, reward) draws for the best-response check.
    pub draws: usize,
    /// Collection slots enumerated by the cycle oracle.
    pub max_collection_slots: u32,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            instances: 25,
            reward_step: 1e-3,
            period_step: 1e-2,
            reward_tol: 1e-2,
            period_tol: 1e-2,
            value_rel_tol: 1e-3,
            draws: 1000,
            max_collection_slots: 8,
        }
    }
}

pub(crate) fn bad(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Scenario { field: field.into(), reason: reason.into() }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e_field(&e), e.message().trim().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("--scenario", format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::parse(&text).map_err(|e| match e {
            Error::Scenario { field, reason } => bad(field, format!("{reason} (in {})", path.display())),
            other => other,
        })?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    pub fn task(&self) -> TaskParams {
        TaskParams { horizon: self.task.horizon, slot: self.task.slot }
    }

    pub fn server(&self) -> ServerParams {
        server_params(&self.server, self.server.quality_scale, self.server.budget)
    }

    /// Explicit `[[node]]` entries with default period bounds filled in.
    pub fn explicit_nodes(&self) -> Vec<NodeParams> {
        let task = self.task();
        let margin = PoolSection::default().period_margin;
        self.nodes
            .iter()
            .map(|n| {
                let span = n.idle_slots as f64 * task.slot;
                NodeParams {
                    cost: n.cost,
                    idle_slots: n.idle_slots,
                    rate: n.rate,
                    period_min: n.period_min.unwrap_or(span + margin[0]),
                    period_max: n.period_max.unwrap_or(span + margin[1]),
                }
            })
            .collect()
    }

    pub fn pool(&self) -> PoolSection {
        self.pool.clone().unwrap_or_default()
    }

    /// Checks every section the kind reads. Values outside the documented
    /// ranges are errors unless `allow_out_of_range`, in which case they come
    /// back as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut v = Validator { allow: self.allow_out_of_range, warnings: Vec::new() };
        if self.name.trim().is_empty() {
            return Err(bad("name", "must not be empty"));
        }
        v.positive("task.horizon", self.task.horizon)?;
        v.positive("task.slot", self.task.slot)?;
        v.fixed("task.horizon", self.task.horizon, HORIZON)?;
        v.fixed("task.slot", self.task.slot, SLOT)?;
        let s = &self.server;
        v.positive("server.quality_weight", s.quality_weight)?;
        v.non_negative("server.latency_weight", s.latency_weight)?;
        v.positive("server.quality_scale", s.quality_scale)?;
        v.within("server.quality_scale", s.quality_scale, QUALITY_SCALE_RANGE)?;
        v.positive("server.profit", s.profit)?;
        v.positive("server.budget", s.budget)?;
        if let Some(c) = s.aoi_cap {
            v.positive("server.aoi_cap", c)?;
        }
        if let Some(c) = s.latency_cap {
            v.positive("server.latency_cap", c)?;
        }
        for (k, n) in self.explicit_nodes().iter().enumerate() {
            let f = |x: &str| format!("node[{k}].{x}");
            v.positive(&f("cost"), n.cost)?;
            v.positive(&f("rate"), n.rate)?;
            if n.idle_slots < 1 {
                return Err(bad(f("idle_slots"), "must be at least 1"));
            }
            v.within_u(&f("idle_slots"), n.idle_slots, IDLE_SLOTS_RANGE)?;
            v.within(&f("rate"), n.rate, RATE_RANGE)?;
            n.validate(&self.task()).map_err(|e| bad(f("period_min"), e.to_string()))?;
        }
        if let Some(p) = &self.pool {
            v.pool(p)?;
        }

        match self.kind {
            Kind::Satisfaction => {
                let sec = self.satisfaction.clone().unwrap_or_default();
                v.nonempty("satisfaction.idle_slots", sec.idle_slots.len())?;
                v.nonempty("satisfaction.rates", sec.rates.len())?;
                v.nonempty("satisfaction.quality_scales", sec.quality_scales.len())?;
                for &a in &sec.idle_slots {
                    if a < 1 {
                        return Err(bad("satisfaction.idle_slots", "entries must be at least 1"));
                    }
                    v.within_u("satisfaction.idle_slots", a, IDLE_SLOTS_RANGE)?;
                }
                for &d in &sec.rates {
                    v.positive("satisfaction.rates", d)?;
                    v.within("satisfaction.rates", d, RATE_RANGE)?;
                }
                for &q in &sec.quality_scales {
                    v.positive("satisfaction.quality_scales", q)?;
                    v.within("satisfaction.quality_scales", q, QUALITY_SCALE_RANGE)?;
                }
                if sec.points < 3 {
                    return Err(bad("satisfaction.points", "need at least 3 grid points"));
                }
                v.positive("satisfaction.span", sec.span)?;
            }
            Kind::Mechanism => {
                let sec = self.mechanism.clone().unwrap_or_default();
                let pool = self.pool();
                if sec.instances == 0 {
                    return Err(bad("mechanism.instances", "must be positive"));
                }
                v.counts("mechanism.counts", &sec.counts, pool.size)?;
                v.nonempty("mechanism.budgets", sec.budgets.len())?;
                for &b in &sec.budgets {
                    v.positive("mechanism.budgets", b)?;
                }
                for b in &sec.assert_budgets {
                    if !sec.budgets.contains(b) {
                        return Err(bad("mechanism.assert_budgets", format!("{b} is not in mechanism.budgets")));
                    }
                }
                v.share("mechanism.min_margin_share", sec.min_margin_share)?;
                v.share("mechanism.min_peak_share", sec.min_peak_share)?;
            }
            Kind::Bids => {
                let sec = self.bids.clone().unwrap_or_default();
                if sec.idle_slots < 1 {
                    return Err(bad("bids.idle_slots", "must be at least 1"));
                }
                v.within_u("bids.idle_slots", sec.idle_slots, IDLE_SLOTS_RANGE)?;
                if sec.costs.len() < 2 {
                    return Err(bad("bids.costs", "need at least two costs"));
                }
                for &c in &sec.costs {
                    v.positive("bids.costs", c)?;
                    v.within("bids.costs", c, UNIT_COST_RANGE)?;
                }
                v.nonempty("bids.profits", sec.profits.len())?;
                for &p in &sec.profits {
                    v.positive("bids.profits", p)?;
                }
                v.nonempty("bids.rates", sec.rates.len())?;
                for &d in &sec.rates {
                    v.positive("bids.rates", d)?;
                    v.within("bids.rates", d, RATE_RANGE)?;
                }
                if !(-1.0..=1.0).contains(&sec.max_spearman) {
                    return Err(bad("bids.max_spearman", "must lie in [-1, 1]"));
                }
            }
            Kind::FederatedSweep | Kind::Federated => {
                let sec = self.federated.clone().unwrap_or_default();
                if self.kind == Kind::FederatedSweep {
                    v.counts("federated.counts", &sec.counts, self.pool().size)?;
                    v.nonempty("federated.schemes", sec.schemes.len())?;
                    for name in &sec.schemes {
                        if name != "proposed" && name != "no_incentive" && name.parse::<crate::game::BaselineKind>().is_err() {
                            return Err(bad("federated.schemes", format!("unknown scheme `{name}`")));
                        }
                    }
                } else if self.nodes.is_empty() && self.pool.is_none() {
                    return Err(bad("node", "needs [[node]] entries or a [pool]"));
                }
                if sec.rounds == 0 {
                    return Err(bad("federated.rounds", "must be positive"));
                }
                if sec.local_epochs == 0 {
                    return Err(bad("federated.local_epochs", "must be positive"));
                }
                v.positive("federated.learning_rate", sec.learning_rate)?;
                v.positive("federated.compute_rate", sec.compute_rate)?;
                v.non_negative("federated.overhead", sec.overhead)?;
                v.share("federated.min_accuracy", sec.min_accuracy)?;
                v.share("federated.min_loss_decrease_share", sec.min_loss_decrease_share)?;
                let d = &sec.data;
                if d.path.is_none() {
                    if d.classes < 2 {
                        return Err(bad("federated.data.classes", "need at least two classes"));
                    }
                    if d.dim == 0 {
                        return Err(bad("federated.data.dim", "must be positive"));
                    }
                    if d.train_size == 0 || d.test_size == 0 {
                        return Err(bad("federated.data.train_size", "train and test sizes must be positive"));
                    }
                    v.positive("federated.data.separation", d.separation)?;
                } else if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
                    return Err(bad("federated.data.test_fraction", "must lie in (0, 1)"));
                }
            }
            Kind::Drl => {
                let sec = self.drl.clone().unwrap_or_default();
                if self.nodes.is_empty() {
                    return Err(bad("node", "needs [[node]] entries"));
                }
                if sec.steps == 0 {
                    return Err(bad("drl.steps", "must be positive"));
                }
                if sec.history == 0 {
                    return Err(bad("drl.history", "must be positive"));
                }
                v.positive("drl.bid_cap", sec.bid_cap)?;
                if !(0.0..=1.0).contains(&sec.gamma) {
                    return Err(bad("drl.gamma", "must lie in [0, 1]"));
                }
                v.share("drl.max_bid_gap", sec.max_bid_gap)?;
                v.share("drl.max_value_gap", sec.max_value_gap)?;
                if sec.eval_every == 0 {
                    return Err(bad("drl.eval_every", "must be positive"));
                }
            }
            Kind::Equilibrium => {
                if self.nodes.is_empty() && self.pool.is_none() {
                    return Err(bad("node", "needs [[node]] entries or a [pool]"));
                }
                let sec = self.equilibrium.clone().unwrap_or_default();
                v.non_negative("equilibrium.eps", sec.eps)?;
            }
            Kind::Oracle => {
                let sec = self.oracle.clone().unwrap_or_default();
                v.positive("oracle.reward_step", sec.reward_step)?;
                v.positive("oracle.period_step", sec.period_step)?;
                v.positive("oracle.reward_tol", sec.reward_tol)?;
                v.positive("oracle.period_tol", sec.period_tol)?;
                v.positive("oracle.value_rel_tol", sec.value_rel_tol)?;
                if sec.max_collection_slots == 0 {
                    return Err(bad("oracle.max_collection_slots", "must be positive"));
                }
            }
        }
        Ok(v.warnings)
    }
}

pub(crate) fn server_params(s: &ServerSection, quality_scale: f64, budget: f64) -> ServerParams {
    ServerParams {
        satisfaction: SatisfactionParams::new(s.quality_weight, s.latency_weight, quality_scale),
        profit: s.profit,
        budget,
        aoi_cap: s.aoi_cap.unwrap_or(f64::INFINITY),
        latency_cap: s.latency_cap.unwrap_or(f64::INFINITY),
    }
}

/// One random candidate drawn from the pool ranges.
pub fn random_node<R: Rng>(pool: &PoolSection, task: &TaskParams, rng: &mut R) -> NodeParams {
    let a = rng.random_range(pool.idle_slots[0]..=pool.idle_slots[1]);
    let unit = rng.random_range(pool.unit_cost[0]..=pool.unit_cost[1]);
    let rate = rng.random_range(pool.rate[0]..=pool.rate[1]);
    let span = a as f64 * task.slot;
    NodeParams {
        cost: unit * a as f64,
        idle_slots: a,
        rate,
        period_min: span + pool.period_margin[0],
        period_max: span + pool.period_margin[1],
    }
}

/// A random instance: the pool's candidates and the server, with the quality
/// scale drawn when the pool gives a range.
pub fn random_instance<R: Rng>(
    pool: &PoolSection,
    server: &ServerSection,
    budget: f64,
    task: &TaskParams,
    rng: &mut R,
) -> (Vec<NodeParams>, ServerParams) {
    let nodes: Vec<NodeParams> = (0..pool.size).map(|_| random_node(pool, task, rng)).collect();
    let rho = match pool.quality_scale {
        Some([lo, hi]) => rng.random_range(lo..=hi),
        None => server.quality_scale,
    };
    (nodes, server_params(server, rho, budget))
}

/// Independent stream seed for item `k` of a run seeded with `seed`.
pub fn stream_seed(seed: u64, k: u64) -> u64 {
    seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn e_field(e: &toml::de::Error) -> String {
    // serde messages quote the offending key as `key`
    let msg = e.message();
    msg.split('`').nth(1).map(str::to_string).unwrap_or_else(|| "toml".to_string())
}

struct Validator {
    allow: bool,
    warnings: Vec<String>,
}

impl Validator {
    fn positive(&self, field: &str, x: f64) -> Result<()> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(bad(field, format!("{x} is not a positive finite number")));
        }
        Ok(())
    }

    fn non_negative(&self, field: &str, x: f64) -> Result<()> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(bad(field, format!("{x} is not a non-negative finite number")));
        }
        Ok(())
    }

    fn share(&self, field: &str, x: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&x) {
            return Err(bad(field, format!("{x} is not in [0, 1]")));
        }
        Ok(())
    }

    fn nonempty(&self, field: &str, len: usize) -> Result<()> {
        if len == 0 {
            return Err(bad(field, "must not be empty"));
        }
        Ok(())
    }

    fn out_of_range(&mut self, field: &str, shown: String, range: String) -> Result<()> {
        let msg = format!("{shown} outside the documented range {range}");
        if self.allow {
            self.warnings.push(format!("{field}: {msg}"));
            Ok(())
        } else {
            Err(bad(field, format!("{msg}; set allow_out_of_range = true to keep it")))
        }
    }

    fn within(&mut self, field: &str, x: f64, (lo, hi): (f64, f64)) -> Result<()> {
        if x < lo || x > hi {
            return self.out_of_range(field, x.to_string(), format!("[{lo}, {hi}]"));
        }
        Ok(())
    }

    fn within_u(&mut self, field: &str, x: u32, (lo, hi): (u32, u32)) -> Result<()> {
        if x < lo || x > hi {
            return self.out_of_range(field, x.to_string(), format!("[{lo}, {hi}]"));
        }
        Ok(())
    }

    fn fixed(&mut self, field: &str, x: f64, want: f64) -> Result<()> {
        if x != want {
            return self.out_of_range(field, x.to_string(), format!("[{want}, {want}]"));
        }
        Ok(())
    }

    fn counts(&mut self, field: &str, counts: &[usize], pool: usize) -> Result<()> {
        self.nonempty(field, counts.len())?;
        for &n in counts {
            if n == 0 || n > pool {
                return Err(bad(field, format!("{n} not in 1..={pool} (pool size)")));
            }
            if n < NODE_COUNT_RANGE.0 || n > NODE_COUNT_RANGE.1 {
                self.out_of_range(field, n.to_string(), format!("[{}, {}]", NODE_COUNT_RANGE.0, NODE_COUNT_RANGE.1))?;
            }
        }
        Ok(())
    }

    fn pool(&mut self, p: &PoolSection) -> Result<()> {
        if p.size == 0 {
            return Err(bad("pool.size", "must be positive"));
        }
        if p.size > NODE_COUNT_RANGE.1 {
            self.out_of_range("pool.size", p.size.to_string(), format!("[1, {}]", NODE_COUNT_RANGE.1))?;
        }
        let [alo, ahi] = p.idle_slots;
        if alo < 1 || alo > ahi {
            return Err(bad("pool.idle_slots", "need 1 <= low <= high"));
        }
        self.within_u("pool.idle_slots", alo, IDLE_SLOTS_RANGE)?;
        self.within_u("pool.idle_slots", ahi, IDLE_SLOTS_RANGE)?;
        self.pair("pool.rate", p.rate, true)?;
        self.within("pool.rate", p.rate[0], RATE_RANGE)?;
        self.within("pool.rate", p.rate[1], RATE_RANGE)?;
        self.pair("pool.unit_cost", p.unit_cost, true)?;
        self.within("pool.unit_cost", p.unit_cost[0], UNIT_COST_RANGE)?;
        self.within("pool.unit_cost", p.unit_cost[1], UNIT_COST_RANGE)?;
        self.pair("pool.period_margin", p.period_margin, true)?;
        if p.period_margin[0] >= p.period_margin[1] {
            return Err(bad("pool.period_margin", "low must be below high"));
        }
        if let Some(q) = p.quality_scale {
            self.pair("pool.quality_scale", q, true)?;
            self.within("pool.quality_scale", q[0], QUALITY_SCALE_RANGE)?;
            self.within("pool.quality_scale", q[1], QUALITY_SCALE_RANGE)?;
        }
        Ok(())
    }

    fn pair(&self, field: &str, [lo, hi]: [f64; 2], positive: bool) -> Result<()> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi || (positive && lo <= 0.0) {
            return Err(bad(field, format!("[{lo}, {hi}] is not an increasing pair of positive numbers")));
        }
        Ok(())
    }
}
