use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::replay::{ReplayBuffer, Transition};
use super::update::{action_fractions, actor_update, critic_update, leader_update, td_target, Follower};
use crate::env::{agent_name, Env, EnvConfig};
use crate::error::{invalid, Error, Result};
use crate::neural::{read_network, soft_update, write_network, Activation, Adam, AdamConfig, Head, Network};
use crate::num::sig6;

#[derive(Debug, Clone, PartialEq)]
pub struct MaddpgConfig {
    pub episodes: usize,
    pub batch: usize,
    pub capacity: usize,
    pub gamma: f64,
    pub soft_rate: f64,
    pub hidden: usize,
    pub activation: Activation,
    pub critic_rate: f64,
    /// Learning rate of the node actors.
    pub actor_rate: f64,
    /// Learning rate of the server actor, kept below the node rate so the
    /// nodes track their best responses while the bids move.
    pub leader_rate: f64,
    /// Episodes of uniformly random bids before the server actor trains.
    pub warmup_episodes: usize,
    pub noise_start: f64,
    pub noise_floor: f64,
    /// Episodes after warm-up over which the noise falls linearly to the floor.
    pub noise_decay_episodes: usize,
    /// Weight of the mean squared actor logit, keeping actions off the flat ends of the squashing.
    pub logit_penalty: f64,
    /// Treat the last step of an episode as terminal instead of bootstrapping.
    pub terminal_on_truncation: bool,
    /// Greedy evaluation every this many episodes (and after the last one).
    pub eval_every: usize,
    pub eval_steps: usize,
    pub seed: u64,
}

impl Default for MaddpgConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            batch: 64,
            capacity: 100_000,
            gamma: 0.95,
            soft_rate: 0.01,
            hidden: 64,
            activation: Activation::Relu,
            critic_rate: 1e-3,
            actor_rate: 1e-3,
            leader_rate: 1e-4,
            warmup_episodes: 20,
            noise_start: 0.3,
            noise_floor: 0.02,
            noise_decay_episodes: 126,
            logit_penalty: 1e-3,
            terminal_on_truncation: false,
            eval_every: 10,
            eval_steps: 20,
            seed: 0,
        }
    }
}

impl MaddpgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.capacity < self.batch {
            return Err(invalid("batch", "need 0 < batch <= capacity"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid("gamma", format!("{} outside [0, 1)", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.soft_rate) {
            return Err(invalid("soft_rate", format!("{} outside [0, 1]", self.soft_rate)));
        }
        if self.hidden == 0 {
            return Err(invalid("hidden", "must be positive"));
        }
        if !(self.noise_start >= self.noise_floor && self.noise_floor >= 0.0) {
            return Err(invalid("noise", "need start >= floor >= 0"));
        }
        if self.eval_every == 0 || self.eval_steps == 0 {
            return Err(invalid("eval", "interval and steps must be positive"));
        }
        if !(self.logit_penalty >= 0.0) {
            return Err(invalid("logit_penalty", "must be non-negative"));
        }
        for (name, r) in [("critic_rate", self.critic_rate), ("actor_rate", self.actor_rate), ("leader_rate", self.leader_rate)] {
            AdamConfig::with_rate(r).validate().map_err(|_| invalid(name, format!("{r} is not a valid rate")))?;
        }
        Ok(())
    }

    /// Exploration noise (standard deviation in box fractions) during `episode`.
    pub fn noise_at(&self, episode: usize) -> f64 {
        let past = episode.saturating_sub(self.warmup_episodes) as f64;
        let span = self.noise_decay_episodes.max(1) as f64;
        if past >= span {
            return self.noise_floor;
        }
        self.noise_start - (self.noise_start - self.noise_floor) * past / span
    }
}

/// Actor, critic and their targets for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub actor: Network,
    pub critic: Network,
    pub target_actor: Network,
    pub target_critic: Network,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

/// Width of the shared critic input: every observation, then all bids, then all periods.
pub fn critic_width(env: &EnvConfig) -> usize {
    (0..env.agents()).map(|k| env.obs_width(k)).sum::<usize>() + 2 * env.nodes.len()
}

/// Fresh networks, targets equal to mains.
pub fn init_agents<R: Rng>(config: &MaddpgConfig, env: &EnvConfig, rng: &mut R) -> Result<Vec<AgentBundle>> {
    let n = env.nodes.len();
    let cw = critic_width(env);
    let h = config.hidden;
    let mut agents = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (head, out) = if k == 0 {
            (Head::Bounded { low: vec![0.0; n], high: vec![env.bid_cap; n] }, n)
        } else {
            let node = &env.nodes[k - 1];
            (Head::Bounded { low: vec![node.period_min], high: vec![node.period_max] }, 1)
        };
        let actor = Network::new(&[env.obs_width(k), h, h, out], config.activation, head, rng)?;
        let critic = Network::new(&[cw, h, h, 1], config.activation, Head::Identity, rng)?;
        let rate = if k == 0 { config.leader_rate } else { config.actor_rate };
        agents.push(AgentBundle {
            actor_opt: Adam::new(&actor, AdamConfig::with_rate(rate))?,
            critic_opt: Adam::new(&critic, AdamConfig::with_rate(config.critic_rate))?,
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        });
    }
    Ok(agents)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub episode: usize,
    pub agent: usize,
    pub mean_reward: f64,
    /// Mean applied action over the episode: one bid per node for the server, the period for a node.
    pub mean_action: Vec<f64>,
    pub noise: f64,
}

/// Noise-free play from a fresh reset.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub episode: usize,
    pub bids: Vec<f64>,
    pub periods: Vec<f64>,
    /// Unscaled, server first.
    pub utilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: Vec<AgentBundle>,
    pub log: Vec<LogRow>,
    pub evaluations: Vec<GreedyOutcome>,
}

/// Runs the full loop. Deterministic for a fixed `config.seed`.
pub fn train(config: &MaddpgConfig, env: &EnvConfig) -> Result<TrainOutcome> {
    train_observed(config, env, |_| {})
}

/// Like [`train`], calling `observe` after every learning step.
pub fn train_observed<F: FnMut(&[AgentBundle])>(
    config: &MaddpgConfig,
    env_config: &EnvConfig,
    mut observe: F,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut env = Env::new(env_config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agents = init_agents(config, env_config, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.capacity)?;
    let n = env_config.nodes.len();
    let mut log = Vec::with_capacity(config.episodes * (n + 1));
    let mut evaluations = Vec::new();

    for episode in 0..config.episodes {
        env.reset();
        let noise = config.noise_at(episode);
        let warm = episode < config.warmup_episodes;
        let mut reward_sum = vec![0.0; n + 1];
        let mut action_sum = vec![0.0; 2 * n];
        let mut steps = 0usize;
        loop {
            let so = env.server_observation();
            let raw: Vec<f64> = if warm {
                (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
            } else {
                let t = agents[0].actor.forward_batch(&so, 1)?;
                jitter(&action_fractions(&agents[0].actor, &t), noise, &mut rng)
            };
            let raw_bids: Vec<f64> = raw.iter().map(|u| u * env_config.bid_cap).collect();
            let bids = env.announce(&raw_bids)?;
            let mut obs = vec![so];
            let mut periods = Vec::with_capacity(n);
            let mut period_units = Vec::with_capacity(n);
            for i in 0..n {
                let no = env.node_observation(i, bids[i]);
                let t = agents[i + 1].actor.forward_batch(&no, 1)?;
                let u = jitter(&action_fractions(&agents[i + 1].actor, &t), noise, &mut rng)[0];
                periods.push(env_config.period_from_unit(i, u));
                period_units.push(u);
                obs.push(no);
            }
            let out = env.step(&bids, &periods)?;
            let mut actions: Vec<f64> = out.bids.iter().map(|&b| env_config.bid_unit(b)).collect();
            actions.extend_from_slice(&period_units);
            for (s, r) in reward_sum.iter_mut().zip(&out.rewards) {
                *s += r;
            }
            for (k, s) in action_sum.iter_mut().enumerate() {
                *s += if k < n { out.bids[k] } else { periods[k - n] };
            }
            steps += 1;
            buffer.push(Transition {
                observations: obs,
                actions,
                rewards: out.rewards.clone(),
                next_observations: out.observations.clone(),
                terminal: out.done && config.terminal_on_truncation,
            })?;
            if buffer.len() >= config.batch {
                learn(config, env_config, &mut agents, &buffer, &mut rng, !warm)?;
                observe(&agents);
            }
            if out.done {
                break;
            }
        }
        for k in 0..=n {
            let mean_action = if k == 0 {
                action_sum[..n].iter().map(|s| s / steps as f64).collect()
            } else {
                vec![action_sum[n + k - 1] / steps as f64]
            };
            log.push(LogRow { episode, agent: k, mean_reward: reward_sum[k] / steps as f64, mean_action, noise });
        }
        if (episode + 1) % config.eval_every == 0 || episode + 1 == config.episodes {
            let mut g = greedy_rollout(&agents, env_config, config.eval_steps)?;
            g.episode = episode;
            evaluations.push(g);
        }
    }
    Ok(TrainOutcome { agents, log, evaluations })
}

fn jitter<R: Rng>(u: &[f64], noise: f64, rng: &mut R) -> Vec<f64> {
    u.iter()
        .map(|&x| {
            let e: f64 = rng.sample(StandardNormal);
            (x + noise * e).clamp(0.0, 1.0)
        })
        .collect()
}

// joint critic input rows from per-agent observation batches and action fractions
fn joint_input(obs: &[Vec<f64>], widths: &[usize], bids: &[f64], periods: &[f64], n: usize, batch: usize) -> Vec<f64> {
    let width = widths.iter().sum::<usize>() + 2 * n;
    let mut x = Vec::with_capacity(batch * width);
    for b in 0..batch {
        for (o, &w) in obs.iter().zip(widths) {
            x.extend_from_slice(&o[b * w..(b + 1) * w]);
        }
        x.extend_from_slice(&bids[b * n..(b + 1) * n]);
        x.extend_from_slice(&periods[b * n..(b + 1) * n]);
    }
    x
}

fn learn<R: Rng>(
    config: &MaddpgConfig,
    env: &EnvConfig,
    agents: &mut [AgentBundle],
    buffer: &ReplayBuffer,
    rng: &mut R,
    lead: bool,
) -> Result<()> {
    let n = env.nodes.len();
    let batch = config.batch;
    let picks = buffer.sample(batch, rng)?;
    let widths: Vec<usize> = (0..=n).map(|k| env.obs_width(k)).collect();
    let mut obs: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(batch * w)).collect();
    let mut next: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(batch * w)).collect();
    let mut bids = Vec::with_capacity(batch * n);
    let mut periods = Vec::with_capacity(batch * n);
    for t in &picks {
        for k in 0..=n {
            obs[k].extend_from_slice(&t.observations[k]);
            next[k].extend_from_slice(&t.next_observations[k]);
        }
        bids.extend_from_slice(&t.actions[..n]);
        periods.extend_from_slice(&t.actions[n..]);
    }

    // next-round joint action from the target actors, nodes reacting to the target bids
    let nt = agents[0].target_actor.forward_batch(&next[0], batch)?;
    let next_bids = action_fractions(&agents[0].target_actor, &nt);
    let mut next_periods = vec![0.0; batch * n];
    for i in 0..n {
        let w = widths[i + 1];
        for b in 0..batch {
            next[i + 1][b * w + w - 1] = next_bids[b * n + i];
        }
        let t = agents[i + 1].target_actor.forward_batch(&next[i + 1], batch)?;
        for (b, u) in action_fractions(&agents[i + 1].target_actor, &t).into_iter().enumerate() {
            next_periods[b * n + i] = u;
        }
    }
    let next_input = joint_input(&next, &widths, &next_bids, &next_periods, n, batch);
    let input = joint_input(&obs, &widths, &bids, &periods, n, batch);

    for (k, agent) in agents.iter_mut().enumerate() {
        let q2 = agent.target_critic.forward_batch(&next_input, batch)?.output;
        let y: Vec<f64> = picks
            .iter()
            .zip(&q2)
            .map(|(t, &q)| td_target(t.rewards[k], q, config.gamma, t.terminal))
            .collect();
        critic_update(&mut agent.critic, &mut agent.critic_opt, &input, &y)?;
    }

    let obs_start: Vec<usize> = widths.iter().scan(0, |acc, w| {
        let s = *acc;
        *acc += w;
        Some(s)
    }).collect();
    let bid_column = widths.iter().sum::<usize>();
    let period_column = bid_column + n;
    if lead {
        let (server, nodes) = agents.split_first_mut().expect("server agent");
        let followers: Vec<Follower> = (0..n)
            .map(|i| Follower { actor: &nodes[i].actor, observations: &obs[i + 1], obs_column: obs_start[i + 1] })
            .collect();
        leader_update(
            &mut server.actor,
            &mut server.actor_opt,
            &server.critic,
            &obs[0],
            &followers,
            &input,
            bid_column,
            period_column,
            config.logit_penalty,
        )?;
    }
    for i in 0..n {
        let a = &mut agents[i + 1];
        actor_update(&mut a.actor, &mut a.actor_opt, &a.critic, &obs[i + 1], &input, period_column + i, config.logit_penalty)?;
    }
    for a in agents.iter_mut() {
        soft_update(&mut a.target_actor, &a.actor, config.soft_rate)?;
        soft_update(&mut a.target_critic, &a.critic, config.soft_rate)?;
    }
    Ok(())
}

/// Plays `steps` noise-free rounds from a reset and reports the last one.
pub fn greedy_rollout(agents: &[AgentBundle], env_config: &EnvConfig, steps: usize) -> Result<GreedyOutcome> {
    if agents.len() != env_config.agents() {
        return Err(Error::Shape { expected: env_config.agents(), got: agents.len() });
    }
    let mut env = Env::new(env_config.clone())?;
    let n = env_config.nodes.len();
    let mut last = None;
    for _ in 0..steps.max(1) {
        let raw = agents[0].actor.forward(&env.server_observation())?;
        let bids = env.announce(&raw)?;
        let mut periods = Vec::with_capacity(n);
        for i in 0..n {
            periods.push(agents[i + 1].actor.forward(&env.node_observation(i, bids[i]))?[0]);
        }
        let out = env.step(&bids, &periods)?;
        last = Some(GreedyOutcome { episode: 0, bids: out.bids, periods, utilities: out.utilities });
    }
    Ok(last.expect("at least one step"))
}

/// `episode, agent, mean_reward, action_summary, noise_scale`; the summary
/// joins the mean actions with `;`.
pub fn write_log_csv<W: Write>(log: &[LogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "agent", "mean_reward", "action_summary", "noise_scale"])?;
    for r in log {
        let summary = r.mean_action.iter().map(|&v| sig6(v)).collect::<Vec<_>>().join(";");
        w.write_record([r.episode.to_string(), agent_name(r.agent), sig6(r.mean_reward), summary, sig6(r.noise)])?;
    }
    w.flush()?;
    Ok(())
}

const AGENTS_MAGIC: &str = "satgame-agents 1";

/// Actor, critic, target actor and target critic of every agent, server
/// first, in the network text format. Optimizer moments are not stored.
pub fn write_agents<W: Write>(out: &mut W, agents: &[AgentBundle]) -> Result<()> {
    writeln!(out, "{AGENTS_MAGIC}")?;
    writeln!(out, "agents {}", agents.len())?;
    for a in agents {
        for net in [&a.actor, &a.critic, &a.target_actor, &a.target_critic] {
            write_network(out, net)?;
        }
    }
    Ok(())
}

pub fn save_agents(path: &Path, agents: &[AgentBundle]) -> Result<()> {
    let mut buf = Vec::new();
    write_agents(&mut buf, agents)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Restores agents saved by [`save_agents`] with fresh optimizer state.
pub fn load_agents(path: &Path, config: &MaddpgConfig) -> Result<Vec<AgentBundle>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(AGENTS_MAGIC) {
        return Err(Error::Checkpoint("missing agents header".into()));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.trim().strip_prefix("agents "))
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Checkpoint("bad agent count".into()))?;
    let mut agents = Vec::with_capacity(count);
    for k in 0..count {
        let actor = read_network(&mut lines)?;
        let critic = read_network(&mut lines)?;
        let target_actor = read_network(&mut lines)?;
        let target_critic = read_network(&mut lines)?;
        let rate = if k == 0 { config.leader_rate } else { config.actor_rate };
        agents.push(AgentBundle {
            actor_opt: Adam::new(&actor, AdamConfig::with_rate(rate))?,
            critic_opt: Adam::new(&critic, AdamConfig::with_rate(config.critic_rate))?,
            actor,
            critic,
            target_actor,
            target_critic,
        });
    }
    Ok(agents)
}
