//! Gradient steps on batches. Every batch is row-major, one transition per row.
//!
//! Actors emit actions inside their box; critics see those actions as box
//! fractions. For a bounded head the fraction is exactly the squashed logit.

use crate::error::{Error, Result};
use crate::neural::{Adam, Grads, Head, Network, Trace};

/// Bellman target `reward + gamma * next_value`, without the bootstrap term
/// for terminal rows.
pub fn td_target(reward: f64, next_value: f64, gamma: f64, terminal: bool) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_value
    }
}

/// One Adam step on the mean squared error against `targets`. Returns the
/// loss before the step.
pub fn critic_update(critic: &mut Network, opt: &mut Adam, inputs: &[f64], targets: &[f64]) -> Result<f64> {
    let batch = targets.len();
    if batch == 0 {
        return Err(Error::Shape { expected: 1, got: 0 });
    }
    let trace = critic.forward_batch(inputs, batch)?;
    if trace.output.len() != batch {
        return Err(Error::Shape { expected: batch, got: trace.output.len() });
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(batch);
    for (q, y) in trace.output.iter().zip(targets) {
        loss += (q - y) * (q - y);
        grad.push(2.0 * (q - y) / batch as f64);
    }
    let (g, _) = critic.backward(&trace, &grad)?;
    opt.step(critic, &g)?;
    Ok(loss / batch as f64)
}

/// Actions as box fractions.
pub fn action_fractions(actor: &Network, trace: &Trace) -> Vec<f64> {
    match actor.head {
        Head::Identity => trace.output.clone(),
        Head::Bounded { .. } => trace.logits().iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect(),
    }
}

// gradient at the logits of `-mean(critic) + penalty * mean(logit^2)` given d(critic)/d(fraction)
fn logit_grad(actor: &Network, trace: &Trace, dq: &[f64], batch: usize, penalty: f64) -> Vec<f64> {
    let count = trace.logits().len() as f64;
    let fractions = action_fractions(actor, trace);
    trace
        .logits()
        .iter()
        .zip(dq)
        .zip(&fractions)
        .map(|((&z, &d), &s)| {
            let squash = if matches!(actor.head, Head::Bounded { .. }) { s * (1.0 - s) } else { 1.0 };
            -d * squash / batch as f64 + 2.0 * penalty * z / count
        })
        .collect()
}

/// One ascent step of `actor` on the mean critic value. The critic input of
/// each row is `context` with columns `column..column + k` replaced by the
/// actor's action fractions. The critic is only read. Returns the mean value
/// before the step.
pub fn actor_update(
    actor: &mut Network,
    opt: &mut Adam,
    critic: &Network,
    observations: &[f64],
    context: &[f64],
    column: usize,
    penalty: f64,
) -> Result<f64> {
    let (g, value) = actor_gradient(actor, critic, observations, context, column, penalty)?;
    opt.step(actor, &g)?;
    Ok(value)
}

/// Gradient of `-mean(value) + penalty * mean(logit^2)` for [`actor_update`].
pub fn actor_gradient(
    actor: &Network,
    critic: &Network,
    observations: &[f64],
    context: &[f64],
    column: usize,
    penalty: f64,
) -> Result<(Grads, f64)> {
    let width = critic.input_width();
    let batch = context.len() / width;
    if batch == 0 || context.len() != batch * width {
        return Err(Error::Shape { expected: width, got: context.len() });
    }
    let k = actor.output_width();
    if column + k > width {
        return Err(Error::Shape { expected: width, got: column + k });
    }
    let at = actor.forward_batch(observations, batch)?;
    let frac = action_fractions(actor, &at);
    let mut input = context.to_vec();
    for b in 0..batch {
        input[b * width + column..b * width + column + k].copy_from_slice(&frac[b * k..(b + 1) * k]);
    }
    let ct = critic.forward_batch(&input, batch)?;
    let value = ct.output.iter().sum::<f64>() / batch as f64;
    let (_, dx) = critic.backward(&ct, &vec![1.0; batch])?;
    let dq: Vec<f64> = (0..batch).flat_map(|b| dx[b * width + column..b * width + column + k].to_vec()).collect();
    let gl = logit_grad(actor, &at, &dq, batch, penalty);
    let (g, _) = actor.backward_logits(&at, &gl)?;
    Ok((g, value))
}

/// A node whose response to the announced bid is followed by the leader.
pub struct Follower<'a> {
    pub actor: &'a Network,
    /// Batch of this node's observations; the last entry of each row is the
    /// announced bid fraction and is overwritten.
    pub observations: &'a [f64],
    /// Where this node's observation starts in the critic input.
    pub obs_column: usize,
}

/// Server step that differentiates through the nodes' current policies: the
/// server's bid fractions are written into each node's observation, the
/// nodes' periods are recomputed, and the value gradient flows back along
/// both paths. Bids occupy columns `bid_column..+n` and periods
/// `period_column..+n` of the critic input. Returns the mean value before the step.
#[allow(clippy::too_many_arguments)]
pub fn leader_update(
    actor: &mut Network,
    opt: &mut Adam,
    critic: &Network,
    observations: &[f64],
    followers: &[Follower<'_>],
    context: &[f64],
    bid_column: usize,
    period_column: usize,
    penalty: f64,
) -> Result<f64> {
    let (g, value) =
        leader_gradient(actor, critic, observations, followers, context, bid_column, period_column, penalty)?;
    opt.step(actor, &g)?;
    Ok(value)
}

/// Gradient of `-mean(value) + penalty * mean(logit^2)` for [`leader_update`].
#[allow(clippy::too_many_arguments)]
pub fn leader_gradient(
    actor: &Network,
    critic: &Network,
    observations: &[f64],
    followers: &[Follower<'_>],
    context: &[f64],
    bid_column: usize,
    period_column: usize,
    penalty: f64,
) -> Result<(Grads, f64)> {
    let width = critic.input_width();
    let batch = context.len() / width;
    if batch == 0 || context.len() != batch * width {
        return Err(Error::Shape { expected: width, got: context.len() });
    }
    let n = followers.len();
    if actor.output_width() != n {
        return Err(Error::Shape { expected: n, got: actor.output_width() });
    }
    let at = actor.forward_batch(observations, batch)?;
    let bids = action_fractions(actor, &at);
    let mut input = context.to_vec();
    let mut follower_traces = Vec::with_capacity(n);
    for (i, f) in followers.iter().enumerate() {
        let w = f.actor.input_width();
        let mut obs = f.observations.to_vec();
        if obs.len() != batch * w {
            return Err(Error::Shape { expected: batch * w, got: obs.len() });
        }
        for b in 0..batch {
            obs[b * w + w - 1] = bids[b * n + i];
        }
        let t = f.actor.forward_batch(&obs, batch)?;
        let periods = action_fractions(f.actor, &t);
        for b in 0..batch {
            let row = &mut input[b * width..(b + 1) * width];
            row[f.obs_column..f.obs_column + w].copy_from_slice(&obs[b * w..(b + 1) * w]);
            row[bid_column + i] = bids[b * n + i];
            row[period_column + i] = periods[b];
        }
        follower_traces.push(t);
    }
    let ct = critic.forward_batch(&input, batch)?;
    let value = ct.output.iter().sum::<f64>() / batch as f64;
    let (_, dx) = critic.backward(&ct, &vec![1.0; batch])?;
    let mut dq = vec![0.0; batch * n];
    for (i, f) in followers.iter().enumerate() {
        let w = f.actor.input_width();
        let t = &follower_traces[i];
        // period fraction -> follower logit -> follower input
        let dperiod: Vec<f64> = (0..batch).map(|b| dx[b * width + period_column + i]).collect();
        let periods = action_fractions(f.actor, t);
        let dlogit: Vec<f64> = match f.actor.head {
            Head::Bounded { .. } => dperiod.iter().zip(&periods).map(|(d, s)| d * s * (1.0 - s)).collect(),
            Head::Identity => dperiod,
        };
        let (_, dobs) = f.actor.backward_logits(t, &dlogit)?;
        for b in 0..batch {
            let row = &dx[b * width..(b + 1) * width];
            dq[b * n + i] = row[bid_column + i] + row[f.obs_column + w - 1] + dobs[b * w + w - 1];
        }
    }
    let gl = logit_grad(actor, &at, &dq, batch, penalty);
    let (g, _) = actor.backward_logits(&at, &gl)?;
    Ok((g, value))
}
