//! Multi-agent actor-critic learning of the pricing game: one actor per
//! agent acting on its own observation, one critic per agent seeing every
//! observation and the joint action.

mod replay;
mod train;
mod update;

pub use replay::{ReplayBuffer, Transition};
pub use train::{
    critic_width, greedy_rollout, init_agents, load_agents, save_agents, train, train_observed, write_agents,
    write_log_csv,
    AgentBundle, GreedyOutcome, LogRow, MaddpgConfig, TrainOutcome,
};
pub use update::{
    action_fractions, actor_gradient, actor_update, critic_update, leader_gradient, leader_update, td_target,
    Follower,
};
