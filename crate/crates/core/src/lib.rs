//! Freshness-aware incentive game for federated learning.
//!
//! * [`aoi`] cycle model: AoI, service latency, data volume, quality, satisfaction
//! * [`game`] utilities, best responses, budgeted leader problem, baselines
//! * [`neural`], [`env`], [`maddpg`] learning the same equilibrium from play
//! * [`flsim`] federated averaging driven by the equilibrium periods
//! * [`harness`] scenarios, sweeps and reports behind the `satgame` binary

pub mod aoi;
pub mod env;
pub mod error;
pub mod flsim;
pub mod game;
pub mod harness;
pub mod maddpg;
pub mod neural;
pub mod num;

pub use error::{Error, Result};
