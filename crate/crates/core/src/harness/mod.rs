//! Scenario-driven experiments: every experiment is a scenario file, a
//! run turns it into tables plus pass/fail checks, and [`emit_report`]
//! writes those out.

mod report;
mod runs;
mod scenario;

pub use report::{emit_report, Check, Format, Report, Table, Value};
pub use runs::{grid_single_node, spearman, unimodal};
pub use scenario::{
    random_instance, random_node, stream_seed, BidSection, DataSection, DrlSection, EquilibriumSection,
    FederatedSection, Kind, MechanismSection, NodeSection, OracleSection, PoolSection, SatisfactionSection, Scenario,
    ServerSection, TaskSection,
};

use crate::error::Result;

/// Which CLI subcommand a scenario kind belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Equilibrium,
    Sweep,
    TrainDrl,
    FlRun,
    Oracle,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Equilibrium => "equilibrium",
            Command::Sweep => "sweep",
            Command::TrainDrl => "train-drl",
            Command::FlRun => "fl-run",
            Command::Oracle => "oracle",
        }
    }

    pub fn accepts(&self, kind: Kind) -> bool {
        match self {
            Command::Equilibrium => kind == Kind::Equilibrium,
            Command::Sweep => {
                matches!(kind, Kind::Satisfaction | Kind::Mechanism | Kind::Bids | Kind::FederatedSweep)
            }
            Command::TrainDrl => kind == Kind::Drl,
            Command::FlRun => kind == Kind::Federated,
            Command::Oracle => kind == Kind::Oracle,
        }
    }
}

/// Validates and runs a scenario. `seed` overrides the file's seed.
pub fn run_scenario(sc: &Scenario, seed: Option<u64>) -> Result<Report> {
    let warnings = sc.validate()?;
    let seed = seed.unwrap_or(sc.seed);
    let mut report =
        Report { scenario: sc.name.clone(), kind: sc.kind.name().to_string(), seed, warnings, ..Report::default() };
    match sc.kind {
        Kind::Satisfaction => runs::satisfaction_curves(sc, &mut report)?,
        Kind::Mechanism => runs::mechanism_sweep(sc, seed, &mut report)?,
        Kind::Bids => runs::bid_sweep(sc, &mut report)?,
        Kind::FederatedSweep => runs::federated_sweep(sc, seed, &mut report)?,
        Kind::Drl => runs::drl_run(sc, seed, &mut report)?,
        Kind::Equilibrium => runs::equilibrium_run(sc, seed, &mut report)?,
        Kind::Federated => runs::federated_run(sc, seed, &mut report)?,
        Kind::Oracle => runs::oracle_run(sc, seed, &mut report)?,
    }
    Ok(report)
}
