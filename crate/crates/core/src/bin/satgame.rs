use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use satgame::harness::{emit_report, run_scenario, Command, Format, Scenario};

#[derive(Parser)]
#[command(name = "satgame", version, about = "Freshness-aware incentive game: solver, learners and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve one instance and verify it against unilateral deviations.
    Equilibrium(Common),
    /// Run a sweep scenario (satisfaction, mechanism, bids, federated sweep).
    Sweep(Common),
    /// Train the multi-agent learners on a fixed instance.
    TrainDrl(Common),
    /// Federated training driven by an instance's equilibrium.
    FlRun(Common),
    /// Brute-force cross-checks of the solver and the cycle model.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to out/<scenario name>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = ["csv", "summary"])]
    format: String,
}

fn run(command: Command, args: &Common) -> satgame::Result<bool> {
    let sc = Scenario::load(&args.scenario)?;
    if !command.accepts(sc.kind) {
        return Err(satgame::Error::Scenario {
            field: "kind".into(),
            reason: format!("`{}` scenarios do not run under `{}`", sc.kind.name(), command.name()),
        });
    }
    let format: Format = args.format.parse()?;
    let report = run_scenario(&sc, args.seed)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
    emit_report(&report, &dir, format)?;
    print!("{}", report.summary());
    Ok(report.passed())
}

fn dispatch(cli: &Cli) -> (Command, &Common) {
    match &cli.command {
        Sub::Equilibrium(a) => (Command::Equilibrium, a),
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::TrainDrl(a) => (Command::TrainDrl, a),
        Sub::FlRun(a) => (Command::FlRun, a),
        Sub::Oracle(a) => (Command::Oracle, a),
    }
}

fn execute(cli: &Cli) -> u8 {
    let (command, args) = dispatch(cli);
    match run(command, args) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(execute(&Cli::parse()))
}
