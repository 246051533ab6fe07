//! Command-line driver: synthesize gains, run closed-loop simulations,
//! verify residual-set claims, and demo the stock examples.
//!
//! Exit codes are a stable contract: 0 success, 1 input error, 2 synthesis
//! infeasible, 3 divergence during simulation, 4 verification failed.

use clap::{Args, Parser, Subcommand};
use consensus::error::Error;

mod cmds;
mod manifest;

#[derive(Parser)]
#[command(
    name = "consensus",
    version,
    about = "Robust consensus toolkit: gain synthesis, simulation, verification",
    long_about = "Synthesizes consensus gains for linear agents with matched \
uncertainties, simulates the six protocol variants, and verifies the \
boundedness guarantees (D1-D9) against recorded trajectories.\n\n\
Exit codes: 0 ok, 1 input error, 2 infeasible, 3 divergence, 4 verification failed."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize gains; print them as JSON on stdout
    Synthesize(SynthesizeArgs),
    /// Simulate a scenario; write manifest, resolved scenario, and CSV
    Simulate(SimulateArgs),
    /// Check a residual-set claim against a recorded trajectory
    Verify(VerifyArgs),
    /// Run the stock examples end to end and print a summary table
    Demo(DemoArgs),
}

#[derive(Args)]
pub struct SynthesizeArgs {
    /// Scenario JSON, or bare dynamics {"A": [[..]], "B": [[..]]} with
    /// optional "graph" and "gamma" for coupling gains
    pub input: std::path::PathBuf,
    /// Use the shifted design inequality with this epsilon (> 1). Defaults
    /// to 2 when the scenario declares non-matching disturbances
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Scale the minimal admissible coupling gains (1.0 = theorem bound)
    #[arg(long, default_value_t = 1.0)]
    pub coupling_multiplier: f64,
    /// Leader input bound for leader-follower coupling on bare dynamics
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario JSON
    pub scenario: std::path::PathBuf,
    /// Output directory (created if absent)
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the integration step
    #[arg(long)]
    pub h: Option<f64>,
    /// Synthesize gains first (design inequality chosen by the scenario's
    /// non_matching field)
    #[arg(long)]
    pub auto_synthesize: bool,
    /// Epsilon for --auto-synthesize when non-matching disturbances are
    /// declared (> 1)
    #[arg(long, default_value_t = 2.0)]
    pub epsilon: f64,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Scenario JSON the trajectory was produced from
    pub scenario: std::path::PathBuf,
    /// Trajectory CSV to check
    pub trajectory: std::path::PathBuf,
    /// Which residual set to verify (D1..D9)
    #[arg(long)]
    pub bound: String,
}

#[derive(Args)]
pub struct DemoArgs {
    /// Also write scenarios, trajectories, and reports under this directory
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

/// Synthesis failures mean the design problem itself is unsolvable; map
/// them to the infeasibility code, everything else to input error.
pub(crate) fn synthesis_exit(e: &Error) -> i32 {
    match e {
        Error::NotStabilizable
        | Error::NotControllable
        | Error::FeasibilityCheckFailed { .. }
        | Error::InfeasibleP { .. }
        | Error::SingularP { .. }
        | Error::NumericalFailure(_)
        | Error::DisconnectedGraph => 2,
        _ => 1,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // Usage problems are input errors under the exit-code contract.
            eprint!("{e}");
            std::process::exit(1);
        }
        Err(e) => e.exit(), // --help / --version
    };
    let code = match cli.cmd {
        Cmd::Synthesize(a) => cmds::synthesize(&a),
        Cmd::Simulate(a) => cmds::simulate(&a),
        Cmd::Verify(a) => cmds::verify(&a),
        Cmd::Demo(a) => cmds::demo(&a),
    };
    std::process::exit(code);
}
