//! Helpers shared by the CLI test targets: spawning the binary and building
//! small scenarios.
#![allow(dead_code)] // each test target uses its own subset

use std::path::Path;
use std::process::{Command, Output};

use consensus::graph::{self, Graph};
use consensus::protocols::{ProtocolConfig, ProtocolKind};
use consensus::scenario::{
    build_mass_spring_scenario, DynamicsJson, GainsJson, MassSpringParams, Scenario, SimParams,
    UncertaintySpec,
};
use consensus::synthesis::{synthesize, Coupling, CouplingMode, GainSet};
use nalgebra::DMatrix;

/// Run the `consensus` binary with the given arguments.
pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consensus"))
        .args(args)
        .output()
        .expect("binary spawns")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal termination")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Two single integrators on one edge with c = 1 and unit gains: the state
/// difference obeys exactly δ' = −2δ, so every downstream number is
/// predictable.
pub fn single_integrator_pair() -> Scenario {
    let gains = GainSet {
        p: DMatrix::identity(1, 1),
        k: DMatrix::from_row_slice(1, 1, &[-1.0]),
        gamma: DMatrix::identity(1, 1),
        alpha: Some(2.0),
        coupling: Coupling::Leaderless { c: 1.0 },
        epsilon: None,
    };
    Scenario {
        graph: Graph::new(2, vec![(0, 1)]),
        dynamics: DynamicsJson { a: vec![vec![0.0]], b: vec![vec![1.0]] },
        uncertainty: UncertaintySpec::None,
        non_matching: None,
        leader_input: None,
        protocol: ProtocolConfig::static_kind(ProtocolKind::StaticLeaderless, 0.5),
        gains: Some(GainsJson::from_gain_set(&gains)),
        sim: SimParams { t_final: 1.0, h: 1e-3, seed: 0 },
        x0: Some(vec![1.0, -1.0]),
        adaptive0: None,
    }
}

/// Mass-spring scenario on a 6-ring with gains embedded, so the file is
/// self-contained for simulate/verify round trips.
pub fn mass_spring_with_gains(params: &MassSpringParams, coupling_multiplier: f64) -> Scenario {
    let g = Graph::ring(6);
    let mut sc = build_mass_spring_scenario(&g, params).expect("builder accepts params");
    let dyn_ = sc.dynamics.to_dynamics().expect("dynamics parse");
    let spec = graph::spectrum(&graph::laplacian(&g)).expect("ring spectrum");
    let eps = sc.non_matching.as_ref().map(|_| 2.0);
    let gains = synthesize(&dyn_, &spec, CouplingMode::Leaderless, None, eps, coupling_multiplier)
        .expect("mass-spring design is feasible");
    sc.gains = Some(GainsJson::from_gain_set(&gains));
    sc
}

pub fn write_scenario(path: &Path, sc: &Scenario) {
    std::fs::write(path, sc.to_json() + "\n").expect("scenario written");
}
