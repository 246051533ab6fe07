//! Subcommand implementations. Each returns the process exit code; errors
//! are printed to stderr here so `main` stays a thin dispatcher.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use consensus::error::{Error, Result};
use consensus::graph::{self, Graph};
use consensus::io::{read_trajectory_csv, write_trajectory_csv, TrajectoryLayout};
use consensus::metrics::{verify_bound, BoundId, ResidualReport};
use consensus::protocols::ProtocolKind;
use consensus::scenario::{
    build_chua_scenario, build_mass_spring_scenario, design_gains, matrix_to_rows, ChuaParams,
    DynamicsJson, GainsJson, MassSpringParams, Scenario,
};
use consensus::simulation::{scan_monitors, simulate as integrate, MonitorEvent, Trajectory};
use consensus::scenario::ResolvedScenario;
use consensus::synthesis::{
    convergence_rate_alpha, coupling_gains, feedback_gain, mass_spring_dynamics,
    solve_consensus_lmi, solve_consensus_lmi_eps, synthesize as design_raw, verify_lmi,
    Coupling, CouplingMode, GainSet,
};

use crate::manifest::RunManifest;
use crate::{synthesis_exit, DemoArgs, SimulateArgs, SynthesizeArgs, VerifyArgs};

/// Bare synthesis input: dynamics alone, optionally with a graph (and a
/// leader bound) for coupling gains.
#[derive(Deserialize)]
struct BareInput {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(default)]
    graph: Option<Graph>,
    #[serde(default)]
    gamma: Option<f64>,
}

#[derive(Serialize)]
struct SynthesisOutput {
    p: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling: Option<Coupling>,
    /// λ_max of the design-inequality left side for the emitted P; negative
    /// certifies feasibility.
    margin: f64,
}

impl SynthesisOutput {
    fn from_gains(g: &GainSet, margin: f64) -> Self {
        Self {
            p: matrix_to_rows(&g.p),
            k: matrix_to_rows(&g.k),
            gamma: matrix_to_rows(&g.gamma),
            alpha: g.alpha,
            epsilon: g.epsilon,
            coupling: Some(g.coupling),
            margin,
        }
    }
}

pub fn synthesize(args: &SynthesizeArgs) -> i32 {
    match synthesize_inner(args) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("output serializes"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            synthesis_exit(&e)
        }
    }
}

fn synthesize_inner(args: &SynthesizeArgs) -> Result<SynthesisOutput> {
    let text = fs::read_to_string(&args.input)?;
    if let Ok(sc) = Scenario::from_json(&text) {
        let gains = design_gains(&sc, args.epsilon, args.coupling_multiplier)?;
        let dyn_ = sc.dynamics.to_dynamics()?;
        let margin = verify_lmi(&dyn_, &gains.p, gains.epsilon).margin;
        return Ok(SynthesisOutput::from_gains(&gains, margin));
    }
    let bare: BareInput = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("input is neither a scenario nor bare dynamics: {e}")))?;
    let dyn_ = DynamicsJson { a: bare.a, b: bare.b }.to_dynamics()?;
    let p = match args.epsilon {
        None => solve_consensus_lmi(&dyn_)?,
        Some(e) => solve_consensus_lmi_eps(&dyn_, e)?,
    };
    let (k, gam) = feedback_gain(&p, &dyn_.b)?;
    let alpha = match args.epsilon {
        None => Some(convergence_rate_alpha(&dyn_, &p)?),
        Some(_) => None,
    };
    let coupling = match &bare.graph {
        None => None,
        Some(g) => {
            g.validate()?;
            let has_leader = g.leader_links.as_ref().is_some_and(|l| !l.is_empty());
            let (mode, lm) = if has_leader {
                (CouplingMode::LeaderFollower, graph::leader_follower_partition(g)?.0)
            } else {
                (CouplingMode::Leaderless, graph::laplacian(g))
            };
            let spec = graph::spectrum(&lm)?;
            let raw = coupling_gains(&spec, mode, bare.gamma.or(args.gamma))?;
            Some(match raw {
                Coupling::Leaderless { c } => {
                    Coupling::Leaderless { c: c * args.coupling_multiplier }
                }
                Coupling::LeaderFollower { c1, c2 } => {
                    Coupling::LeaderFollower { c1: c1 * args.coupling_multiplier, c2 }
                }
            })
        }
    };
    let margin = verify_lmi(&dyn_, &p, args.epsilon).margin;
    Ok(SynthesisOutput {
        p: matrix_to_rows(&p),
        k: matrix_to_rows(&k),
        gamma: matrix_to_rows(&gam),
        alpha,
        epsilon: args.epsilon,
        coupling,
        margin,
    })
}

pub fn simulate(args: &SimulateArgs) -> i32 {
    match simulate_inner(args) {
        Ok(code) => code,
        Err((e, code)) => {
            eprintln!("error: {e}");
            code
        }
    }
}

fn simulate_inner(args: &SimulateArgs) -> std::result::Result<i32, (Error, i32)> {
    let input = |e: Error| (e, 1);
    let text = fs::read_to_string(&args.scenario).map_err(|e| input(e.into()))?;
    let mut sc = Scenario::from_json(&text).map_err(input)?;
    if let Some(s) = args.seed {
        sc.sim.seed = s;
    }
    if let Some(h) = args.h {
        sc.sim.h = h;
    }
    if args.auto_synthesize {
        let eps = sc.non_matching.is_some().then_some(args.epsilon);
        let gains =
            design_gains(&sc, eps, 1.0).map_err(|e| {
                let code = synthesis_exit(&e);
                (e, code)
            })?;
        sc.gains = Some(GainsJson::from_gain_set(&gains));
    }
    let rs = sc.resolve().map_err(input)?;

    fs::create_dir_all(&args.out).map_err(|e| input(e.into()))?;
    RunManifest::new(&args.scenario, &args.out, rs.sim.seed)
        .write(&args.out.join("manifest.json"))
        .map_err(input)?;
    let resolved = freeze_resolution(&sc, &rs);
    fs::write(args.out.join("scenario.resolved.json"), resolved.to_json() + "\n")
        .map_err(|e| input(e.into()))?;

    let traj = integrate(&rs).map_err(input)?;
    let csv_path = args.out.join("trajectory.csv");
    write_trajectory_csv(&csv_path, &traj, &TrajectoryLayout::of(&rs)).map_err(input)?;

    println!("samples: {}", traj.times.len());
    println!("final error norm: {:.6e}", traj.error_norms.last().copied().unwrap_or(f64::NAN));
    if traj.monitor_total > 0 {
        eprintln!(
            "warning: {} assumption monitor event(s); first: {}",
            traj.monitor_total,
            traj.monitor_events
                .first()
                .map(|ev| format!("{:?} at t = {:.6}", ev.kind, ev.t))
                .unwrap_or_default()
        );
    }
    println!("wrote {}", csv_path.display());
    if let Some(d) = &traj.divergence {
        eprintln!(
            "error: divergence at t = {:.6} (state norm {:.3e}); partial trajectory retained",
            d.t, d.norm
        );
        return Ok(3);
    }
    Ok(0)
}

/// The scenario with every resolution choice made explicit, so re-running it
/// is independent of seed-stream details.
fn freeze_resolution(sc: &Scenario, rs: &ResolvedScenario) -> Scenario {
    let mut out = sc.clone();
    out.gains = Some(GainsJson::from_gain_set(&rs.gains));
    out.x0 = Some(rs.x0.iter().copied().collect());
    if rs.protocol.kind.is_adaptive() {
        out.adaptive0 = Some(rs.adaptive0.clone());
    }
    out
}

#[derive(Serialize)]
struct MonitorSummary {
    /// First recorded events, capped by the simulator's event limit.
    events: Vec<MonitorEvent>,
    total: usize,
}

#[derive(Serialize)]
struct VerifyReport {
    #[serde(flatten)]
    verdict: ResidualReport,
    assumption_monitors: MonitorSummary,
}

fn full_report(rs: &ResolvedScenario, traj: &Trajectory, verdict: ResidualReport) -> VerifyReport {
    let (events, total) = scan_monitors(rs, traj);
    VerifyReport { verdict, assumption_monitors: MonitorSummary { events, total } }
}

pub fn verify(args: &VerifyArgs) -> i32 {
    match verify_inner(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn verify_inner(args: &VerifyArgs) -> Result<i32> {
    let sc = Scenario::from_json(&fs::read_to_string(&args.scenario)?)?;
    let rs = sc.resolve()?;
    let id: BoundId = args.bound.parse()?;
    let lay = TrajectoryLayout::of(&rs);
    let traj = read_trajectory_csv(&args.trajectory, &lay)?;
    let verdict = verify_bound(&rs, &traj, id)?;
    let passed = verdict.passed;
    let report = full_report(&rs, &traj, verdict);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(if passed { 0 } else { 4 })
}

struct DemoRow {
    example: &'static str,
    kind: ProtocolKind,
    bound: BoundId,
    report: ResidualReport,
    monitor_total: usize,
}

pub fn demo(args: &DemoArgs) -> i32 {
    match demo_inner(args) {
        Ok(all_pass) => {
            if all_pass {
                0
            } else {
                4
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::DivergenceDetected { .. } => 3,
                _ => synthesis_exit(&e),
            }
        }
    }
}

fn kind_name(kind: ProtocolKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{kind:?}"))
}

fn demo_inner(args: &DemoArgs) -> Result<bool> {
    let mut rows: Vec<DemoRow> = Vec::new();

    // Mass-spring network: six agents on a ring, static then adaptive.
    let g = Graph::ring(6);
    let spec = graph::spectrum(&graph::laplacian(&g))?;
    let gains =
        design_raw(&mass_spring_dynamics(2.5), &spec, CouplingMode::Leaderless, None, None, 1.0)?;
    println!(
        "mass-spring: K = {:?}, alpha = {:.4}, c = {:?}",
        gains.k.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
        gains.alpha.unwrap_or(f64::NAN),
        gains.coupling,
    );
    for (kind, bound) in [
        (ProtocolKind::StaticLeaderless, BoundId::D1),
        (ProtocolKind::AdaptiveLeaderless, BoundId::D2),
    ] {
        let mut params = MassSpringParams::default();
        params.kind = kind;
        if kind.is_adaptive() {
            params.t_final = 30.0;
        }
        let mut sc = build_mass_spring_scenario(&g, &params)?;
        sc.gains = Some(GainsJson::from_gain_set(&gains));
        rows.push(run_example("mass-spring", sc, bound, args.out.as_deref())?);
    }

    // Chua network: six chaotic circuits tracking a leader circuit, with
    // followers 0 and 3 pinned.
    let gc = Graph::with_leader(6, (0..6).map(|i| (i, (i + 1) % 6)).collect(), vec![0, 3]);
    let params = ChuaParams::default();
    let mut sc = build_chua_scenario(&gc, &params)?;
    let dyn_ = sc.dynamics.to_dynamics()?;
    let (l1, _) = graph::leader_follower_partition(&gc)?;
    let spec1 = graph::spectrum(&l1)?;
    let cgains = design_raw(
        &dyn_,
        &spec1,
        CouplingMode::LeaderFollower,
        Some(sc.protocol.gamma),
        None,
        1.0,
    )?;
    println!(
        "chua: K = {:?}, alpha = {:.6}, c = {:?}",
        cgains.k.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
        cgains.alpha.unwrap_or(f64::NAN),
        cgains.coupling,
    );
    sc.gains = Some(GainsJson::from_gain_set(&cgains));
    rows.push(run_example("chua", sc, BoundId::D5, args.out.as_deref())?);

    println!();
    println!(
        "{:<13} {:<25} {:<6} {:>13} {:>14} {:>9} {:>9}  {}",
        "example", "protocol", "bound", "bound value", "max violation", "entry t", "monitors", "verdict"
    );
    let mut all_pass = true;
    for row in &rows {
        all_pass &= row.report.passed;
        println!(
            "{:<13} {:<25} {:<6} {:>13.6e} {:>+14.3e} {:>9} {:>9}  {}",
            row.example,
            kind_name(row.kind),
            row.bound.to_string(),
            row.report.bound_value,
            row.report.max_violation,
            row.report
                .entry_time
                .map(|t| format!("{t:.3}"))
                .unwrap_or_else(|| "-".to_string()),
            row.monitor_total,
            if row.report.passed { "pass" } else { "FAIL" },
        );
    }
    Ok(all_pass)
}

fn run_example(
    example: &'static str,
    sc: Scenario,
    bound: BoundId,
    out: Option<&Path>,
) -> Result<DemoRow> {
    let rs = sc.resolve()?;
    let traj = integrate(&rs)?;
    if let Some(d) = &traj.divergence {
        return Err(Error::DivergenceDetected { t: d.t, norm: d.norm });
    }
    let verdict = verify_bound(&rs, &traj, bound)?;
    let report = full_report(&rs, &traj, verdict);
    if let Some(dir) = out {
        let sub = dir.join(format!("{example}-{}", kind_name(rs.protocol.kind)));
        fs::create_dir_all(&sub)?;
        fs::write(sub.join("scenario.json"), sc.to_json() + "\n")?;
        write_trajectory_csv(&sub.join("trajectory.csv"), &traj, &TrajectoryLayout::of(&rs))?;
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Io(format!("report serialization: {e}")))?;
        fs::write(sub.join("report.json"), text + "\n")?;
    }
    Ok(DemoRow {
        example,
        kind: rs.protocol.kind,
        bound,
        monitor_total: report.assumption_monitors.total,
        report: report.verdict,
    })
}
