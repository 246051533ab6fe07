//! Browser bindings: build the stock scenario families, synthesize gains,
//! run the closed loop, and check residual-set claims, entirely client-side.
//! Every entry point returns a JSON string for the page to parse; failures
//! surface as thrown JS errors carrying the library's error message.

use consensus::error::{Error, Result};
use consensus::graph::Graph;
use consensus::metrics::{
    bound_metric_series, residual_bound, verify_bound, BoundId, BoundInputs, ResidualReport,
    SETTLE_FRACTION,
};
use consensus::protocols::ProtocolKind;
use consensus::scenario::{
    build_chua_scenario, build_mass_spring_scenario, design_gains, matrix_to_rows, ChuaParams,
    GainsJson, MassSpringParams, ResolvedScenario, Scenario,
};
use consensus::simulation::{simulate, Trajectory};
use consensus::synthesis::verify_lmi;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper limit on points handed to the plotting canvas; longer series are
/// strided down with the final sample kept.
const MAX_PLOT_POINTS: usize = 1500;

fn parse_kind(kind: &str) -> Result<ProtocolKind> {
    serde_json::from_value(serde_json::Value::String(kind.to_string()))
        .map_err(|_| Error::InvalidInput(format!("unknown protocol kind '{kind}'")))
}

/// The two built-in families share the demo topology: a 6-ring, with
/// followers 0 and 3 pinned to the leader in the chua case.
fn build_scenario(
    family: &str,
    kind: &str,
    seed: u32,
    t_final: f64,
    disturbance: bool,
) -> Result<Scenario> {
    if !(t_final > 0.0 && t_final <= 120.0) {
        return Err(Error::InvalidInput("t_final must lie in (0, 120]".into()));
    }
    let kind = parse_kind(kind)?;
    let mut sc = match family {
        "mass-spring" => {
            let params = MassSpringParams {
                kind,
                seed: seed as u64,
                t_final,
                disturbance_upsilon: disturbance.then_some(0.5),
                ..MassSpringParams::default()
            };
            build_mass_spring_scenario(&Graph::ring(6), &params)?
        }
        "chua" => {
            if disturbance {
                return Err(Error::InvalidInput(
                    "the chua family declares no non-matching disturbance".into(),
                ));
            }
            let params = ChuaParams { kind, seed: seed as u64, t_final, ..ChuaParams::default() };
            let g = Graph::with_leader(6, (0..6).map(|i| (i, (i + 1) % 6)).collect(), vec![0, 3]);
            build_chua_scenario(&g, &params)?
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown family '{other}' (expected mass-spring or chua)"
            )))
        }
    };
    let gains = design_gains(&sc, None, 1.0)?;
    sc.gains = Some(GainsJson::from_gain_set(&gains));
    Ok(sc)
}

fn run(sc: &Scenario) -> Result<(ResolvedScenario, Trajectory)> {
    let rs = sc.resolve()?;
    let traj = simulate(&rs)?;
    Ok((rs, traj))
}

fn stride_for(len: usize) -> usize {
    len.div_ceil(MAX_PLOT_POINTS).max(1)
}

fn decimate(xs: &[f64], stride: usize) -> Vec<f64> {
    let mut out: Vec<f64> = xs.iter().copied().step_by(stride).collect();
    if let Some(last) = xs.last() {
        if (xs.len() - 1) % stride != 0 {
            out.push(*last);
        }
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Io(e.to_string()))
}

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct SynthesisView {
    family: String,
    kind: String,
    n_agents: usize,
    p: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    alpha: Option<f64>,
    epsilon: Option<f64>,
    coupling: consensus::synthesis::Coupling,
    margin: f64,
    /// Every residual bound whose constants the scenario defines, by id.
    bounds: Vec<(String, f64)>,
}

/// Design gains for a built-in family and list the residual-set levels its
/// constants support.
#[wasm_bindgen]
pub fn synthesize_op(
    family: &str,
    kind: &str,
    seed: u32,
    disturbance: bool,
) -> std::result::Result<String, JsError> {
    synthesize_json(family, kind, seed, disturbance).map_err(js_err)
}

fn synthesize_json(family: &str, kind: &str, seed: u32, disturbance: bool) -> Result<String> {
    let sc = build_scenario(family, kind, seed, 20.0, disturbance)?;
    let rs = sc.resolve()?;
    let dyn_ = sc.dynamics.to_dynamics()?;
    let margin = verify_lmi(&dyn_, &rs.gains.p, rs.gains.epsilon).margin;

    let inp = BoundInputs::from_scenario(&rs)?;
    let bounds: Vec<(String, f64)> = BoundId::ALL
        .iter()
        .filter_map(|id| residual_bound(*id, &inp).ok().map(|v| (id.to_string(), v)))
        .collect();

    to_json(&SynthesisView {
        family: family.to_string(),
        kind: kind.to_string(),
        n_agents: rs.n_agents,
        p: matrix_to_rows(&rs.gains.p),
        k: matrix_to_rows(&rs.gains.k),
        gamma: matrix_to_rows(&rs.gains.gamma),
        alpha: rs.gains.alpha,
        epsilon: rs.gains.epsilon,
        coupling: rs.gains.coupling,
        margin,
        bounds,
    })
}

#[derive(Serialize)]
struct DivergenceView {
    t: f64,
    norm: f64,
}

#[derive(Serialize)]
struct SimulationView {
    times: Vec<f64>,
    error_norm: Vec<f64>,
    control_norm: Vec<f64>,
    /// Largest adaptive coupling gain across agents per sample; empty for
    /// static kinds.
    d_bar_max: Vec<f64>,
    e_bar_max: Vec<f64>,
    samples_total: usize,
    final_error_norm: f64,
    monitor_total: usize,
    divergence: Option<DivergenceView>,
}

/// Run the closed loop and return decimated series for plotting.
#[wasm_bindgen]
pub fn simulate_op(
    family: &str,
    kind: &str,
    seed: u32,
    t_final: f64,
    disturbance: bool,
) -> std::result::Result<String, JsError> {
    simulate_json(family, kind, seed, t_final, disturbance).map_err(js_err)
}

fn simulate_json(
    family: &str,
    kind: &str,
    seed: u32,
    t_final: f64,
    disturbance: bool,
) -> Result<String> {
    let sc = build_scenario(family, kind, seed, t_final, disturbance)?;
    let (_, traj) = run(&sc)?;
    let stride = stride_for(traj.times.len());

    let control_norm: Vec<f64> = traj.controls.iter().map(|u| u.norm()).collect();
    let (d_bar_max, e_bar_max) = match &traj.adaptive {
        None => (Vec::new(), Vec::new()),
        Some(states) => (
            states
                .iter()
                .map(|s| s.d_bar.iter().cloned().fold(0.0f64, f64::max))
                .collect(),
            states
                .iter()
                .map(|s| s.e_bar.iter().cloned().fold(0.0f64, f64::max))
                .collect(),
        ),
    };

    to_json(&SimulationView {
        times: decimate(&traj.times, stride),
        error_norm: decimate(&traj.error_norms, stride),
        control_norm: decimate(&control_norm, stride),
        d_bar_max: decimate(&d_bar_max, stride),
        e_bar_max: decimate(&e_bar_max, stride),
        samples_total: traj.times.len(),
        final_error_norm: traj.error_norms.last().copied().unwrap_or(f64::NAN),
        monitor_total: traj.monitor_total,
        divergence: traj.divergence.map(|d| DivergenceView { t: d.t, norm: d.norm }),
    })
}

#[derive(Serialize)]
struct VerifyView {
    report: ResidualReport,
    metric_label: &'static str,
    times: Vec<f64>,
    metric: Vec<f64>,
    /// Start of the settle window the membership verdict ran on.
    settle_start: f64,
    monitor_total: usize,
}

/// Run the closed loop, check one residual-set claim, and return the metric
/// series the verdict was computed on.
#[wasm_bindgen]
pub fn verify_op(
    family: &str,
    kind: &str,
    seed: u32,
    t_final: f64,
    disturbance: bool,
    bound: &str,
) -> std::result::Result<String, JsError> {
    verify_json(family, kind, seed, t_final, disturbance, bound).map_err(js_err)
}

fn verify_json(
    family: &str,
    kind: &str,
    seed: u32,
    t_final: f64,
    disturbance: bool,
    bound: &str,
) -> Result<String> {
    let id: BoundId = bound.parse()?;
    let sc = build_scenario(family, kind, seed, t_final, disturbance)?;
    let (rs, traj) = run(&sc)?;
    if let Some(d) = &traj.divergence {
        return Err(Error::DivergenceDetected { t: d.t, norm: d.norm });
    }
    let report = verify_bound(&rs, &traj, id)?;
    let metric = bound_metric_series(&rs, &traj, id)?;
    let (_, monitor_total) = consensus::simulation::scan_monitors(&rs, &traj);
    let stride = stride_for(traj.times.len());
    // Mirror the verdict's window arithmetic.
    let start = (((1.0 - SETTLE_FRACTION) * traj.times.len() as f64).floor() as usize)
        .min(traj.times.len() - 1);
    let settle_start = traj.times[start];

    to_json(&VerifyView {
        metric_label: if id.is_v_level() { "V (Lyapunov level)" } else { "squared consensus error" },
        times: decimate(&traj.times, stride),
        metric: decimate(&metric, stride),
        settle_start,
        monitor_total,
        report,
    })
}
