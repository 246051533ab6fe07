//! Control laws: boundary-layer switch functions and the six protocol
//! variants (static/adaptive x leaderless/leader-follower, plus the
//! discontinuous and simplified-adaptive forms).
//!
//! Every law is a pure function of the agent's relative-state aggregate
//! `Δᵢ = Σⱼ aᵢⱼ(xᵢ − xⱼ)` (leader term included for leader-follower modes),
//! the agent's own state, and the gain package. Adaptive gains are owned and
//! integrated by the simulation loop; the laws only report their derivatives,
//! so evaluating different agents in parallel within a step is safe.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::{Coupling, GainSet};

/// Adaptive coupling gains, one pair per agent.
///
/// Holds `d̄ᵢ, ēᵢ` for the leaderless law and `d̂ᵢ, êᵢ` for the
/// leader-follower law; both stay nonnegative under their update laws when
/// initialized nonnegative.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct AdaptiveState {
    pub d_bar: Vec<f64>,
    pub e_bar: Vec<f64>,
}

impl AdaptiveState {
    pub fn zeros(n_agents: usize) -> Self {
        Self { d_bar: vec![0.0; n_agents], e_bar: vec![0.0; n_agents] }
    }
}

/// Which control law closes the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    StaticLeaderless,
    DiscontinuousLeaderless,
    AdaptiveLeaderless,
    SimplifiedAdaptive,
    StaticLeaderFollower,
    AdaptiveLeaderFollower,
}

impl ProtocolKind {
    /// Leader-follower laws track a distinguished leader node.
    pub fn is_leader_follower(self) -> bool {
        matches!(
            self,
            ProtocolKind::StaticLeaderFollower | ProtocolKind::AdaptiveLeaderFollower
        )
    }

    /// Adaptive laws integrate per-agent gains alongside the states.
    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            ProtocolKind::AdaptiveLeaderless
                | ProtocolKind::SimplifiedAdaptive
                | ProtocolKind::AdaptiveLeaderFollower
        )
    }
}

/// Protocol parameters shared by all agents plus the per-agent adaptation
/// constants.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    /// Boundary-layer width κ > 0; smaller κ means a thinner continuous
    /// region around the switching surface and a smaller residual set.
    pub kappa: f64,
    /// Adaptation speeds τᵢ for the d-gains.
    #[serde(default)]
    pub tau: Vec<f64>,
    /// Adaptation speeds εᵢ for the e-gains.
    #[serde(default)]
    pub eps_rates: Vec<f64>,
    /// Leakage constants φᵢ (σ-modification on the d-gains).
    #[serde(default)]
    pub phi: Vec<f64>,
    /// Leakage constants ψᵢ (σ-modification on the e-gains).
    #[serde(default)]
    pub psi: Vec<f64>,
    /// Leader input bound γ; used by the leader-follower laws only.
    #[serde(default)]
    pub gamma: f64,
}

impl ProtocolConfig {
    /// Static law with no adaptation constants.
    pub fn static_kind(kind: ProtocolKind, kappa: f64) -> Self {
        Self { kind, kappa, tau: vec![], eps_rates: vec![], phi: vec![], psi: vec![], gamma: 0.0 }
    }

    /// Check the constants against the law kind and agent count.
    pub fn validate(&self, n_agents: usize) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidInput("kappa must be positive".into()));
        }
        if self.kind.is_adaptive() {
            for (name, v) in [("tau", &self.tau), ("phi", &self.phi)] {
                if v.len() != n_agents {
                    return Err(Error::InvalidInput(format!(
                        "{name} must have one entry per agent"
                    )));
                }
                if v.iter().any(|&x| x <= 0.0) {
                    return Err(Error::InvalidInput(format!("{name} entries must be positive")));
                }
            }
            if self.kind != ProtocolKind::SimplifiedAdaptive {
                for (name, v) in [("eps_rates", &self.eps_rates), ("psi", &self.psi)] {
                    if v.len() != n_agents {
                        return Err(Error::InvalidInput(format!(
                            "{name} must have one entry per agent"
                        )));
                    }
                    if v.iter().any(|&x| x <= 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "{name} entries must be positive"
                        )));
                    }
                }
            }
        }
        if self.kind.is_leader_follower() && self.gamma < 0.0 {
            return Err(Error::InvalidInput("gamma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Declared bound on a matched uncertainty, evaluated as
/// `ρ(x) = d + e·‖x‖` (constant bounds have e = 0).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum BoundSpec {
    /// `‖f(x,t)‖ ≤ d + e‖x‖`.
    Linear { d: f64, e: f64 },
    /// `‖f(x,t)‖ ≤ d`.
    Constant { d: f64 },
}

impl BoundSpec {
    /// The bound value at a given state norm.
    pub fn rho(&self, x_norm: f64) -> f64 {
        match *self {
            BoundSpec::Linear { d, e } => d + e * x_norm,
            BoundSpec::Constant { d } => d,
        }
    }
}

/// Boundary-layer direction: `w/‖w‖` outside the layer `ρ‖w‖ ≤ κ`, the
/// linear ramp `w/κ` inside. The branches agree on the switching surface
/// exactly when ρ = 1; for other ρ the layer edge carries a bounded jump of
/// `|ρ−1|/ρ` that the stability analysis absorbs into the Nκ residual term.
/// The adaptive `r` variant removes the jump via its squared numerator.
pub fn g_boundary(w: &DVector<f64>, rho: f64, kappa: f64) -> DVector<f64> {
    let norm = w.norm();
    if rho * norm > kappa {
        w / norm
    } else {
        w / kappa
    }
}

/// Discontinuous unit-vector direction `w/‖w‖`, zero at the origin.
pub fn g_hat(w: &DVector<f64>) -> DVector<f64> {
    let norm = w.norm();
    if norm > 0.0 {
        w / norm
    } else {
        w.clone()
    }
}

/// Adaptive robust term `r(w)`: with modulation `m = d̄ + ē‖x‖`, returns
/// `w·m/‖w‖` when `m‖w‖ > κ` and `w·m²/κ` otherwise. The squared numerator
/// makes the two branches agree on the switching surface.
pub fn r_boundary(w: &DVector<f64>, d_bar: f64, e_bar: f64, x_norm: f64, kappa: f64) -> DVector<f64> {
    let m = d_bar + e_bar * x_norm;
    let norm = w.norm();
    if m * norm > kappa {
        w * (m / norm)
    } else {
        w * (m * m / kappa)
    }
}

/// Leader-follower boundary direction: branch test uses `(γ + ρ)‖w‖` against
/// κ because the robust term must dominate the leader's input bound γ too.
pub fn g_tilde(w: &DVector<f64>, rho: f64, gamma: f64, kappa: f64) -> DVector<f64> {
    let norm = w.norm();
    if (gamma + rho) * norm > kappa {
        w / norm
    } else {
        w / kappa
    }
}

/// Simplified robust term `r̄(w)` for constant bounds: `w·d̄/‖w‖` when
/// `d̄‖w‖ > κ`, else `w·d̄/κ` (numerator not squared in this variant).
pub fn r_bar(w: &DVector<f64>, d_bar: f64, kappa: f64) -> DVector<f64> {
    let norm = w.norm();
    if d_bar * norm > kappa {
        w * (d_bar / norm)
    } else {
        w * (d_bar / kappa)
    }
}

fn leaderless_c(gains: &GainSet) -> Result<f64> {
    match gains.coupling {
        Coupling::Leaderless { c } => Ok(c),
        Coupling::LeaderFollower { .. } => Err(Error::InvalidInput(
            "leaderless law needs a leaderless coupling gain".into(),
        )),
    }
}

fn leader_follower_c(gains: &GainSet) -> Result<(f64, f64)> {
    match gains.coupling {
        Coupling::LeaderFollower { c1, c2 } => Ok((c1, c2)),
        Coupling::Leaderless { .. } => Err(Error::InvalidInput(
            "leader-follower law needs (c1, c2) coupling gains".into(),
        )),
    }
}

/// Static leaderless law `uᵢ = c·KΔᵢ + ρᵢ·g(KΔᵢ)` with the boundary-layer g.
pub fn static_leaderless_control(
    delta_i: &DVector<f64>,
    rho_i: f64,
    gains: &GainSet,
    kappa: f64,
) -> Result<DVector<f64>> {
    let c = leaderless_c(gains)?;
    let w = &gains.k * delta_i;
    Ok(&w * c + g_boundary(&w, rho_i, kappa) * rho_i)
}

/// Discontinuous leaderless law `uᵢ = c·KΔᵢ + ρᵢ·ĝ(KΔᵢ)`; exact consensus,
/// chatters in finite-precision simulation.
pub fn discontinuous_leaderless_control(
    delta_i: &DVector<f64>,
    rho_i: f64,
    gains: &GainSet,
) -> Result<DVector<f64>> {
    let c = leaderless_c(gains)?;
    let w = &gains.k * delta_i;
    Ok(&w * c + g_hat(&w) * rho_i)
}

/// Adaptive leaderless law: control plus the gain derivatives
/// `ḋ̄ᵢ = τᵢ(−φᵢd̄ᵢ + ΔᵢᵀΓΔᵢ + ‖KΔᵢ‖)` and
/// `ė̄ᵢ = εᵢ(−ψᵢēᵢ + ‖KΔᵢ‖·‖xᵢ‖)`.
pub fn adaptive_leaderless_control(
    i: usize,
    delta_i: &DVector<f64>,
    state: &AdaptiveState,
    x_i: &DVector<f64>,
    gains: &GainSet,
    cfg: &ProtocolConfig,
) -> (DVector<f64>, f64, f64) {
    adaptive_law(i, delta_i, state.d_bar[i], state.e_bar[i], x_i, gains, cfg)
}

/// Adaptive leader-follower law: identical functional form with the
/// leader-inclusive Δᵢ and gains (d̂ᵢ, êᵢ).
pub fn adaptive_lf_control(
    i: usize,
    delta_i: &DVector<f64>,
    state: &AdaptiveState,
    x_i: &DVector<f64>,
    gains: &GainSet,
    cfg: &ProtocolConfig,
) -> (DVector<f64>, f64, f64) {
    adaptive_law(i, delta_i, state.d_bar[i], state.e_bar[i], x_i, gains, cfg)
}

fn adaptive_law(
    i: usize,
    delta_i: &DVector<f64>,
    d_i: f64,
    e_i: f64,
    x_i: &DVector<f64>,
    gains: &GainSet,
    cfg: &ProtocolConfig,
) -> (DVector<f64>, f64, f64) {
    let w = &gains.k * delta_i;
    let x_norm = x_i.norm();
    let u = &w * d_i + r_boundary(&w, d_i, e_i, x_norm, cfg.kappa);
    let quad = (delta_i.transpose() * &gains.gamma * delta_i)[(0, 0)];
    let w_norm = w.norm();
    let d_dot = cfg.tau[i] * (-cfg.phi[i] * d_i + quad + w_norm);
    let e_dot = cfg.eps_rates[i] * (-cfg.psi[i] * e_i + w_norm * x_norm);
    (u, d_dot, e_dot)
}

/// Static leader-follower law
/// `uᵢ = c₁KΔᵢ + (c₂ + ρᵢ)·g̃(KΔᵢ)` with Δᵢ including the leader term.
pub fn static_lf_control(
    delta_i: &DVector<f64>,
    rho_i: f64,
    gains: &GainSet,
    gamma: f64,
    kappa: f64,
) -> Result<DVector<f64>> {
    let (c1, c2) = leader_follower_c(gains)?;
    let w = &gains.k * delta_i;
    Ok(&w * c1 + g_tilde(&w, rho_i, gamma, kappa) * (c2 + rho_i))
}

/// Simplified adaptive law for constant bounds:
/// `uᵢ = d̄ᵢKΔᵢ + r̄(KΔᵢ)` with `ḋ̄ᵢ = τᵢ(−φᵢd̄ᵢ + ΔᵢᵀΓΔᵢ + ‖KΔᵢ‖)`.
pub fn simplified_adaptive_control(
    i: usize,
    delta_i: &DVector<f64>,
    d_bar_i: f64,
    gains: &GainSet,
    cfg: &ProtocolConfig,
) -> (DVector<f64>, f64) {
    let w = &gains.k * delta_i;
    let u = &w * d_bar_i + r_bar(&w, d_bar_i, cfg.kappa);
    let quad = (delta_i.transpose() * &gains.gamma * delta_i)[(0, 0)];
    let d_dot = cfg.tau[i] * (-cfg.phi[i] * d_bar_i + quad + w.norm());
    (u, d_dot)
}
