//! Post-run analysis: consensus errors, Lyapunov functionals, the nine
//! residual-set thresholds, exponential-envelope checks, and pass/fail
//! verdicts for ultimate-boundedness claims.
//!
//! Thresholds are computed exactly from the declared constants. Where the
//! theory leaves a constant underdetermined (β, β̂ are only lower-bounded),
//! the implementation takes the exact maximum, making every reported bound
//! the tightest value the theorems certify.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph;
use crate::protocols::AdaptiveState;
use crate::scenario::ResolvedScenario;
use crate::simulation::Trajectory;
use crate::synthesis::invert_spd;

/// Relative tolerance absorbed into envelope and level-set verdicts.
pub const TOL_REL: f64 = 0.02;
/// Absolute floor for envelope comparisons near zero.
pub const TOL_ABS: f64 = 1e-9;
/// Fraction of the horizon (from the end) that must sit inside the set.
pub const SETTLE_FRACTION: f64 = 0.2;

/// Centered consensus error: per-agent deviation from the instantaneous
/// mean, stacked agent-major. Zero exactly when all agents agree.
pub fn consensus_error(x: &DVector<f64>, n_agents: usize) -> DVector<f64> {
    assert!(n_agents > 0 && x.len() % n_agents == 0, "state length mismatch");
    let n = x.len() / n_agents;
    let mut mean = DVector::zeros(n);
    for i in 0..n_agents {
        mean += x.rows(i * n, n);
    }
    mean /= n_agents as f64;
    let mut xi = DVector::zeros(x.len());
    for i in 0..n_agents {
        let d = x.rows(i * n, n) - &mean;
        xi.rows_mut(i * n, n).copy_from(&d);
    }
    xi
}

/// Leader-relative consensus error: `ζᵢ = xᵢ − x₀`, stacked agent-major.
pub fn lf_consensus_error(x: &DVector<f64>, x0: &DVector<f64>) -> DVector<f64> {
    let n = x0.len();
    assert!(n > 0 && x.len() % n == 0, "state length mismatch");
    let n_agents = x.len() / n;
    let mut zeta = DVector::zeros(x.len());
    for i in 0..n_agents {
        let d = x.rows(i * n, n) - x0;
        zeta.rows_mut(i * n, n).copy_from(&d);
    }
    zeta
}

/// Quadratic Lyapunov functional `V₁ = ½·errᵀ(L ⊗ P⁻¹)err`, evaluated
/// without forming the Kronecker product. `p_inv` is the inverse of the
/// design matrix (P or Q).
pub fn lyapunov_v1(err: &DVector<f64>, l: &DMatrix<f64>, p_inv: &DMatrix<f64>) -> f64 {
    let n_agents = l.nrows();
    let n = p_inv.nrows();
    assert_eq!(err.len(), n_agents * n, "error length mismatch");
    let mut acc = 0.0;
    for i in 0..n_agents {
        let pi = p_inv * err.rows(i * n, n);
        for j in 0..n_agents {
            let lij = l[(i, j)];
            if lij != 0.0 {
                acc += lij * err.rows(j * n, n).dot(&pi);
            }
        }
    }
    0.5 * acc
}

/// Adaptive Lyapunov functional: `V₁` plus the gain-estimation terms
/// `Σ (d̄ᵢ − β)²/(2τᵢ) + Σ (ēᵢ − eᵢ)²/(2εᵢ)`.
pub fn lyapunov_v2(
    err: &DVector<f64>,
    l: &DMatrix<f64>,
    p_inv: &DMatrix<f64>,
    adaptive: &AdaptiveState,
    beta: f64,
    e_true: &[f64],
    tau: &[f64],
    eps_rates: &[f64],
) -> f64 {
    let mut v = lyapunov_v1(err, l, p_inv);
    for (i, &d) in adaptive.d_bar.iter().enumerate() {
        let dt = d - beta;
        v += dt * dt / (2.0 * tau[i]);
    }
    for (i, &e) in adaptive.e_bar.iter().enumerate() {
        let et = e - e_true[i];
        v += et * et / (2.0 * eps_rates[i]);
    }
    v
}

/// Residual-set identifiers. D1–D3 are leaderless (static, adaptive level,
/// adaptive norm); D4–D6 the leader-follower analogs; D7–D9 the
/// non-matching-disturbance family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundId {
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
    D8,
    D9,
}

impl BoundId {
    pub const ALL: [BoundId; 9] = [
        BoundId::D1,
        BoundId::D2,
        BoundId::D3,
        BoundId::D4,
        BoundId::D5,
        BoundId::D6,
        BoundId::D7,
        BoundId::D8,
        BoundId::D9,
    ];

    /// Level-set bounds constrain the Lyapunov value; the rest constrain the
    /// squared error norm.
    pub fn is_v_level(self) -> bool {
        matches!(self, BoundId::D2 | BoundId::D5 | BoundId::D8)
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for BoundId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase();
        BoundId::ALL
            .iter()
            .copied()
            .find(|id| id.to_string() == up)
            .ok_or_else(|| Error::InvalidInput(format!("unknown bound id {s:?} (D1..D9)")))
    }
}

/// Derived constants the theorems quantify over. Fields are present when the
/// scenario provides their ingredients.
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisConstants {
    /// max{dᵢ, 1/λ₂}, taken exactly at the max.
    pub beta: Option<f64>,
    /// max{dᵢ + γ, 1/λ_min(ℒ₁)} for leader-follower runs.
    pub beta_hat: Option<f64>,
    /// Certified exponential rate of the base design inequality.
    pub alpha: Option<f64>,
    /// min{α, φᵢτᵢ, ψᵢεᵢ}.
    pub delta: Option<f64>,
    /// max{φᵢτᵢ, ψᵢεᵢ}.
    pub varrho: Option<f64>,
    /// min{ε−1, φᵢτᵢ, ψᵢεᵢ}.
    pub sigma: Option<f64>,
    /// Shift parameter of the ε design inequality.
    pub epsilon: Option<f64>,
}

/// Everything the nine threshold formulas draw on. Build one with
/// [`BoundInputs::from_scenario`] or fill fields directly in tests.
#[derive(Clone, Debug, Default)]
pub struct BoundInputs {
    pub n_agents: usize,
    pub kappa: f64,
    /// λ₂ of the leaderless Laplacian.
    pub lambda2: Option<f64>,
    /// λ_min of the pinned block ℒ₁.
    pub lambda_min_l1: Option<f64>,
    /// λ_max of the coupling matrix (ℒ or ℒ₁).
    pub lambda_max_l: Option<f64>,
    /// λ_max of the design matrix (P or Q).
    pub lambda_max_p: Option<f64>,
    /// λ_min of the design matrix, used by the disturbance family.
    pub lambda_min_p: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub beta_hat: Option<f64>,
    pub delta: Option<f64>,
    pub varrho: Option<f64>,
    pub sigma: Option<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Declared eᵢ bounds.
    pub e_true: Vec<f64>,
    /// Declared υᵢ disturbance bounds.
    pub upsilon: Vec<f64>,
}

impl BoundInputs {
    /// Derive every obtainable input from a resolved scenario.
    pub fn from_scenario(rs: &ResolvedScenario) -> Result<Self> {
        let spec = graph::spectrum(&rs.coupling_matrix)?;
        let lf = rs.protocol.kind.is_leader_follower();
        let p_eigs = crate::linalg::sym_eigenvalues(&rs.gains.p);
        let (d_true, e_true) = rs.uncertainty.declared_constants(rs.n_agents);

        let lambda2 = if lf { None } else { Some(spec.lambda2) };
        let lambda_min_l1 = if lf { Some(spec.lambda_min) } else { None };

        let beta = lambda2.map(|l2| {
            d_true.iter().fold(1.0 / l2, |m, &d| m.max(d))
        });
        let gamma0 = rs.leader_input.as_ref().map(|li| li.gamma()).unwrap_or(rs.protocol.gamma);
        let beta_hat = lambda_min_l1.map(|lm| {
            d_true.iter().fold(1.0 / lm, |m, &d| m.max(d + gamma0))
        });

        let rates: Vec<f64> = rs
            .protocol
            .phi
            .iter()
            .zip(&rs.protocol.tau)
            .map(|(&p, &t)| p * t)
            .chain(rs.protocol.psi.iter().zip(&rs.protocol.eps_rates).map(|(&p, &e)| p * e))
            .collect();
        let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let max_rate = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let alpha = rs.gains.alpha;
        let epsilon = rs.gains.epsilon;
        let delta = match (alpha, rates.is_empty()) {
            (Some(a), false) => Some(a.min(min_rate)),
            _ => None,
        };
        let varrho = if rates.is_empty() { None } else { Some(max_rate) };
        let sigma = match (epsilon, rates.is_empty()) {
            (Some(e), false) => Some((e - 1.0).min(min_rate)),
            _ => None,
        };

        Ok(Self {
            n_agents: rs.n_agents,
            kappa: rs.protocol.kappa,
            lambda2,
            lambda_min_l1,
            lambda_max_l: Some(spec.lambda_max),
            lambda_max_p: Some(p_eigs[p_eigs.len() - 1]),
            lambda_min_p: Some(p_eigs[0]),
            alpha,
            epsilon,
            beta,
            beta_hat,
            delta,
            varrho,
            sigma,
            phi: rs.protocol.phi.clone(),
            psi: rs.protocol.psi.clone(),
            e_true,
            upsilon: rs
                .non_matching
                .as_ref()
                .map(|d| d.upsilons(rs.n_agents))
                .unwrap_or_default(),
        })
    }

    /// The constants view of these inputs.
    pub fn constants(&self) -> AnalysisConstants {
        AnalysisConstants {
            beta: self.beta,
            beta_hat: self.beta_hat,
            alpha: self.alpha,
            delta: self.delta,
            varrho: self.varrho,
            sigma: self.sigma,
            epsilon: self.epsilon,
        }
    }

    fn need(&self, field: Option<f64>, name: &str, id: BoundId) -> Result<f64> {
        field.ok_or_else(|| {
            Error::InvalidInput(format!("{id} needs {name}, absent from this scenario"))
        })
    }

    fn adaptive_sum(&self, beta: f64) -> Result<f64> {
        if self.phi.is_empty() || self.psi.len() != self.phi.len() {
            return Err(Error::InvalidInput(
                "adaptive bound needs per-agent phi and psi".into(),
            ));
        }
        Ok(self
            .phi
            .iter()
            .zip(&self.psi)
            .zip(&self.e_true)
            .map(|((&phi, &psi), &e)| beta * beta * phi + e * e * psi)
            .sum())
    }

    fn upsilon_sq_sum(&self) -> f64 {
        self.upsilon.iter().map(|u| u * u).sum()
    }
}

/// The scalar threshold of a residual set: on ‖err‖² for the norm bounds,
/// on the Lyapunov value for the level bounds.
pub fn residual_bound(id: BoundId, inp: &BoundInputs) -> Result<f64> {
    let nk = inp.n_agents as f64 * inp.kappa;
    match id {
        BoundId::D1 => {
            let lp = inp.need(inp.lambda_max_p, "lambda_max(P)", id)?;
            let a = inp.need(inp.alpha, "alpha", id)?;
            let l2 = inp.need(inp.lambda2, "lambda2", id)?;
            Ok(2.0 * lp * nk / (a * l2))
        }
        BoundId::D2 => {
            let beta = inp.need(inp.beta, "beta", id)?;
            let delta = inp.need(inp.delta, "delta", id)?;
            Ok(inp.adaptive_sum(beta)? / (2.0 * delta) + nk / (4.0 * delta))
        }
        BoundId::D3 => {
            let beta = inp.need(inp.beta, "beta", id)?;
            let a = inp.need(inp.alpha, "alpha", id)?;
            let vr = inp.need(inp.varrho, "varrho", id)?;
            let lp = inp.need(inp.lambda_max_p, "lambda_max(P)", id)?;
            let l2 = inp.need(inp.lambda2, "lambda2", id)?;
            if vr >= a {
                return Err(Error::PreconditionViolated(format!(
                    "{id} needs varrho < alpha (got {vr} >= {a})"
                )));
            }
            Ok(lp / (l2 * (a - vr)) * (inp.adaptive_sum(beta)? + 0.5 * nk))
        }
        BoundId::D4 => {
            let lp = inp.need(inp.lambda_max_p, "lambda_max(P)", id)?;
            let a = inp.need(inp.alpha, "alpha", id)?;
            let lm = inp.need(inp.lambda_min_l1, "lambda_min(L1)", id)?;
            Ok(2.0 * lp * nk / (a * lm))
        }
        BoundId::D5 => {
            let bh = inp.need(inp.beta_hat, "beta_hat", id)?;
            let delta = inp.need(inp.delta, "delta", id)?;
            Ok(inp.adaptive_sum(bh)? / (2.0 * delta) + nk / (4.0 * delta))
        }
        BoundId::D6 => {
            let bh = inp.need(inp.beta_hat, "beta_hat", id)?;
            let a = inp.need(inp.alpha, "alpha", id)?;
            let vr = inp.need(inp.varrho, "varrho", id)?;
            let lp = inp.need(inp.lambda_max_p, "lambda_max(P)", id)?;
            let lm = inp.need(inp.lambda_min_l1, "lambda_min(L1)", id)?;
            if vr >= a {
                return Err(Error::PreconditionViolated(format!(
                    "{id} needs varrho < alpha (got {vr} >= {a})"
                )));
            }
            Ok(lp / (lm * (a - vr)) * (inp.adaptive_sum(bh)? + 0.5 * nk))
        }
        BoundId::D7 => {
            let lq = inp.need(inp.lambda_max_p, "lambda_max(Q)", id)?;
            let lqm = inp.need(inp.lambda_min_p, "lambda_min(Q)", id)?;
            let eps = inp.need(inp.epsilon, "epsilon", id)?;
            let l2 = inp.need(inp.lambda2, "lambda2", id)?;
            let ll = inp.need(inp.lambda_max_l, "lambda_max(L)", id)?;
            if eps <= 1.0 {
                return Err(Error::PreconditionViolated(format!("{id} needs epsilon > 1")));
            }
            Ok(2.0 * lq / ((eps - 1.0) * l2) * (ll / (2.0 * lqm) * inp.upsilon_sq_sum() + nk))
        }
        BoundId::D8 => {
            let beta = inp.need(inp.beta, "beta", id)?;
            let sigma = inp.need(inp.sigma, "sigma", id)?;
            let lqm = inp.need(inp.lambda_min_p, "lambda_min(Q)", id)?;
            let ll = inp.need(inp.lambda_max_l, "lambda_max(L)", id)?;
            Ok(inp.adaptive_sum(beta)? / (2.0 * sigma)
                + ll / (2.0 * sigma * lqm) * inp.upsilon_sq_sum()
                + nk / (4.0 * sigma))
        }
        BoundId::D9 => {
            let beta = inp.need(inp.beta, "beta", id)?;
            let eps = inp.need(inp.epsilon, "epsilon", id)?;
            let vr = inp.need(inp.varrho, "varrho", id)?;
            let lq = inp.need(inp.lambda_max_p, "lambda_max(Q)", id)?;
            let lqm = inp.need(inp.lambda_min_p, "lambda_min(Q)", id)?;
            let l2 = inp.need(inp.lambda2, "lambda2", id)?;
            let ll = inp.need(inp.lambda_max_l, "lambda_max(L)", id)?;
            if vr >= eps - 1.0 {
                return Err(Error::PreconditionViolated(format!(
                    "{id} needs varrho < epsilon - 1 (got {vr} >= {})",
                    eps - 1.0
                )));
            }
            Ok(lq / (l2 * (eps - 1.0 - vr))
                * (inp.adaptive_sum(beta)? + ll / lqm * inp.upsilon_sq_sum() + 0.5 * nk))
        }
    }
}

/// Result of the exponential-envelope comparison.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnvelopeCheck {
    pub ok: bool,
    /// Largest signed excess over the tolerated envelope; negative when the
    /// series stays below it everywhere.
    pub max_violation: f64,
}

/// Check `V(t) ≤ (V0 − offset)·e^{−rate·t} + offset` pointwise, with the
/// global tolerances [`TOL_REL`]·V0 + [`TOL_ABS`] absorbing integration error.
pub fn envelope_check(
    times: &[f64],
    v_series: &[f64],
    v0: f64,
    rate: f64,
    offset: f64,
) -> EnvelopeCheck {
    assert_eq!(times.len(), v_series.len(), "grid mismatch");
    assert!(rate > 0.0, "envelope rate must be positive");
    let slack = TOL_ABS + TOL_REL * v0;
    let mut max_violation = f64::NEG_INFINITY;
    for (t, v) in times.iter().zip(v_series) {
        let env = (v0 - offset) * (-rate * t).exp() + offset;
        max_violation = max_violation.max(v - (env + slack));
    }
    EnvelopeCheck { ok: max_violation <= 0.0, max_violation }
}

/// Verdict on one residual-set claim.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub bound_id: BoundId,
    /// The theorem's threshold (on ‖err‖² or on V per the bound family).
    pub bound_value: f64,
    /// Threshold after the verdict tolerance: `bound_value·(1 + TOL_REL)`.
    pub threshold: f64,
    /// First instant after which the metric stays inside the threshold for
    /// the rest of the horizon; absent when it ends outside.
    pub entry_time: Option<f64>,
    /// Envelope verdict where the theorem provides one (static and adaptive
    /// level bounds); absent otherwise.
    pub envelope_ok: Option<bool>,
    pub envelope_max_violation: Option<f64>,
    /// Largest signed excess of the metric over the threshold within the
    /// settle window; positive means the claim failed.
    pub max_violation: f64,
    /// Overall verdict: settle-window membership and (when present) the
    /// envelope both hold.
    pub passed: bool,
}

/// Membership verdict: the metric series must sit below `bound·(1+TOL_REL)`
/// over the final `settle_fraction` of the horizon.
pub fn uub_verdict(
    times: &[f64],
    metric: &[f64],
    id: BoundId,
    bound: f64,
    settle_fraction: f64,
) -> ResidualReport {
    assert_eq!(times.len(), metric.len(), "grid mismatch");
    assert!(!times.is_empty(), "empty trajectory");
    assert!(bound > 0.0, "bound must be positive");
    assert!(settle_fraction > 0.0 && settle_fraction < 1.0);
    let threshold = bound * (1.0 + TOL_REL);
    let start = ((1.0 - settle_fraction) * times.len() as f64).floor() as usize;
    let start = start.min(times.len() - 1);

    let mut max_violation = f64::NEG_INFINITY;
    for &v in &metric[start..] {
        max_violation = max_violation.max(v - threshold);
    }
    let passed = max_violation <= 0.0;

    // Scan backwards for the last excursion anywhere in the horizon; entry
    // is the first grid point after it.
    let mut entry_time = None;
    if *metric.last().unwrap() <= threshold {
        let mut idx = times.len();
        for k in (0..times.len()).rev() {
            if metric[k] > threshold {
                break;
            }
            idx = k;
        }
        if idx < times.len() {
            entry_time = Some(times[idx]);
        }
    }

    ResidualReport {
        bound_id: id,
        bound_value: bound,
        threshold,
        entry_time,
        envelope_ok: None,
        envelope_max_violation: None,
        max_violation,
        passed,
    }
}

/// Series of V₁ values along a trajectory.
pub fn v1_series(traj: &Trajectory, l: &DMatrix<f64>, p_inv: &DMatrix<f64>) -> Vec<f64> {
    traj.errors.iter().map(|e| lyapunov_v1(e, l, p_inv)).collect()
}

/// Series of squared error norms along a trajectory.
pub fn squared_error_series(traj: &Trajectory) -> Vec<f64> {
    traj.error_norms.iter().map(|n| n * n).collect()
}

/// The series a bound's verdict runs on: the V-level Lyapunov series for the
/// adaptive level bounds, squared error norms otherwise.
pub fn bound_metric_series(
    rs: &ResolvedScenario,
    traj: &Trajectory,
    id: BoundId,
) -> Result<Vec<f64>> {
    if !id.is_v_level() {
        return Ok(squared_error_series(traj));
    }
    let inp = BoundInputs::from_scenario(rs)?;
    let p_inv = invert_spd(&rs.gains.p)?;
    let lm = &rs.coupling_matrix;
    let ad = traj
        .adaptive
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("{id} needs an adaptive run")))?;
    let beta = match id {
        BoundId::D5 => inp.beta_hat,
        _ => inp.beta,
    }
    .ok_or_else(|| Error::InvalidInput(format!("{id} constants unavailable")))?;
    if rs.protocol.tau.len() != rs.n_agents || rs.protocol.eps_rates.len() != rs.n_agents {
        return Err(Error::InvalidInput(format!(
            "{id} needs per-agent tau and eps_rates"
        )));
    }
    Ok(traj
        .errors
        .iter()
        .zip(ad)
        .map(|(e, a)| {
            lyapunov_v2(
                e,
                lm,
                &p_inv,
                a,
                beta,
                &inp.e_true,
                &rs.protocol.tau,
                &rs.protocol.eps_rates,
            )
        })
        .collect())
}

/// Verify one residual-set claim against a trajectory, choosing the metric
/// series, running the membership verdict, and attaching the envelope check
/// where the theorem states one.
pub fn verify_bound(
    rs: &ResolvedScenario,
    traj: &Trajectory,
    id: BoundId,
) -> Result<ResidualReport> {
    if traj.times.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let inp = BoundInputs::from_scenario(rs)?;
    let bound = residual_bound(id, &inp)?;
    let p_inv = invert_spd(&rs.gains.p)?;
    let lm = &rs.coupling_matrix;
    let metric = bound_metric_series(rs, traj, id)?;

    let mut report = uub_verdict(&traj.times, &metric, id, bound, SETTLE_FRACTION);

    // Envelope checks where the theory states an explicit exponential bound
    // on a Lyapunov series.
    let envelope = match id {
        BoundId::D1 | BoundId::D4 => inp.alpha.map(|a| {
            let v1 = v1_series(traj, lm, &p_inv);
            let nk = rs.n_agents as f64 * rs.protocol.kappa;
            envelope_check(&traj.times, &v1, v1[0], a, nk / a)
        }),
        BoundId::D2 | BoundId::D5 | BoundId::D8 => {
            let rate = match id {
                BoundId::D8 => inp.sigma,
                _ => inp.delta,
            };
            rate.map(|r| envelope_check(&traj.times, &metric, metric[0], r, bound))
        }
        BoundId::D7 => match (inp.epsilon, inp.lambda_max_l, inp.lambda_min_p) {
            (Some(eps), Some(ll), Some(lqm)) if eps > 1.0 => {
                let v1 = v1_series(traj, lm, &p_inv);
                let nk = rs.n_agents as f64 * rs.protocol.kappa;
                let offset = (ll / (2.0 * lqm) * inp.upsilon_sq_sum() + nk) / (eps - 1.0);
                Some(envelope_check(&traj.times, &v1, v1[0], eps - 1.0, offset))
            }
            _ => None,
        },
        _ => None,
    };
    if let Some(env) = envelope {
        report.envelope_ok = Some(env.ok);
        report.envelope_max_violation = Some(env.max_violation);
        report.passed = report.passed && env.ok;
    }
    Ok(report)
}
