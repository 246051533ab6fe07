//! Scenario descriptions: one JSON document holds everything a closed-loop
//! run needs (topology, dynamics, uncertainty generators, protocol constants,
//! gains, initial conditions, integration grid, seed), so results are
//! reproducible from files alone.
//!
//! Function-valued ingredients (uncertainties, disturbances, leader input)
//! are named generators with recorded parameters rather than opaque closures;
//! the builders draw any random parameters from the seeded PRNG and write
//! them into the document.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::protocols::{AdaptiveState, BoundSpec, ProtocolConfig, ProtocolKind};
use crate::rng::SplitMix64;
use crate::synthesis::{self, AgentDynamics, Coupling, GainSet};

/// Integration grid and seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SimParams {
    /// Horizon in seconds.
    pub t_final: f64,
    /// Fixed step size in seconds.
    pub h: f64,
    /// Seed for any unrecorded draws (initial states when `x0` is absent).
    pub seed: u64,
}

impl SimParams {
    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.t_final > 0.0) || self.h > self.t_final {
            return Err(Error::InvalidInput(
                "sim grid needs 0 < h <= t_final".into(),
            ));
        }
        Ok(())
    }
}

/// Row-major nested arrays for matrices in JSON documents.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parse row-major nested arrays into a matrix; rows must be nonempty and of
/// equal length.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::InvalidInput("matrix needs at least one row".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidInput(
            "matrix rows must be nonempty and of equal length".into(),
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Agent state-space matrices in JSON form.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DynamicsJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

impl DynamicsJson {
    pub fn from_dynamics(d: &AgentDynamics) -> Self {
        Self { a: matrix_to_rows(&d.a), b: matrix_to_rows(&d.b) }
    }

    pub fn to_dynamics(&self) -> Result<AgentDynamics> {
        AgentDynamics::new(rows_to_matrix(&self.a)?, rows_to_matrix(&self.b)?)
    }
}

/// Matched uncertainty `fᵢ(xᵢ, t)` entering through the input channel, as a
/// named generator with recorded parameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum UncertaintySpec {
    /// No uncertainty; bound is identically zero.
    None,
    /// Per-agent spring force on the first coordinate: `fᵢ = kᵢ·(−xᵢ₁)`,
    /// so `‖fᵢ‖ ≤ kᵢ‖xᵢ‖`.
    Spring { k: Vec<f64> },
    /// Per-agent diode-slope mismatch against the nominal slope `m0_1` that
    /// the state matrix already absorbs: the input-channel term is
    /// `a(m0_1 − m1ᵢ)x₁ + (a/2)(m1ᵢ − m2ᵢ)(|x₁+1| − |x₁−1|)`. The declared
    /// bound is the worst case over slopes in [−6, 0]: `54 + 47.25‖x‖`.
    ChuaDiode { a: f64, m0_1: f64, m1: Vec<f64>, m2: Vec<f64> },
}

impl UncertaintySpec {
    pub fn validate(&self, n_agents: usize, p: usize) -> Result<()> {
        match self {
            UncertaintySpec::None => Ok(()),
            UncertaintySpec::Spring { k } => {
                if k.len() != n_agents {
                    return Err(Error::InvalidInput(
                        "spring uncertainty needs one k per agent".into(),
                    ));
                }
                if k.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidInput("spring k must be nonnegative".into()));
                }
                if p != 1 {
                    return Err(Error::InvalidInput(
                        "spring uncertainty is single-input".into(),
                    ));
                }
                Ok(())
            }
            UncertaintySpec::ChuaDiode { m1, m2, .. } => {
                if m1.len() != n_agents || m2.len() != n_agents {
                    return Err(Error::InvalidInput(
                        "diode uncertainty needs one slope pair per agent".into(),
                    ));
                }
                if p != 1 {
                    return Err(Error::InvalidInput(
                        "diode uncertainty is single-input".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Evaluate `fᵢ(xᵢ, t)` (dimension p).
    pub fn eval(&self, i: usize, x_i: &DVector<f64>, _t: f64) -> DVector<f64> {
        match self {
            UncertaintySpec::None => DVector::zeros(1),
            UncertaintySpec::Spring { k } => DVector::from_element(1, -k[i] * x_i[0]),
            UncertaintySpec::ChuaDiode { a, m0_1, m1, m2 } => {
                let x1 = x_i[0];
                let v = a * (m0_1 - m1[i]) * x1
                    + (a / 2.0) * (m1[i] - m2[i]) * ((x1 + 1.0).abs() - (x1 - 1.0).abs());
                DVector::from_element(1, v)
            }
        }
    }

    /// Declared bound for agent i (what the static laws use as ρᵢ and the
    /// analysis uses as (dᵢ, eᵢ)).
    pub fn bound(&self, i: usize) -> BoundSpec {
        match self {
            UncertaintySpec::None => BoundSpec::Constant { d: 0.0 },
            UncertaintySpec::Spring { k } => BoundSpec::Linear { d: 0.0, e: k[i] },
            UncertaintySpec::ChuaDiode { .. } => BoundSpec::Linear { d: 54.0, e: 47.25 },
        }
    }

    /// Declared per-agent constants (dᵢ, eᵢ) for the analysis formulas.
    pub fn declared_constants(&self, n_agents: usize) -> (Vec<f64>, Vec<f64>) {
        let mut d = Vec::with_capacity(n_agents);
        let mut e = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            match self.bound(i) {
                BoundSpec::Linear { d: di, e: ei } => {
                    d.push(di);
                    e.push(ei);
                }
                BoundSpec::Constant { d: di } => {
                    d.push(di);
                    e.push(0.0);
                }
            }
        }
        (d, e)
    }
}

/// Non-matching disturbance `ωᵢ(t)` (enters the state equation directly, not
/// through B).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    /// `ωᵢ(t) = υ·(sin t, cos t, 0, …)/√2`, same bound υ for every agent.
    SinCos { upsilon: f64 },
}

impl DisturbanceSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            DisturbanceSpec::SinCos { upsilon } => {
                if *upsilon < 0.0 {
                    return Err(Error::InvalidInput("upsilon must be nonnegative".into()));
                }
                if n < 2 {
                    return Err(Error::InvalidInput(
                        "sin/cos disturbance needs state dimension >= 2".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, _i: usize, t: f64, n: usize) -> DVector<f64> {
        match self {
            DisturbanceSpec::SinCos { upsilon } => {
                let mut w = DVector::zeros(n);
                let s = upsilon / 2.0_f64.sqrt();
                w[0] = s * t.sin();
                w[1] = s * t.cos();
                w
            }
        }
    }

    /// Declared bounds υᵢ, one per agent.
    pub fn upsilons(&self, n_agents: usize) -> Vec<f64> {
        match self {
            DisturbanceSpec::SinCos { upsilon } => vec![*upsilon; n_agents],
        }
    }
}

/// Leader control input `u₀(x₀, t)` with its declared bound γ₀.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum LeaderInputSpec {
    /// `u₀ = γ·sin(t)·e₁`; bound γ by construction.
    Sine { gamma: f64 },
    /// Virtual diode feedback on the leader's own first state:
    /// `u₀ = (a/2)(m0_1 − m0_2)(|x₀₁+1| − |x₀₁−1|)·e₁`;
    /// the factor reaches 2 for |x₀₁| ≥ 1, so the bound is a·|m0_1 − m0_2|.
    ChuaDiode { a: f64, m0_1: f64, m0_2: f64 },
}

impl LeaderInputSpec {
    pub fn eval(&self, x0: &DVector<f64>, t: f64, p: usize) -> DVector<f64> {
        let mut u = DVector::zeros(p);
        match self {
            LeaderInputSpec::Sine { gamma } => {
                u[0] = gamma * t.sin();
            }
            LeaderInputSpec::ChuaDiode { a, m0_1, m0_2 } => {
                let x1 = x0[0];
                u[0] = (a / 2.0) * (m0_1 - m0_2) * ((x1 + 1.0).abs() - (x1 - 1.0).abs());
            }
        }
        u
    }

    /// Declared bound on ‖u₀‖.
    pub fn gamma(&self) -> f64 {
        match self {
            LeaderInputSpec::Sine { gamma } => *gamma,
            LeaderInputSpec::ChuaDiode { a, m0_1, m0_2 } => a * (m0_1 - m0_2).abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.gamma() < 0.0 {
            return Err(Error::InvalidInput("leader input bound must be >= 0".into()));
        }
        Ok(())
    }
}

/// Gain package in JSON form (row-major matrices).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GainsJson {
    pub p: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub coupling: Coupling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl GainsJson {
    pub fn from_gain_set(g: &GainSet) -> Self {
        Self {
            p: matrix_to_rows(&g.p),
            k: matrix_to_rows(&g.k),
            gamma: matrix_to_rows(&g.gamma),
            alpha: g.alpha,
            coupling: g.coupling,
            epsilon: g.epsilon,
        }
    }

    pub fn to_gain_set(&self) -> Result<GainSet> {
        Ok(GainSet {
            p: rows_to_matrix(&self.p)?,
            k: rows_to_matrix(&self.k)?,
            gamma: rows_to_matrix(&self.gamma)?,
            alpha: self.alpha,
            coupling: self.coupling,
            epsilon: self.epsilon,
        })
    }
}

/// The complete run description. See the module docs for the JSON layout;
/// optional fields are omitted from serialized output when unset.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub graph: Graph,
    pub dynamics: DynamicsJson,
    pub uncertainty: UncertaintySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub non_matching: Option<DisturbanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_input: Option<LeaderInputSpec>,
    pub protocol: ProtocolConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsJson>,
    pub sim: SimParams,
    /// Stacked initial state: leader's n entries first for leader-follower
    /// kinds, then follower states agent-major. Drawn from `sim.seed`
    /// uniformly in [−1, 1] when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Initial adaptive gains; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive0: Option<AdaptiveState>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("scenario JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Validate everything, fill defaults, and convert to solver-ready types.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        self.graph.validate()?;
        let n_agents = self.graph.n;
        let dynamics = self.dynamics.to_dynamics()?;
        let (n, p) = (dynamics.n(), dynamics.p());
        self.protocol.validate(n_agents)?;
        self.uncertainty.validate(n_agents, p)?;
        self.sim.validate()?;

        let kind = self.protocol.kind;
        let coupling_matrix = if kind.is_leader_follower() {
            if !self.graph.leader_rooted() {
                return Err(Error::DisconnectedGraph);
            }
            graph::leader_follower_partition(&self.graph)?.0
        } else {
            if !self.graph.is_connected() {
                return Err(Error::DisconnectedGraph);
            }
            graph::laplacian(&self.graph)
        };

        if let Some(d) = &self.non_matching {
            if kind.is_leader_follower() {
                return Err(Error::InvalidInput(
                    "non-matching disturbances are analyzed for leaderless kinds only".into(),
                ));
            }
            d.validate(n)?;
        }
        if let Some(li) = &self.leader_input {
            li.validate()?;
            if !kind.is_leader_follower() {
                return Err(Error::InvalidInput(
                    "leader_input requires a leader-follower protocol kind".into(),
                ));
            }
            // The static law's robust term must dominate the true leader
            // bound; a smaller declared gamma voids the guarantee.
            if kind == ProtocolKind::StaticLeaderFollower
                && self.protocol.gamma < li.gamma() * (1.0 - 1e-12)
            {
                return Err(Error::InvalidInput(format!(
                    "protocol gamma {} understates the leader input bound {}",
                    self.protocol.gamma,
                    li.gamma()
                )));
            }
        }

        let gains = self
            .gains
            .as_ref()
            .ok_or_else(|| {
                Error::InvalidInput("scenario has no gains; synthesize them first".into())
            })?
            .to_gain_set()?;
        if gains.k.shape() != (p, n) {
            return Err(Error::InvalidInput(format!(
                "gain K must be {p}x{n}, got {}x{}",
                gains.k.nrows(),
                gains.k.ncols()
            )));
        }
        if gains.gamma.shape() != (n, n) || gains.p.shape() != (n, n) {
            return Err(Error::InvalidInput("gain P and Gamma must be n x n".into()));
        }
        match (kind, gains.coupling) {
            (
                ProtocolKind::StaticLeaderless | ProtocolKind::DiscontinuousLeaderless,
                Coupling::LeaderFollower { .. },
            ) => {
                return Err(Error::InvalidInput(
                    "leaderless protocol with leader-follower coupling gains".into(),
                ))
            }
            (ProtocolKind::StaticLeaderFollower, Coupling::Leaderless { .. }) => {
                return Err(Error::InvalidInput(
                    "leader-follower protocol with leaderless coupling gain".into(),
                ))
            }
            _ => {}
        }

        let state_len = if kind.is_leader_follower() { n + n_agents * n } else { n_agents * n };
        let x0 = match &self.x0 {
            Some(v) => {
                if v.len() != state_len {
                    return Err(Error::InvalidInput(format!(
                        "x0 must have {state_len} entries, got {}",
                        v.len()
                    )));
                }
                DVector::from_column_slice(v)
            }
            None => {
                let mut r = SplitMix64::new(self.sim.seed);
                DVector::from_fn(state_len, |_, _| r.uniform(-1.0, 1.0))
            }
        };

        let adaptive0 = match &self.adaptive0 {
            Some(a) => {
                if a.d_bar.len() != n_agents || a.e_bar.len() != n_agents {
                    return Err(Error::InvalidInput(
                        "adaptive0 needs one (d, e) pair per agent".into(),
                    ));
                }
                if a.d_bar.iter().chain(a.e_bar.iter()).any(|&v| v < 0.0) {
                    return Err(Error::InvalidInput(
                        "adaptive gains must start nonnegative".into(),
                    ));
                }
                a.clone()
            }
            None => AdaptiveState::zeros(n_agents),
        };

        Ok(ResolvedScenario {
            graph: self.graph.clone(),
            coupling_matrix,
            dynamics,
            uncertainty: self.uncertainty.clone(),
            non_matching: self.non_matching.clone(),
            leader_input: self.leader_input.clone(),
            protocol: self.protocol.clone(),
            gains,
            x0,
            adaptive0,
            sim: self.sim,
            n_agents,
        })
    }
}

/// Solver-ready scenario: validated, defaults filled, matrices parsed.
#[derive(Clone, Debug)]
pub struct ResolvedScenario {
    pub graph: Graph,
    /// Follower-coupling matrix: the Laplacian ℒ for leaderless kinds, the
    /// pinned block ℒ₁ for leader-follower kinds. Row i against the error
    /// vectors gives Δᵢ.
    pub coupling_matrix: DMatrix<f64>,
    pub dynamics: AgentDynamics,
    pub uncertainty: UncertaintySpec,
    pub non_matching: Option<DisturbanceSpec>,
    pub leader_input: Option<LeaderInputSpec>,
    pub protocol: ProtocolConfig,
    pub gains: GainSet,
    /// Stacked initial state (leader first for leader-follower kinds).
    pub x0: DVector<f64>,
    pub adaptive0: AdaptiveState,
    pub sim: SimParams,
    pub n_agents: usize,
}

impl ResolvedScenario {
    pub fn n(&self) -> usize {
        self.dynamics.n()
    }

    pub fn p(&self) -> usize {
        self.dynamics.p()
    }

    pub fn has_leader(&self) -> bool {
        self.protocol.kind.is_leader_follower()
    }
}

/// Knobs for the mass-spring builder. Defaults reproduce the stock setup:
/// six agents on a ring, m = 2.5, κ = 0.5, τᵢ = εᵢ = 10, φᵢ = ψᵢ = 0.05,
/// spring rates drawn from [0, 5], initial states from [−1, 1].
#[derive(Clone, Debug)]
pub struct MassSpringParams {
    pub kind: ProtocolKind,
    pub seed: u64,
    pub mass: f64,
    pub kappa: f64,
    /// Spring-rate draw range; ignored when `spring_constants` is set.
    pub k_range: (f64, f64),
    pub x0_range: (f64, f64),
    /// Explicit spring rates; skips the k draw (initial states then come
    /// first in the seed stream).
    pub spring_constants: Option<Vec<f64>>,
    /// Adds the sin/cos non-matching disturbance with this bound.
    pub disturbance_upsilon: Option<f64>,
    pub t_final: f64,
    pub h: f64,
}

impl Default for MassSpringParams {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::StaticLeaderless,
            seed: 42,
            mass: 2.5,
            kappa: 0.5,
            k_range: (0.0, 5.0),
            x0_range: (-1.0, 1.0),
            spring_constants: None,
            disturbance_upsilon: None,
            t_final: 20.0,
            h: 1e-3,
        }
    }
}

/// Double-integrator agents `A = [[0,1],[0,0]]`, `B = [[0],[1/m]]` with
/// per-agent spring uncertainties. Draw order from one seed stream: spring
/// rates (unless given), then initial states agent-major.
pub fn build_mass_spring_scenario(graph: &Graph, params: &MassSpringParams) -> Result<Scenario> {
    graph.validate()?;
    if params.kind.is_leader_follower() {
        return Err(Error::InvalidInput(
            "mass-spring builder covers leaderless kinds".into(),
        ));
    }
    if !(params.mass > 0.0) {
        return Err(Error::InvalidInput("mass must be positive".into()));
    }
    let n_agents = graph.n;
    let mut r = SplitMix64::new(params.seed);
    let k = match &params.spring_constants {
        Some(k) => {
            if k.len() != n_agents {
                return Err(Error::InvalidInput("need one spring rate per agent".into()));
            }
            k.clone()
        }
        None => (0..n_agents)
            .map(|_| r.uniform(params.k_range.0, params.k_range.1))
            .collect(),
    };
    let x0: Vec<f64> = (0..n_agents * 2)
        .map(|_| r.uniform(params.x0_range.0, params.x0_range.1))
        .collect();

    let adaptive = params.kind.is_adaptive();
    let protocol = ProtocolConfig {
        kind: params.kind,
        kappa: params.kappa,
        tau: if adaptive { vec![10.0; n_agents] } else { vec![] },
        eps_rates: if adaptive && params.kind != ProtocolKind::SimplifiedAdaptive {
            vec![10.0; n_agents]
        } else {
            vec![]
        },
        phi: if adaptive { vec![0.05; n_agents] } else { vec![] },
        psi: if adaptive && params.kind != ProtocolKind::SimplifiedAdaptive {
            vec![0.05; n_agents]
        } else {
            vec![]
        },
        gamma: 0.0,
    };

    Ok(Scenario {
        graph: graph.clone(),
        dynamics: DynamicsJson::from_dynamics(&crate::synthesis::mass_spring_dynamics(
            params.mass,
        )),
        uncertainty: UncertaintySpec::Spring { k },
        non_matching: params.disturbance_upsilon.map(|u| DisturbanceSpec::SinCos { upsilon: u }),
        leader_input: None,
        protocol,
        gains: None,
        sim: SimParams { t_final: params.t_final, h: params.h, seed: params.seed },
        x0: Some(x0),
        adaptive0: None,
    })
}

/// Theorem-appropriate synthesis for a scenario: the shifted design
/// inequality when non-matching disturbances are declared (`epsilon`
/// defaulting to 2), the base one otherwise; coupling mode and leader bound
/// follow the protocol family.
pub fn design_gains(
    sc: &Scenario,
    epsilon: Option<f64>,
    coupling_multiplier: f64,
) -> Result<GainSet> {
    sc.graph.validate()?;
    let dyn_ = sc.dynamics.to_dynamics()?;
    let (mode, lm, gamma_bound) = if sc.protocol.kind.is_leader_follower() {
        if !sc.graph.leader_rooted() {
            return Err(Error::DisconnectedGraph);
        }
        let bound = sc.leader_input.as_ref().map(|li| li.gamma()).unwrap_or(sc.protocol.gamma);
        (
            synthesis::CouplingMode::LeaderFollower,
            graph::leader_follower_partition(&sc.graph)?.0,
            Some(bound),
        )
    } else {
        if !sc.graph.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        (synthesis::CouplingMode::Leaderless, graph::laplacian(&sc.graph), None)
    };
    let spec = graph::spectrum(&lm)?;
    let eps = match (epsilon, &sc.non_matching) {
        (Some(e), _) => Some(e),
        (None, Some(_)) => Some(2.0),
        (None, None) => None,
    };
    synthesis::synthesize(&dyn_, &spec, mode, gamma_bound, eps, coupling_multiplier)
}

/// Knobs for the Chua-circuit builder. Defaults reproduce the stock setup:
/// a = 9, b = 18, nominal slopes (−3/4, −4/3), follower slopes drawn from
/// [−6, 0), κ = 0.5, τᵢ = εᵢ = 5, φᵢ = ψᵢ = 0.05, initial states in [−1, 1].
#[derive(Clone, Debug)]
pub struct ChuaParams {
    pub kind: ProtocolKind,
    pub seed: u64,
    pub a: f64,
    pub b: f64,
    pub m0_1: f64,
    pub m0_2: f64,
    pub slope_range: (f64, f64),
    pub x0_range: (f64, f64),
    /// Explicit follower slopes (m1, m2); skips the slope draws.
    pub slopes: Option<(Vec<f64>, Vec<f64>)>,
    pub kappa: f64,
    pub t_final: f64,
    pub h: f64,
}

impl Default for ChuaParams {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::AdaptiveLeaderFollower,
            seed: 7,
            a: 9.0,
            b: 18.0,
            m0_1: -0.75,
            m0_2: -4.0 / 3.0,
            slope_range: (-6.0, 0.0),
            x0_range: (-1.0, 1.0),
            slopes: None,
            kappa: 0.5,
            t_final: 30.0,
            h: 5e-4,
        }
    }
}

/// Chua-circuit state matrix with the leader's origin-segment slope folded
/// into the linear part: `A(1,1) = −a(1 + m0_1)`.
pub fn chua_dynamics(a: f64, b: f64, m0_1: f64) -> AgentDynamics {
    AgentDynamics::new(
        DMatrix::from_row_slice(
            3,
            3,
            &[-a * (1.0 + m0_1), a, 0.0, 1.0, -1.0, 1.0, 0.0, -b, 0.0],
        ),
        DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]),
    )
    .expect("chua shapes are static")
}

/// Leader-follower network of Chua circuits: the leader runs its own virtual
/// diode feedback, followers carry per-agent slope mismatches. Draw order
/// from one seed stream: slope pairs (m1ᵢ, m2ᵢ) interleaved per agent, then
/// the leader's initial state, then follower initial states agent-major.
pub fn build_chua_scenario(graph: &Graph, params: &ChuaParams) -> Result<Scenario> {
    graph.validate()?;
    if !params.kind.is_leader_follower() {
        return Err(Error::InvalidInput(
            "chua builder covers leader-follower kinds".into(),
        ));
    }
    if graph.leader_links.is_none() {
        return Err(Error::InvalidInput("chua builder needs leader links".into()));
    }
    let n_agents = graph.n;
    let mut r = SplitMix64::new(params.seed);
    let (m1, m2) = match &params.slopes {
        Some((m1, m2)) => {
            if m1.len() != n_agents || m2.len() != n_agents {
                return Err(Error::InvalidInput("need one slope pair per agent".into()));
            }
            (m1.clone(), m2.clone())
        }
        None => {
            let mut m1 = Vec::with_capacity(n_agents);
            let mut m2 = Vec::with_capacity(n_agents);
            for _ in 0..n_agents {
                m1.push(r.uniform(params.slope_range.0, params.slope_range.1));
                m2.push(r.uniform(params.slope_range.0, params.slope_range.1));
            }
            (m1, m2)
        }
    };
    let x0: Vec<f64> = (0..(1 + n_agents) * 3)
        .map(|_| r.uniform(params.x0_range.0, params.x0_range.1))
        .collect();

    let adaptive = params.kind.is_adaptive();
    let gamma = params.a * (params.m0_1 - params.m0_2).abs();
    let protocol = ProtocolConfig {
        kind: params.kind,
        kappa: params.kappa,
        tau: if adaptive { vec![5.0; n_agents] } else { vec![] },
        eps_rates: if adaptive { vec![5.0; n_agents] } else { vec![] },
        phi: if adaptive { vec![0.05; n_agents] } else { vec![] },
        psi: if adaptive { vec![0.05; n_agents] } else { vec![] },
        gamma,
    };

    Ok(Scenario {
        graph: graph.clone(),
        dynamics: DynamicsJson::from_dynamics(&chua_dynamics(params.a, params.b, params.m0_1)),
        uncertainty: UncertaintySpec::ChuaDiode { a: params.a, m0_1: params.m0_1, m1, m2 },
        non_matching: None,
        leader_input: Some(LeaderInputSpec::ChuaDiode {
            a: params.a,
            m0_1: params.m0_1,
            m0_2: params.m0_2,
        }),
        protocol,
        gains: None,
        sim: SimParams { t_final: params.t_final, h: params.h, seed: params.seed },
        x0: Some(x0),
        adaptive0: None,
    })
}
