//! Controller synthesis and closed-loop simulation for distributed robust
//! consensus of linear multi-agent systems.
//!
//! Each of `N` agents carries identical nominal dynamics `ẋᵢ = Axᵢ + B(uᵢ + fᵢ)`
//! where `fᵢ` is a heterogeneous matched uncertainty known only through a
//! declared bound. The crate provides:
//!
//! - [`graph`]: undirected communication graphs, Laplacians, algebraic
//!   connectivity, and the pinned follower block for leader-follower runs.
//! - [`synthesis`]: Riccati-based solution of the consensus design inequality
//!   `AP + PAᵀ − 2BBᵀ < 0` (and its `+εP` variant), feedback gains
//!   `K = −BᵀP⁻¹`, coupling gains, and the certified convergence rate α.
//! - [`protocols`]: the six control laws (static and adaptive, leaderless and
//!   leader-follower, plus the discontinuous and simplified variants) built on
//!   boundary-layer switch functions.
//! - [`simulation`]: deterministic fixed-step RK4 integration of the closed
//!   loop, with seeded scenario builders for a mass-spring network and a
//!   network of Chua circuits.
//! - [`metrics`]: consensus errors, Lyapunov functionals, residual-set bounds
//!   D1..D9, convergence envelopes, and ultimate-boundedness verdicts.
//! - [`scenario`]: serializable experiment descriptions and their resolution
//!   into concrete runs.
//! - [`io`]: trajectory CSV and report serialization shared by the CLI.
//!
//! All randomness flows through the seeded [`rng::SplitMix64`] generator, so a
//! scenario plus its seed reproduces a run bit for bit.

pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod protocols;
pub mod rng;
pub mod scenario;
pub mod simulation;
pub mod synthesis;

pub use error::{Error, Result};
