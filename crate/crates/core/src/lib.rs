//! Learning dynamics for two-player zero-sum matrix games.
//!
//! The row player maximises and the column player minimises `x^T R y` over a
//! payoff matrix `R` with entries in `(0, 1]`. The crate implements MWU, OMWU,
//! entropic OMD and FLBR-MWU (an intermediate best-response step followed by
//! an MWU step), equilibrium estimation and exact oracles for small games,
//! the equilibrium Jacobian with its contraction certificate, and seeded
//! batch experiments.

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod game;
pub mod metrics;
pub mod spectral;

pub use dynamics::{Algorithm, DynamicsConfig, DynamicsState, RunResult, StopReason, StoppingRule};
pub use equilibrium::{EquilibriumResult, Method};
pub use error::{Error, Result};
pub use game::{MixedStrategy, PayoffMatrix, StrategyProfile};
pub use metrics::TrajectoryRecord;
pub use spectral::{ContractionReport, DenseMatrix, EquilibriumJacobian};
