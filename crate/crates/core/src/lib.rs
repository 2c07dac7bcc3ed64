//! Reduced Gaussian dynamics of two parametrically coupled oscillators, each damped by
//! its own Drude-cutoff thermal bath, and the resulting entanglement.
//!
//! The reduced density matrix is propagated exactly: the memory equations of motion give
//! the auxiliary functions of a boundary-value problem, these fix the quadratic
//! propagator (`A`, `B`, `N`), and the propagator maps the first and second moments of
//! any Gaussian initial state. A discretized-bath simulation of the full closed system
//! serves as an independent oracle.

#![allow(clippy::needless_range_loop)]

pub mod entanglement;
pub mod error;
pub mod exec;
pub mod gaussian_moments;
pub mod io;
pub mod kernels;
pub mod memory_dynamics;
pub mod model;
pub mod oracle;
pub mod propagator;
pub mod scenario;
pub mod special;

pub use entanglement::{log_negativity, symplectic_spectrum, EntanglementTrace, ScaledParameters};
pub use error::{Error, Result};
pub use exec::Execution;
pub use gaussian_moments::{moment_trace, moment_trace_with, propagate, GaussianState, MomentTrace};
pub use model::{BathParams, Drive, ModelConfig, OscillatorParams, SimulationGrid};
pub use propagator::PropagatorMatrices;
pub use oracle::{evolve_full, DiscretizationRule, OracleSettings};
pub use scenario::{builtin_scenarios, find_scenario, run_scenario, RunOptions, RunReport, Scenario};
