//! Krusell-Smith incomplete-markets economy with aggregate risk.

pub mod params;
pub mod simulate;
pub mod solver;

pub use params::{standard_transition, Durations, KSParams};
pub use simulate::{simulate_panel, simulate_panel_from, InitialCapital, SimulatedPanel};
pub use solver::{euler_residual, solve_household, solve_ks, KSGrid, KSSolution, SolverOptions, StatePoint};

/// Savings below the borrowing limit plus this amount count as constrained.
pub const BINDING_TOL: f64 = 1e-8;
