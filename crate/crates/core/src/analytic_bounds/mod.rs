//! Analytical identification bounds for a household with exogenous income,
//! and a toy consumption-savings solver used as their oracle.

pub mod bounds;
pub mod toy;

pub use bounds::{
    iv_slope, omega_upper_bound, refinement_curve, rho_identified_set, threshold_at, threshold_g, OmegaBound,
    RefinementCurve, RhoSet, Threshold, ThresholdInputs,
};
pub use toy::{
    hall_growth_simulate, lambda_coefficients, solve_toy_model, HallPanel, IncomeDist, LambdaCoefficients,
    ToyModel, ToyPolicy,
};
