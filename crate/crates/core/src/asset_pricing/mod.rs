//! Euler-equation wedges by asset, the equity premium they imply, and the
//! implicit identification of risk aversion and the Frisch elasticity.

mod identification;
mod wedges;

pub use identification::*;
pub use wedges::*;
