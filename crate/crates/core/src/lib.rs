//! Set identification of household preference parameters from aggregate
//! time series using moment inequalities sharpened by the extensive margin
//! of constrained households.

pub mod aggregation;
pub mod analytic_bounds;
pub mod asset_pricing;
pub mod error;
pub mod estimator;
pub mod ingest;
pub mod inference;
pub mod ks;
pub mod mixed_freq;
pub mod moments;
pub mod optim;
pub mod panel;

pub use aggregation::PreferenceTheta;
pub use error::{Error, Result};
pub use panel::{MacroPanel, ReturnKind};
