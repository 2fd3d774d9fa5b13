//! Quasi-Bayesian and profile likelihood-ratio confidence sets, plus a
//! synthetic data-generating process and identification checks.

pub mod dgp;
pub mod harness;
pub mod mcmc;
pub mod sets;

pub use dgp::{BProcess, SyntheticDgp};
pub use harness::{compare_profiles, lemma_property_harness, profile_pair, HarnessConfig, HarnessReport, SetComparison};
pub use mcmc::{mh_sample, mh_sample_chains, Chain, MhOptions};
pub use sets::{
    chi2_critical, linear_grid, profile_lr_set, quantile_set, ConfidenceSet, FixedCoordinate, ParamInterval,
    ProfileOptions, ProfileSet, SetMethod,
};
