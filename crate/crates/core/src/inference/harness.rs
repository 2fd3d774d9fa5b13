//! Checks of how the extensive margin changes the identified set.

use serde::{Deserialize, Serialize};

use super::dgp::{BProcess, SyntheticDgp};
use super::sets::{linear_grid, profile_lr_set, ProfileOptions, ProfileSet};
use crate::error::{Error, Result};
use crate::estimator::{minimize, GmmCriterion, ParamSpace, Weighting};
use crate::moments::MomentSystemConfig;
use crate::panel::MacroPanel;

/// Comparison of profile sets with and without the extensive margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetComparison {
    pub with_margin: Option<(f64, f64)>,
    pub without_margin: Option<(f64, f64)>,
    pub length_with: f64,
    pub length_without: f64,
    /// Largest grid spacing.
    pub grid_step: f64,
    /// Every included point with the margin is included without it.
    pub contained: bool,
    pub strictly_smaller: bool,
    /// Hull endpoints agree within one grid step.
    pub coincide: bool,
    pub without_points: usize,
}

pub fn compare_profiles(with: &ProfileSet, without: &ProfileSet) -> Result<SetComparison> {
    if with.grid != without.grid {
        return Err(Error::validation("profile sets must share a grid"));
    }
    let grid_step = with.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let len = |h: Option<(f64, f64)>| h.map_or(0.0, |(a, b)| b - a);
    let contained = with.included.iter().zip(&without.included).all(|(&a, &b)| !a || b);
    let n_with = with.included.iter().filter(|&&b| b).count();
    let without_points = without.included.iter().filter(|&&b| b).count();
    let coincide = match (with.hull(), without.hull()) {
        (Some((a, b)), Some((c, d))) => (a - c).abs() <= grid_step + 1e-12 && (b - d).abs() <= grid_step + 1e-12,
        (None, None) => true,
        _ => false,
    };
    Ok(SetComparison {
        with_margin: with.hull(),
        without_margin: without.hull(),
        length_with: len(with.hull()),
        length_without: len(without.hull()),
        grid_step,
        contained,
        strictly_smaller: contained && n_with < without_points,
        coincide,
        without_points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    /// Moment system without the extensive margin; the harness toggles it.
    pub moments: MomentSystemConfig,
    pub space: ParamSpace,
    pub weighting: Weighting,
    /// Index of the profiled parameter among the free ones.
    pub profile_index: usize,
    pub grid_points: usize,
    pub level: f64,
    pub n_starts: usize,
    pub seed: u64,
}

/// Profile sets with and without the extensive margin on one panel.
pub fn profile_pair(panel: &MacroPanel, cfg: &HarnessConfig) -> Result<(ProfileSet, ProfileSet)> {
    let (lo, hi) = cfg
        .space
        .free
        .get(cfg.profile_index)
        .map(|f| (f.1, f.2))
        .ok_or_else(|| Error::validation("profile index out of range"))?;
    let grid = linear_grid(lo, hi, cfg.grid_points);
    let run = |margin: bool| -> Result<ProfileSet> {
        let config = MomentSystemConfig {
            use_extensive_margin: margin,
            ..cfg.moments.clone()
        };
        let crit = GmmCriterion::new(panel, config, cfg.space.clone(), cfg.weighting)?;
        let min = minimize(&crit, cfg.n_starts, cfg.seed)?;
        let opts = ProfileOptions {
            seed: cfg.seed,
            ..Default::default()
        };
        profile_lr_set(&crit, cfg.profile_index, &grid, cfg.level, &min, &opts)
    };
    Ok((run(true)?, run(false)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    /// Time-varying constrained share.
    pub varying: SetComparison,
    /// Constrained share held at the mean of the varying scenario.
    pub constant: SetComparison,
    /// (a) shrinkage with time-varying B.
    pub shrinks_when_varying: bool,
    /// (b) equality of sets with constant B.
    pub coincide_when_constant: bool,
    /// (c) the set without the margin is not a single grid point.
    pub not_point_identified: bool,
}

/// Runs the time-varying scenario of `dgp` and a constant-B twin.
pub fn lemma_property_harness(dgp: &SyntheticDgp, cfg: &HarnessConfig) -> Result<HarnessReport> {
    let mean = match dgp.b {
        BProcess::LogitAr1 { mean, .. } => mean,
        _ => return Err(Error::validation("the harness needs a time-varying constrained share")),
    };
    let (w, wo) = profile_pair(&dgp.simulate()?, cfg)?;
    let varying = compare_profiles(&w, &wo)?;
    let twin = SyntheticDgp {
        b: BProcess::Constant { value: mean },
        ..dgp.clone()
    };
    let (cw, cwo) = profile_pair(&twin.simulate()?, cfg)?;
    let constant = compare_profiles(&cw, &cwo)?;
    Ok(HarnessReport {
        shrinks_when_varying: varying.strictly_smaller,
        coincide_when_constant: constant.coincide,
        not_point_identified: varying.without_points > 1,
        varying,
        constant,
    })
}
