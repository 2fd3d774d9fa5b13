//! Confidence sets from chain quantiles and from profile likelihood ratios.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::mcmc::Chain;
use crate::error::{Error, Result};
use crate::estimator::{Criterion, CriterionState, Minimum};
use crate::optim::{pattern_search, PatternSearchOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetMethod {
    #[serde(rename = "mcmc-quantile")]
    McmcQuantile,
    #[serde(rename = "profile-lr")]
    ProfileLr,
}

impl SetMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SetMethod::McmcQuantile => "mcmc-quantile",
            SetMethod::ProfileLr => "profile-lr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInterval {
    pub name: String,
    /// `None` when no admissible value survives.
    pub bounds: Option<(f64, f64)>,
}

impl ParamInterval {
    pub fn length(&self) -> f64 {
        self.bounds.map_or(0.0, |(lo, hi)| hi - lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub method: SetMethod,
    pub level: f64,
    pub intervals: Vec<ParamInterval>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ConfidenceSet {
    pub fn interval(&self, name: &str) -> Option<&ParamInterval> {
        self.intervals.iter().find(|i| i.name == name)
    }

    /// True when every named interval contains the corresponding value.
    pub fn covers(&self, point: &[(&str, f64)]) -> bool {
        point.iter().all(|(name, v)| {
            self.interval(name)
                .and_then(|i| i.bounds)
                .is_some_and(|(lo, hi)| lo <= *v && *v <= hi)
        })
    }

    /// Product of interval lengths (the box volume).
    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(ParamInterval::length).product()
    }

    /// Componentwise containment of `self` in `other`, within `tol`.
    pub fn is_within(&self, other: &ConfidenceSet, tol: f64) -> bool {
        self.intervals.iter().all(|a| match (a.bounds, other.interval(&a.name).and_then(|b| b.bounds)) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some((lo, hi)), Some((olo, ohi))) => lo >= olo - tol && hi <= ohi + tol,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV rows `parameter, lower, upper, method, level`; empty intervals have blank bounds.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["parameter", "lower", "upper", "method", "level"])?;
        for i in &self.intervals {
            let (lo, hi) = i
                .bounds
                .map_or((String::new(), String::new()), |(a, b)| (format!("{a:?}"), format!("{b:?}")));
            wtr.write_record([i.name.as_str(), &lo, &hi, self.method.as_str(), &format!("{:?}", self.level)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed componentwise quantile intervals of the θ part of a chain.
pub fn quantile_set(chain: &Chain, level: f64) -> Result<ConfidenceSet> {
    if chain.is_empty() {
        return Err(Error::validation("empty chain"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation("level must lie in (0, 1)"));
    }
    let tail = (1.0 - level) / 2.0;
    let intervals = (0..chain.n_theta)
        .map(|j| {
            let mut col = chain.column(j);
            col.sort_by(f64::total_cmp);
            ParamInterval {
                name: chain.names[j].clone(),
                bounds: Some((quantile_sorted(&col, tail), quantile_sorted(&col, 1.0 - tail))),
            }
        })
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("draws".into(), chain.len().into());
    metadata.insert("acceptance_rate".into(), chain.acceptance_rate.into());
    metadata.insert("seed".into(), chain.seed.into());
    Ok(ConfidenceSet {
        method: SetMethod::McmcQuantile,
        level,
        intervals,
        metadata,
    })
}

/// Upper `level` quantile of the chi-squared distribution with `dof` degrees of freedom.
pub fn chi2_critical(level: f64, dof: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation("level must lie in (0, 1)"));
    }
    let dist = ChiSquared::new(dof).map_err(|e| Error::validation(format!("chi-squared: {e}")))?;
    Ok(dist.inverse_cdf(level))
}

/// Criterion with one coordinate held fixed.
pub struct FixedCoordinate<'c, C: ?Sized> {
    pub inner: &'c C,
    pub index: usize,
    pub value: f64,
}

impl<C: Criterion + ?Sized> FixedCoordinate<'_, C> {
    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        v.insert(self.index, self.value);
        v
    }
}

impl<C: Criterion + ?Sized> Criterion for FixedCoordinate<'_, C> {
    fn param_names(&self) -> Vec<String> {
        let mut n = self.inner.param_names();
        n.remove(self.index);
        n
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = self.inner.bounds();
        b.remove(self.index);
        b
    }

    fn sample_size(&self) -> usize {
        self.inner.sample_size()
    }

    fn n_moments(&self) -> usize {
        self.inner.n_moments()
    }

    fn state(&self, x: &[f64]) -> Result<CriterionState> {
        self.inner.state(&self.full(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    /// Extra random starts for the inner minimization (besides the global
    /// minimizer and the box center).
    pub n_random_starts: usize,
    pub seed: u64,
    pub step_tol: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            n_random_starts: 2,
            seed: 1,
            step_tol: 1e-7,
        }
    }
}

/// Profiled criterion and likelihood ratio along a grid for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub param: String,
    pub grid: Vec<f64>,
    pub q_profile: Vec<f64>,
    pub lr: Vec<f64>,
    pub included: Vec<bool>,
    pub q_min: f64,
    pub critical_value: f64,
    pub level: f64,
}

impl ProfileSet {
    pub fn included_points(&self) -> Vec<f64> {
        self.grid.iter().zip(&self.included).filter(|(_, &k)| k).map(|(g, _)| *g).collect()
    }

    /// Hull of the included grid points.
    pub fn hull(&self) -> Option<(f64, f64)> {
        let pts = self.included_points();
        Some((*pts.first()?, *pts.last()?))
    }

    /// True when the included points form one run of consecutive grid points.
    pub fn is_contiguous(&self) -> bool {
        let idx: Vec<usize> = (0..self.grid.len()).filter(|&i| self.included[i]).collect();
        idx.windows(2).all(|w| w[1] == w[0] + 1)
    }

    pub fn confidence_set(&self) -> ConfidenceSet {
        let mut metadata = BTreeMap::new();
        metadata.insert("grid_size".into(), self.grid.len().into());
        metadata.insert("included_points".into(), self.included.iter().filter(|&&b| b).count().into());
        metadata.insert("contiguous".into(), self.is_contiguous().into());
        metadata.insert("q_min".into(), self.q_min.into());
        metadata.insert("critical_value".into(), self.critical_value.into());
        if self.hull().is_none() {
            metadata.insert(
                "diagnostic".into(),
                "no grid point passes the likelihood-ratio test; the criterion may be misspecified".into(),
            );
        }
        ConfidenceSet {
            method: SetMethod::ProfileLr,
            level: self.level,
            intervals: vec![ParamInterval {
                name: self.param.clone(),
                bounds: self.hull(),
            }],
            metadata,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([self.param.as_str(), "Q_profile", "LR", "included"])?;
        for i in 0..self.grid.len() {
            wtr.write_record([
                format!("{:?}", self.grid[i]),
                format!("{:?}", self.q_profile[i]),
                format!("{:?}", self.lr[i]),
                self.included[i].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Evenly spaced grid of `n` points over `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Profile likelihood-ratio set for parameter `index`: grid points with
/// 2T(Q_profile − Q_min) at or below the chi-squared(1) critical value.
/// A grid point beating `minimum.q_min` lowers Q_min for the whole set.
pub fn profile_lr_set<C: Criterion + ?Sized>(
    criterion: &C,
    index: usize,
    grid: &[f64],
    level: f64,
    minimum: &Minimum,
    opts: &ProfileOptions,
) -> Result<ProfileSet> {
    let bounds = criterion.bounds();
    if index >= bounds.len() {
        return Err(Error::validation("profile parameter index out of range"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation("level must lie in (0, 1)"));
    }
    let (lo, hi) = bounds[index];
    if grid.is_empty() || grid.iter().any(|g| !(lo..=hi).contains(g)) {
        return Err(Error::validation("profile grid must be nonempty and inside the prior bounds"));
    }
    let critical_value = chi2_critical(level, 1.0)?;
    let t = criterion.sample_size() as f64;
    let ps_opts = PatternSearchOptions {
        step_tol: opts.step_tol,
        ..Default::default()
    };
    let q_profile: Vec<f64> = grid
        .par_iter()
        .map(|&g| {
            let fixed = FixedCoordinate {
                inner: criterion,
                index,
                value: g,
            };
            let sub = fixed.bounds();
            if sub.is_empty() {
                return fixed.profiled(&[]);
            }
            let mut starts = vec![{
                let mut m = minimum.theta.clone();
                m.remove(index);
                m
            }];
            starts.extend(crate::estimator::minimize::start_points(&sub, 1 + opts.n_random_starts, opts.seed));
            let lower: Vec<f64> = sub.iter().map(|b| b.0).collect();
            let upper: Vec<f64> = sub.iter().map(|b| b.1).collect();
            starts
                .iter()
                .map(|x0| pattern_search(|x| fixed.profiled(x), x0, &lower, &upper, &ps_opts).value)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut q_min = minimum.q_min;
    let grid_min = q_profile.iter().cloned().fold(f64::INFINITY, f64::min);
    if grid_min < q_min {
        log::info!("profile grid improved Q_min from {q_min:e} to {grid_min:e}");
        q_min = grid_min;
    }
    let lr: Vec<f64> = q_profile.iter().map(|q| 2.0 * t * (q - q_min)).collect();
    let included = lr.iter().map(|&l| l <= critical_value).collect();
    Ok(ProfileSet {
        param: criterion.param_names()[index].clone(),
        grid: grid.to_vec(),
        q_profile,
        lr,
        included,
        q_min,
        critical_value,
        level,
    })
}
