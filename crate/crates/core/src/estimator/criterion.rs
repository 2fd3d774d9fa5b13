//! Continuously-updated GMM criterion with the nuisance wedges profiled out.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{newey_west_lrv, nnls_gram, pseudo_inverse};
use crate::aggregation::PreferenceTheta;
use crate::error::{Error, Result};
use crate::moments::{build_instruments, stack_moments, InstrumentMatrix, MomentSystem, MomentSystemConfig};
use crate::panel::MacroPanel;

/// Sample mean and weighting matrix of a moment system at one θ.
#[derive(Debug, Clone)]
pub struct CriterionState {
    pub mean: DVector<f64>,
    /// Generalized inverse of the long-run variance.
    pub weight: DMatrix<f64>,
    /// True where the nuisance component is free (inequality row).
    pub inequality: Vec<bool>,
}

impl CriterionState {
    /// Q = ½ (m̄ − U)ᵀ W (m̄ − U). `u` has one entry per moment row.
    pub fn q(&self, u: &[f64]) -> f64 {
        let res = &self.mean - DVector::from_column_slice(u);
        0.5 * res.dot(&(&self.weight * &res))
    }

    /// Minimizes Q over U ≥ 0 on inequality rows (U = 0 on equality rows).
    /// Returns the minimum and the full-length optimal U.
    pub fn profile(&self) -> (f64, Vec<f64>) {
        let r = self.mean.len();
        let free: Vec<usize> = (0..r).filter(|&j| self.inequality[j]).collect();
        let mut u = vec![0.0; r];
        if !free.is_empty() {
            let g = self.weight.select_rows(&free).select_columns(&free);
            let wm = &self.weight * &self.mean;
            let c = DVector::from_iterator(free.len(), free.iter().map(|&j| wm[j]));
            let x = nnls_gram(&g, &c);
            for (k, &j) in free.iter().enumerate() {
                u[j] = x[k];
            }
        }
        (self.q(&u).max(0.0), u)
    }
}

/// Objective interface shared by the optimizer and the set constructors.
pub trait Criterion: Sync {
    fn param_names(&self) -> Vec<String>;
    /// Box for the free parameters.
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn sample_size(&self) -> usize;
    fn n_moments(&self) -> usize;
    fn state(&self, x: &[f64]) -> Result<CriterionState>;

    /// Profiled criterion min_U Q(θ, U); infeasible θ map to +∞.
    fn profiled(&self, x: &[f64]) -> f64 {
        match self.state(x) {
            Ok(s) => s.profile().0,
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamId {
    Omega,
    Eta,
    /// Frisch elasticity 1/η.
    Frisch,
    H,
    Beta,
}

impl ParamId {
    pub fn name(self) -> &'static str {
        match self {
            ParamId::Omega => "omega",
            ParamId::Eta => "eta",
            ParamId::Frisch => "frisch",
            ParamId::H => "h",
            ParamId::Beta => "beta",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [ParamId::Omega, ParamId::Eta, ParamId::Frisch, ParamId::H, ParamId::Beta]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown parameter `{s}`")))
    }

    fn set(self, theta: &mut PreferenceTheta, v: f64) {
        match self {
            ParamId::Omega => theta.omega = v,
            ParamId::Eta => theta.eta = v,
            ParamId::Frisch => theta.eta = 1.0 / v,
            ParamId::H => theta.h = v,
            ParamId::Beta => theta.beta = v,
        }
    }

    pub fn get(self, theta: &PreferenceTheta) -> f64 {
        match self {
            ParamId::Omega => theta.omega,
            ParamId::Eta => theta.eta,
            ParamId::Frisch => 1.0 / theta.eta,
            ParamId::H => theta.h,
            ParamId::Beta => theta.beta,
        }
    }
}

/// Free parameters with prior box; remaining components come from `fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub free: Vec<(ParamId, f64, f64)>,
    pub fixed: PreferenceTheta,
}

impl ParamSpace {
    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::validation("no free parameters"));
        }
        for (id, lo, hi) in &self.free {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::validation(format!(
                    "bounds for {} must be finite with lower < upper",
                    id.name()
                )));
            }
            if matches!(id, ParamId::Frisch) && *lo <= 0.0 {
                return Err(Error::validation("frisch bounds must be positive"));
            }
        }
        Ok(())
    }

    pub fn theta(&self, x: &[f64]) -> Result<PreferenceTheta> {
        let mut th = self.fixed;
        for ((id, _, _), &v) in self.free.iter().zip(x) {
            id.set(&mut th, v);
        }
        th.validate()?;
        Ok(th)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Weighting {
    NeweyWest { lag: usize },
    /// Plain covariance of the moment contributions.
    Covariance,
}

impl Weighting {
    fn lag(self) -> usize {
        match self {
            Weighting::NeweyWest { lag } => lag,
            Weighting::Covariance => 0,
        }
    }
}

/// CU-GMM criterion over a panel.
#[derive(Debug, Clone)]
pub struct GmmCriterion<'a> {
    pub panel: &'a MacroPanel,
    pub config: MomentSystemConfig,
    pub space: ParamSpace,
    pub weighting: Weighting,
    pub pinv_tol: f64,
    /// Common positive factor applied to every moment row.
    pub scale: f64,
    instruments: InstrumentMatrix,
    n_obs: usize,
    n_moments: usize,
}

impl<'a> GmmCriterion<'a> {
    pub fn new(
        panel: &'a MacroPanel,
        config: MomentSystemConfig,
        space: ParamSpace,
        weighting: Weighting,
    ) -> Result<Self> {
        space.validate()?;
        let instruments = build_instruments(panel, &config)?;
        let center: Vec<f64> = space.free.iter().map(|(_, lo, hi)| 0.5 * (lo + hi)).collect();
        let probe = stack_moments(panel, &space.theta(&center)?, &config, &instruments)?;
        if probe.n_obs() <= probe.n_moments() {
            log::warn!(
                "sample size {} does not exceed the number of moments {}",
                probe.n_obs(),
                probe.n_moments()
            );
        }
        if weighting.lag() >= probe.n_obs() {
            return Err(Error::validation("lag truncation must be below the sample size"));
        }
        Ok(GmmCriterion {
            panel,
            config,
            space,
            weighting,
            pinv_tol: 1e-10,
            scale: 1.0,
            n_obs: probe.n_obs(),
            n_moments: probe.n_moments(),
            instruments,
        })
    }

    pub fn moments(&self, x: &[f64]) -> Result<MomentSystem> {
        let theta = self.space.theta(x)?;
        let mut sys = stack_moments(self.panel, &theta, &self.config, &self.instruments)?;
        if self.scale != 1.0 {
            sys.matrix *= self.scale;
            sys.mean *= self.scale;
        }
        Ok(sys)
    }

    /// Q(θ, U) for an explicit nuisance vector.
    pub fn q(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        let s = self.state(x)?;
        if u.len() != s.mean.len() {
            return Err(Error::validation("nuisance vector has the wrong length"));
        }
        Ok(s.q(u))
    }
}

impl Criterion for GmmCriterion<'_> {
    fn param_names(&self) -> Vec<String> {
        self.space.free.iter().map(|(id, _, _)| id.name().to_string()).collect()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.space.free.iter().map(|(_, lo, hi)| (*lo, *hi)).collect()
    }

    fn sample_size(&self) -> usize {
        self.n_obs
    }

    fn n_moments(&self) -> usize {
        self.n_moments
    }

    fn state(&self, x: &[f64]) -> Result<CriterionState> {
        let sys = self.moments(x)?;
        let v = newey_west_lrv(&sys.matrix, self.weighting.lag())?;
        Ok(CriterionState {
            mean: sys.mean,
            weight: pseudo_inverse(&v, self.pinv_tol),
            inequality: sys.inequality,
        })
    }
}

/// Gaussian quadratic criterion m̄(θ) = θ − center with weight Σ⁻¹ and no nuisance.
#[derive(Debug, Clone)]
pub struct QuadraticCriterion {
    pub center: Vec<f64>,
    pub weight: DMatrix<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub sample_size: usize,
}

impl Criterion for QuadraticCriterion {
    fn param_names(&self) -> Vec<String> {
        (0..self.center.len()).map(|i| format!("x{i}")).collect()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }

    fn sample_size(&self) -> usize {
        self.sample_size
    }

    fn n_moments(&self) -> usize {
        self.center.len()
    }

    fn state(&self, x: &[f64]) -> Result<CriterionState> {
        let mean = DVector::from_iterator(x.len(), x.iter().zip(&self.center).map(|(a, b)| a - b));
        Ok(CriterionState {
            mean,
            weight: self.weight.clone(),
            inequality: vec![false; x.len()],
        })
    }
}
