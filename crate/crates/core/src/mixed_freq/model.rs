//! Quarterly constrained share observed through an indebtedness proportion
//! every quarter and an exact survey measure every three years.
//!
//! States are logs. `b` is the log constrained share and `z = −log ζ` is
//! the log ratio of indebted to constrained households, so that
//! `log Π = b + z` and `B = ζ·Π` hold together.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kalman::{periodic_steady_gain, LinearGaussian};
use crate::error::{Error, Result};

/// Weights of the survey row on lagged log-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurveyWeighting {
    /// Eight quarters at 1/8 each.
    #[default]
    EightQuarters,
    /// Twelve quarters at 1/12 each, spanning the full three years.
    TwelveQuarters,
}

impl SurveyWeighting {
    pub fn n_lags(self) -> usize {
        match self {
            SurveyWeighting::EightQuarters => 8,
            SurveyWeighting::TwelveQuarters => 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedFreqParams {
    pub rho_b: f64,
    pub rho_zeta: f64,
    pub var_b: f64,
    pub var_zeta: f64,
    /// Unconditional means of `b` and `z`.
    pub mean_b: f64,
    pub mean_zeta: f64,
}

/// Observation noise variances of the indebtedness row and the survey row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsNoise {
    pub pi_var: f64,
    pub b_var: f64,
}

impl ObsNoise {
    /// Indebtedness noise at `share` of the sample variance of log Π; survey
    /// noise at the squared standard error of the survey estimate (log scale).
    pub fn calibrated(log_pi: &[Option<f64>], share: f64, survey_se: f64) -> Result<ObsNoise> {
        let xs: Vec<f64> = log_pi.iter().flatten().copied().collect();
        if xs.len() < 2 {
            return Err(Error::validation("need at least two indebtedness observations"));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(ObsNoise {
            pi_var: share * var,
            b_var: survey_se * survey_se,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedFreqModel {
    pub params: MixedFreqParams,
    pub noise: ObsNoise,
    pub weighting: SurveyWeighting,
}

/// Quarterly observations in logs. `log_b` is mostly missing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixedFreqData {
    pub dates: Vec<String>,
    pub log_pi: Vec<Option<f64>>,
    pub log_b: Vec<Option<f64>>,
}

impl MixedFreqData {
    pub fn len(&self) -> usize {
        self.log_pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_pi.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_b.len() != self.log_pi.len() || self.dates.len() != self.log_pi.len() {
            return Err(Error::validation("mixed-frequency columns differ in length"));
        }
        if self.log_pi.iter().chain(&self.log_b).flatten().any(|x| !x.is_finite()) {
            return Err(Error::validation("mixed-frequency observations must be finite"));
        }
        if self.log_b.iter().all(Option::is_none) {
            return Err(Error::validation("no survey observations of B"));
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        self.log_pi.iter().zip(&self.log_b).map(|(&p, &b)| vec![p, b]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MixedFreqSample {
    pub data: MixedFreqData,
    pub log_b: Vec<f64>,
    /// log ζ, the negative of the `z` state.
    pub log_zeta: Vec<f64>,
    /// Noise-free log Π.
    pub log_pi: Vec<f64>,
}

impl MixedFreqModel {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.rho_b.abs() < 1.0 && p.rho_zeta.abs() < 1.0) {
            return Err(Error::validation("autoregressive coefficients must lie in (-1, 1)"));
        }
        if !(p.var_b >= 0.0 && p.var_zeta >= 0.0 && self.noise.pi_var >= 0.0 && self.noise.b_var >= 0.0) {
            return Err(Error::validation("variances must be nonnegative"));
        }
        if !(p.mean_b.is_finite() && p.mean_zeta.is_finite()) {
            return Err(Error::validation("state means must be finite"));
        }
        Ok(())
    }

    pub fn n_lags(&self) -> usize {
        self.weighting.n_lags()
    }

    /// State vector: `[b_t, …, b_{t−L+1}, z_t, …, z_{t−L+1}]`, initialized
    /// at its stationary distribution.
    pub fn state_space(&self) -> Result<LinearGaussian> {
        self.validate()?;
        let l = self.n_lags();
        let n = 2 * l;
        let p = &self.params;
        let blocks = [(0, p.rho_b, p.var_b, p.mean_b), (l, p.rho_zeta, p.var_zeta, p.mean_zeta)];
        let mut f = DMatrix::zeros(n, n);
        let mut c = DVector::zeros(n);
        let mut q = DMatrix::zeros(n, n);
        let mut x0 = DVector::zeros(n);
        let mut p0 = DMatrix::zeros(n, n);
        for &(o, rho, var, mean) in &blocks {
            f[(o, o)] = rho;
            for i in 1..l {
                f[(o + i, o + i - 1)] = 1.0;
            }
            c[o] = (1.0 - rho) * mean;
            q[(o, o)] = var;
            let gamma0 = var / (1.0 - rho * rho);
            for i in 0..l {
                x0[o + i] = mean;
                for j in 0..l {
                    p0[(o + i, o + j)] = gamma0 * rho.powi((i as i32 - j as i32).abs());
                }
            }
        }
        let mut h = DMatrix::zeros(2, n);
        h[(0, 0)] = 1.0;
        h[(0, l)] = 1.0;
        for i in 0..l {
            h[(1, i)] = 1.0 / l as f64;
        }
        Ok(LinearGaussian {
            transition: f,
            intercept: c,
            state_cov: q,
            observation: h,
            obs_intercept: DVector::zeros(2),
            obs_var: DVector::from_vec(vec![self.noise.pi_var, self.noise.b_var]),
            init_mean: x0,
            init_cov: p0,
        })
    }

    /// Draws `n_quarters` of data with the survey row observed every
    /// `survey_every` quarters, at the last quarter of each window.
    pub fn simulate(&self, n_quarters: usize, survey_every: usize, seed: u64) -> Result<MixedFreqSample> {
        self.validate()?;
        if survey_every == 0 || n_quarters < survey_every {
            return Err(Error::validation("need at least one survey window"));
        }
        let l = self.n_lags();
        let p = &self.params;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let burn = 200;
        let total = n_quarters + burn;
        let (mut b, mut z) = (Vec::with_capacity(total), Vec::with_capacity(total));
        let mut bt = p.mean_b + (p.var_b / (1.0 - p.rho_b * p.rho_b)).sqrt() * draw();
        let mut zt = p.mean_zeta + (p.var_zeta / (1.0 - p.rho_zeta * p.rho_zeta)).sqrt() * draw();
        for _ in 0..total {
            bt = p.mean_b + p.rho_b * (bt - p.mean_b) + p.var_b.sqrt() * draw();
            zt = p.mean_zeta + p.rho_zeta * (zt - p.mean_zeta) + p.var_zeta.sqrt() * draw();
            b.push(bt);
            z.push(zt);
        }
        let mut data = MixedFreqData::default();
        let mut log_pi = Vec::with_capacity(n_quarters);
        for t in burn..total {
            let pi = b[t] + z[t];
            log_pi.push(pi);
            data.dates.push(format!("q{}", t - burn));
            data.log_pi.push(Some(pi + self.noise.pi_var.sqrt() * draw()));
            let k = t - burn;
            data.log_b.push(if k % survey_every == survey_every - 1 {
                let avg = b[t + 1 - l..=t].iter().sum::<f64>() / l as f64;
                Some(avg + self.noise.b_var.sqrt() * draw())
            } else {
                None
            });
        }
        Ok(MixedFreqSample {
            data,
            log_b: b[burn..].to_vec(),
            log_zeta: z[burn..].iter().map(|v| -v).collect(),
            log_pi,
        })
    }
}

/// Gain on the indebtedness innovation when the survey measure was observed
/// exactly last quarter: `(ratio + 1)/(2·ratio + 1)` with `ratio = σ²_ζ/σ²_Π`.
pub fn steady_gain(ratio: f64) -> f64 {
    if ratio.is_infinite() {
        return 0.5;
    }
    (ratio + 1.0) / (2.0 * ratio + 1.0)
}

/// Two-state system behind [`steady_gain`]: log B is observed exactly every
/// other quarter and log Π = log B − log ζ in between, with σ²_Π = 1,
/// σ²_ζ = `ratio`, and B's innovation the sum of Π's and ζ's.
pub fn stylized_system(ratio: f64, rho: f64) -> Result<LinearGaussian> {
    if !(ratio >= 0.0 && ratio.is_finite() && rho.abs() < 1.0) {
        return Err(Error::validation("stylized system needs ratio >= 0 and |rho| < 1"));
    }
    let var_b = 1.0 + ratio;
    Ok(LinearGaussian {
        transition: DMatrix::from_row_slice(2, 2, &[rho, 0.0, 0.0, 0.0]),
        intercept: DVector::zeros(2),
        state_cov: DMatrix::from_diagonal(&DVector::from_vec(vec![var_b, ratio])),
        observation: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]),
        obs_intercept: DVector::zeros(2),
        obs_var: DVector::zeros(2),
        init_mean: DVector::zeros(2),
        init_cov: DMatrix::from_diagonal(&DVector::from_vec(vec![var_b / (1.0 - rho * rho), ratio])),
    })
}

/// Fixed point of the covariance recursion of [`stylized_system`]; the
/// gain of log B on the indebtedness row in the quarter after an exact
/// survey observation.
pub fn stylized_riccati_gain(ratio: f64, rho: f64) -> Result<f64> {
    let sys = stylized_system(ratio, rho)?;
    periodic_steady_gain(&sys, &[vec![true, false], vec![false, true]], 0, 0, 1e-14, 10_000)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MixedFreqModel {
        MixedFreqModel {
            params: MixedFreqParams {
                rho_b: 0.9,
                rho_zeta: 0.6,
                var_b: 0.01,
                var_zeta: 0.004,
                mean_b: -3.0,
                mean_zeta: 1.0,
            },
            noise: ObsNoise {
                pi_var: 1e-4,
                b_var: 4e-4,
            },
            weighting: SurveyWeighting::EightQuarters,
        }
    }

    #[test]
    fn gain_limits() {
        assert_eq!(steady_gain(0.0), 1.0);
        assert_eq!(steady_gain(f64::INFINITY), 0.5);
        assert!((steady_gain(1e12) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn riccati_matches_closed_form() {
        for &r in &[0.0, 0.3051, 1.0, 7.5] {
            for &rho in &[0.0, 0.8] {
                let g = stylized_riccati_gain(r, rho).unwrap();
                assert!((g - steady_gain(r)).abs() < 1e-10, "ratio {r}: {g}");
            }
        }
    }

    #[test]
    fn observation_rows_as_printed() {
        for w in [SurveyWeighting::EightQuarters, SurveyWeighting::TwelveQuarters] {
            let m = MixedFreqModel { weighting: w, ..model() };
            let ss = m.state_space().unwrap();
            let l = w.n_lags();
            assert_eq!(ss.n_state(), 2 * l);
            assert_eq!(ss.observation[(0, 0)], 1.0);
            assert_eq!(ss.observation[(0, l)], 1.0);
            assert_eq!(ss.observation.row(0).sum(), 2.0);
            for i in 0..l {
                assert_eq!(ss.observation[(1, i)], 1.0 / l as f64);
                assert_eq!(ss.observation[(1, l + i)], 0.0);
            }
            ss.validate().unwrap();
        }
    }

    #[test]
    fn stationary_init_is_fixed_point() {
        let ss = model().state_space().unwrap();
        let x1 = &ss.intercept + &ss.transition * &ss.init_mean;
        assert!((x1 - &ss.init_mean).amax() < 1e-12);
        let p1 = &ss.transition * &ss.init_cov * ss.transition.transpose() + &ss.state_cov;
        assert!((p1 - &ss.init_cov).amax() < 1e-12);
    }

    #[test]
    fn measurement_identity_holds_in_simulation() {
        let s = model().simulate(60, 12, 3).unwrap();
        for t in 0..60 {
            assert!((s.log_b[t] - s.log_pi[t] - s.log_zeta[t]).abs() < 1e-12);
        }
        assert_eq!(s.data.log_b.iter().flatten().count(), 5);
        assert!(s.data.log_b[11].is_some() && s.data.log_b[10].is_none());
    }

    #[test]
    fn rejects_nonstationary() {
        let mut m = model();
        m.params.rho_b = 1.0;
        assert!(m.state_space().is_err());
    }
}
