//! Synthetic aggregate panels in which the Euler wedge is the constrained
//! share times a positive intensity, so the extensive margin is controlled.
//!
//! With log growth g and wedge w_t = B_t·κ, returns are built so that
//! E_t[β g_{t+1}^{-ω} R_{t+1}] = 1 − w_t holds exactly for both assets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{MacroPanel, ReturnKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BProcess {
    /// Nobody is constrained: the Euler equation holds with equality.
    Zero,
    Constant { value: f64 },
    /// logit(B_t) follows a Gaussian AR(1) around logit(mean).
    LogitAr1 { mean: f64, rho: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDgp {
    pub omega: f64,
    pub beta: f64,
    /// Mean and standard deviation of log consumption growth.
    pub growth_mean: f64,
    pub growth_sd: f64,
    /// Loading of expected log growth on −(logit B_t − its mean).
    pub growth_loading: f64,
    /// Standard deviation of the log pricing error on the risky return.
    pub return_noise_sd: f64,
    /// Wedge per unit of constrained share.
    pub kappa: f64,
    pub b: BProcess,
    /// Constant cross-sectional variance of consumption shares.
    pub var_share: f64,
    pub n_periods: usize,
    pub seed: u64,
}

impl SyntheticDgp {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::validation("synthetic DGP needs omega > 0 and beta in (0, 1)"));
        }
        if !(self.growth_sd >= 0.0 && self.return_noise_sd >= 0.0 && self.kappa >= 0.0 && self.var_share >= 0.0) {
            return Err(Error::validation("synthetic DGP scales must be nonnegative"));
        }
        if self.n_periods < 4 {
            return Err(Error::validation("synthetic DGP needs at least 4 periods"));
        }
        match self.b {
            BProcess::Constant { value } if !(0.0..1.0).contains(&value) => {
                Err(Error::validation("constant B must lie in [0, 1)"))
            }
            BProcess::LogitAr1 { mean, rho, sd } if !(mean > 0.0 && mean < 1.0 && rho.abs() < 1.0 && sd >= 0.0) => {
                Err(Error::validation("logit AR(1) for B needs mean in (0, 1), |rho| < 1, sd >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Simulated panel with C, var_share, B and returns R_k (risky) and R_g (safe).
    pub fn simulate(&self) -> Result<MacroPanel> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let n = self.n_periods;
        let (ell_bar, rho, sd) = match self.b {
            BProcess::LogitAr1 { mean, rho, sd } => ((mean / (1.0 - mean)).ln(), rho, sd),
            _ => (0.0, 0.0, 0.0),
        };
        let mut ell = ell_bar + sd / (1.0 - rho * rho).sqrt() * normal();
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut r_risky = vec![f64::NAN; n];
        let mut r_safe = vec![f64::NAN; n];
        c[0] = 1.0;
        for t in 0..n {
            if t > 0 {
                ell = ell_bar + rho * (ell - ell_bar) + sd * normal();
            }
            b[t] = match self.b {
                BProcess::Zero => 0.0,
                BProcess::Constant { value } => value,
                BProcess::LogitAr1 { .. } => 1.0 / (1.0 + (-ell).exp()),
            };
            if t + 1 == n {
                break;
            }
            let w = b[t] * self.kappa;
            if w >= 1.0 {
                return Err(Error::validation(format!("wedge {w} at period {t} is not below 1")));
            }
            let mu = self.growth_mean - self.growth_loading * (ell - ell_bar);
            let lg = mu + self.growth_sd * normal();
            let eps = self.return_noise_sd * normal();
            c[t + 1] = c[t] * lg.exp();
            let s2 = self.return_noise_sd.powi(2);
            r_risky[t + 1] = (1.0 - w) / self.beta * (self.omega * lg + eps - 0.5 * s2).exp();
            // E_t[g^{-ω}] for lognormal growth.
            let m = (-self.omega * mu + 0.5 * (self.omega * self.growth_sd).powi(2)).exp();
            r_safe[t + 1] = (1.0 - w) / (self.beta * m);
        }
        // The first return is never used by the moments; repeat the second.
        r_risky[0] = r_risky[1];
        r_safe[0] = r_safe[1];
        let mut panel = MacroPanel::with_index(c);
        panel.set_return(ReturnKind::Capital, r_risky)?;
        panel.set_return(ReturnKind::Government, r_safe)?;
        panel.set_var_share(vec![self.var_share; n])?;
        panel.set_b(b)?;
        panel.notes.insert("source".into(), format!("synthetic wedge DGP, seed {}", self.seed));
        Ok(panel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{euler_moment, AggregateObs, PreferenceTheta};

    fn dgp(b: BProcess) -> SyntheticDgp {
        SyntheticDgp {
            omega: 2.0,
            beta: 0.98,
            growth_mean: 0.005,
            growth_sd: 0.02,
            growth_loading: 0.5,
            return_noise_sd: 0.01,
            kappa: 0.5,
            b,
            var_share: 0.01,
            n_periods: 20_000,
            seed: 3,
        }
    }

    /// Sample mean of the Euler moment at the true θ against the wedge mean.
    #[test]
    fn moments_equal_wedges_on_average() {
        let d = dgp(BProcess::LogitAr1 { mean: 0.05, rho: 0.9, sd: 0.3 });
        let p = d.simulate().unwrap();
        let theta = PreferenceTheta::new(d.omega, 1.0, 0.0, d.beta).unwrap();
        for kind in [ReturnKind::Capital, ReturnKind::Government] {
            let r = p.return_series(kind).unwrap();
            let b = p.b.as_ref().unwrap();
            let (mut m_sum, mut w_sum, mut sq) = (0.0, 0.0, 0.0);
            let n = p.len() - 2;
            for t in 1..=n {
                let obs = AggregateObs {
                    period: t,
                    c_prev: p.c[t - 1],
                    c_t: p.c[t],
                    c_next: p.c[t + 1],
                    labor: None,
                    r_next: r[t + 1],
                    var_share_t: 0.01,
                    var_share_next: 0.01,
                    b_t: Some(b[t]),
                };
                let m = euler_moment(&theta, &obs).unwrap();
                m_sum += m - d.kappa * b[t];
                sq += (m - d.kappa * b[t]).powi(2);
                w_sum += d.kappa * b[t];
            }
            let nf = n as f64;
            let mean_err = m_sum / nf;
            let se = (sq / nf - mean_err * mean_err).sqrt() / nf.sqrt();
            assert!(mean_err.abs() < 4.0 * se, "{kind:?}: {mean_err} vs se {se}");
            assert!(w_sum > 0.0);
        }
    }

    #[test]
    fn zero_process_has_no_constrained_share() {
        let p = dgp(BProcess::Zero).simulate().unwrap();
        assert!(p.b.unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn rejects_invalid_b() {
        assert!(dgp(BProcess::Constant { value: 1.2 }).simulate().is_err());
    }
}
