//! Implicit identification of ω and η from covariances and wage elasticities
//! of log-linearized aggregates. Log-deviations are taken around sample means.

use serde::Serialize;

use crate::aggregation::{xi_consumption_at, PreferenceTheta};
use crate::error::{Error, Result};
use crate::optim::brent_root;
use crate::panel::{MacroPanel, ReturnKind};

/// Covariances with the instrument R̃_t, all variables in log-deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LogDeviationCovariances {
    pub r_next: f64,
    pub xi: f64,
    pub b: f64,
    pub kappa: f64,
    /// Cov(ΔC̃_{t+1}, R̃_t).
    pub dc_next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImpliedOmega {
    /// Consumption growth does not covary with the instrument.
    Unidentified,
    Identified { omega_im: f64, omega_cm: f64 },
}

/// ω^IM = [Cov(R̃',R̃) + Cov(Ξ̃,R̃) + (1−βR̄)/(βR̄)(Cov(B̃,R̃) + Cov(κ̃,R̃))] / Cov(ΔC̃',R̃),
/// together with the complete-markets ratio ω^CM.
pub fn implied_omega_im(cov: &LogDeviationCovariances, beta: f64, r_bar: f64) -> Result<ImpliedOmega> {
    if !(beta > 0.0 && r_bar > 0.0 && beta.is_finite() && r_bar.is_finite()) {
        return Err(Error::validation("beta and the mean gross return must be positive"));
    }
    if cov.dc_next == 0.0 {
        return Ok(ImpliedOmega::Unidentified);
    }
    let margin = (1.0 - beta * r_bar) / (beta * r_bar);
    let num = cov.r_next + cov.xi + margin * (cov.b + cov.kappa);
    Ok(ImpliedOmega::Identified {
        omega_im: num / cov.dc_next,
        omega_cm: cov.r_next / cov.dc_next,
    })
}

fn demean(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (x, y) = (demean(x), demean(y));
    x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64
}

/// Sample covariances for [`implied_omega_im`] and the mean gross return.
///
/// Uses periods with R_t, R_{t+1} and C_{t±1} observed and, when the panel
/// carries B, B_t > 0. The intensive margin is unobserved; pass a series to
/// include it, otherwise its covariance is zero.
pub fn log_deviation_covariances(
    theta: &PreferenceTheta,
    panel: &MacroPanel,
    asset: ReturnKind,
    kappa: Option<&[f64]>,
) -> Result<(LogDeviationCovariances, f64)> {
    theta.validate()?;
    let r = panel.return_series(asset)?;
    let vs = panel
        .var_share
        .as_deref()
        .ok_or_else(|| Error::validation("panel lacks var_share"))?;
    if let Some(k) = kappa {
        if k.len() != panel.len() {
            return Err(Error::validation("kappa series length differs from the panel"));
        }
    }
    let b = panel.b.as_deref();
    let keep = |t: usize| {
        r[t].is_finite()
            && r[t + 1].is_finite()
            && b.is_none_or(|b| b[t] > 0.0)
            && kappa.is_none_or(|k| k[t] > 0.0)
    };
    let periods: Vec<usize> = (1..panel.len().saturating_sub(1)).filter(|&t| keep(t)).collect();
    if periods.len() < 3 {
        return Err(Error::validation("too few usable periods for log-deviation covariances"));
    }
    let inst: Vec<f64> = periods.iter().map(|&t| r[t].ln()).collect();
    let r_next: Vec<f64> = periods.iter().map(|&t| r[t + 1].ln()).collect();
    let dc: Vec<f64> = periods.iter().map(|&t| (panel.c[t + 1] / panel.c[t]).ln()).collect();
    let xi = periods
        .iter()
        .map(|&t| xi_consumption_at(theta, panel.c[t], panel.c[t - 1], vs[t], t).map(f64::ln))
        .collect::<Result<Vec<_>>>()?;
    let covs = LogDeviationCovariances {
        r_next: cov(&r_next, &inst),
        xi: cov(&xi, &inst),
        b: b.map_or(0.0, |b| cov(&periods.iter().map(|&t| b[t].ln()).collect::<Vec<_>>(), &inst)),
        kappa: kappa.map_or(0.0, |k| cov(&periods.iter().map(|&t| k[t].ln()).collect::<Vec<_>>(), &inst)),
        dc_next: cov(&dc, &inst),
    };
    let r_bar = periods.iter().map(|&t| r[t + 1]).sum::<f64>() / periods.len() as f64;
    Ok((covs, r_bar))
}

/// Wage elasticities ε_{·,W}.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WageElasticities {
    pub hours: f64,
    /// Undistorted marginal utility of wealth, MU − μ.
    pub mu_net: f64,
    pub b: f64,
    pub kappa: f64,
    /// Consumption-share dispersion V_c.
    pub v_c: f64,
    /// Gross consumption growth g_c = C_t / C_{t−1}.
    pub g_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaInputs {
    pub omega: f64,
    pub eta: f64,
    pub h: f64,
    pub var_share: f64,
    pub c_t: f64,
    pub c_prev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrischDecomposition {
    pub gamma1: f64,
    pub gamma2: f64,
    /// ε_{Ξ^lab,W} = γ₁ε_{V_c,W} − 2hγ₂ε_{g_c,W}.
    pub eps_xi_lab: f64,
    /// None when the denominator vanishes.
    pub inv_eta: Option<f64>,
}

/// γ₁ and γ₂ at one period.
pub fn frisch_gammas(g: &GammaInputs) -> Result<(f64, f64)> {
    let gap = g.c_t - g.h * g.c_prev;
    if !(gap > 0.0 && g.c_t > 0.0 && g.omega > 0.0 && g.eta > 0.0 && g.var_share >= 0.0) {
        return Err(Error::validation(
            "gamma inputs need C_t - h C_(t-1) > 0, omega > 0, eta > 0, var_share >= 0",
        ));
    }
    let a = g.omega * (g.eta + g.omega) * g.var_share;
    let den = 2.0 * g.eta * g.eta * (1.0 - g.h * g.c_prev / g.c_t).powi(2) + a;
    Ok((a / den, g.var_share * (g.c_prev / gap) / den))
}

/// 1/η = (ε_{L,W} − ε_{Ξ^lab,W}) / (1 + ε_{MU−μ,W} + (ε_{B,W} + ε_{κ,W})·μ/(MU−μ)),
/// with `mu_ratio` = μ/(MU − μ).
pub fn frisch_decomposition(el: &WageElasticities, mu_ratio: f64, g: &GammaInputs) -> Result<FrischDecomposition> {
    let (gamma1, gamma2) = frisch_gammas(g)?;
    let eps_xi_lab = gamma1 * el.v_c - 2.0 * g.h * gamma2 * el.g_c;
    let den = 1.0 + el.mu_net + (el.b + el.kappa) * mu_ratio;
    let inv_eta = if den.abs() < 1e-14 {
        log::warn!("Frisch ratio denominator vanishes");
        None
    } else {
        Some((el.hours - eps_xi_lab) / den)
    };
    Ok(FrischDecomposition {
        gamma1,
        gamma2,
        eps_xi_lab,
        inv_eta,
    })
}

/// Solves the implicit equation η·(1/η)(η) = 1 for η on `bracket`; the
/// `eta` field of `g` is ignored.
pub fn implied_frisch_eta(el: &WageElasticities, mu_ratio: f64, g: &GammaInputs, bracket: (f64, f64)) -> Result<f64> {
    let f = |eta: f64| match frisch_decomposition(el, mu_ratio, &GammaInputs { eta, ..*g }) {
        Ok(FrischDecomposition { inv_eta: Some(v), .. }) => eta * v - 1.0,
        _ => f64::NAN,
    };
    brent_root(f, bracket.0, bracket.1, 1e-12, 200)
}

/// OLS slope of ln y on ln w, both demeaned.
pub fn log_elasticity(y: &[f64], w: &[f64]) -> Result<f64> {
    if y.len() != w.len() || y.len() < 2 {
        return Err(Error::validation("elasticity needs two equal-length series of length >= 2"));
    }
    if y.iter().chain(w).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::validation("elasticity needs positive finite levels"));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let lw: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let vw = cov(&lw, &lw);
    if vw <= 0.0 {
        return Err(Error::validation("wage has no variation"));
    }
    Ok(cov(&ly, &lw) / vw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PanelFrischInputs {
    pub elasticities: WageElasticities,
    /// Sample-mean μ over sample-mean MU − μ.
    pub mu_ratio: f64,
    /// γ inputs at sample means, with C_{t−1}/C_t at its mean and C_t = 1.
    pub gamma: GammaInputs,
}

/// Sample analogues of the wage elasticities from a panel with hours,
/// wages and one Euler return. ε_{κ,W} is unobserved and passed in.
pub fn panel_frisch_inputs(
    theta: &PreferenceTheta,
    panel: &MacroPanel,
    asset: ReturnKind,
    eps_kappa: f64,
) -> Result<PanelFrischInputs> {
    theta.validate()?;
    let l = panel.l.as_deref().ok_or_else(|| Error::validation("panel lacks hours L"))?;
    let w = panel.w.as_deref().ok_or_else(|| Error::validation("panel lacks wages W"))?;
    let r = panel.return_series(asset)?;
    let vs = panel
        .var_share
        .as_deref()
        .ok_or_else(|| Error::validation("panel lacks var_share"))?;
    let b = panel.b.as_deref();
    let periods: Vec<usize> = (1..panel.len().saturating_sub(1))
        .filter(|&t| r[t + 1].is_finite() && l[t].is_finite() && w[t].is_finite() && b.is_none_or(|b| b[t] > 0.0))
        .collect();
    if periods.len() < 3 {
        return Err(Error::validation("too few usable periods for wage elasticities"));
    }
    let mut mu = Vec::new();
    let mut mu_net = Vec::new();
    for &t in &periods {
        let mu_t = (panel.c[t] - theta.h * panel.c[t - 1]).powf(-theta.omega);
        let mu_next = (panel.c[t + 1] - theta.h * panel.c[t]).powf(-theta.omega);
        let xi_t = xi_consumption_at(theta, panel.c[t], panel.c[t - 1], vs[t], t)?;
        let xi_next = xi_consumption_at(theta, panel.c[t + 1], panel.c[t], vs[t + 1], t + 1)?;
        let net = theta.beta * mu_next * (xi_next / xi_t) * r[t + 1];
        if !(net > 0.0 && mu_t.is_finite()) {
            return Err(Error::Domain {
                what: "undistorted marginal utility is not positive".into(),
                period: t,
            });
        }
        mu.push(mu_t - net);
        mu_net.push(net);
    }
    let col = |x: &[f64]| periods.iter().map(|&t| x[t]).collect::<Vec<f64>>();
    let wage = col(w);
    let v = col(vs);
    let v_c = if v.iter().all(|&x| x == 0.0) { 0.0 } else { log_elasticity(&v, &wage)? };
    let g_c: Vec<f64> = periods.iter().map(|&t| panel.c[t] / panel.c[t - 1]).collect();
    let elasticities = WageElasticities {
        hours: log_elasticity(&col(l), &wage)?,
        mu_net: log_elasticity(&mu_net, &wage)?,
        b: match b {
            Some(b) => log_elasticity(&col(b), &wage)?,
            None => 0.0,
        },
        kappa: eps_kappa,
        v_c,
        g_c: log_elasticity(&g_c, &wage)?,
    };
    let n = periods.len() as f64;
    let mean = |x: &[f64]| x.iter().sum::<f64>() / n;
    Ok(PanelFrischInputs {
        elasticities,
        mu_ratio: mean(&mu) / mean(&mu_net),
        gamma: GammaInputs {
            omega: theta.omega,
            eta: theta.eta,
            h: theta.h,
            var_share: mean(&v),
            c_t: 1.0,
            c_prev: mean(&g_c.iter().map(|g| 1.0 / g).collect::<Vec<_>>()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_markets_reduces_to_ratio() {
        let c = LogDeviationCovariances {
            r_next: 0.3,
            dc_next: 0.1,
            ..Default::default()
        };
        match implied_omega_im(&c, 0.97, 1.02).unwrap() {
            ImpliedOmega::Identified { omega_im, omega_cm } => {
                assert_eq!(omega_im, omega_cm);
                assert!((omega_cm - 3.0).abs() < 1e-12);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn margin_terms_drop_at_unit_gross_rate() {
        let c = LogDeviationCovariances {
            r_next: 0.3,
            xi: 0.0,
            b: 5.0,
            kappa: -2.0,
            dc_next: 0.1,
        };
        let beta = 0.96;
        match implied_omega_im(&c, beta, 1.0 / beta).unwrap() {
            ImpliedOmega::Identified { omega_im, omega_cm } => assert!((omega_im - omega_cm).abs() < 1e-12),
            _ => panic!(),
        }
        let zero = LogDeviationCovariances { dc_next: 0.0, ..c };
        assert_eq!(implied_omega_im(&zero, beta, 1.0).unwrap(), ImpliedOmega::Unidentified);
    }

    #[test]
    fn zero_dispersion_kills_gammas() {
        let g = GammaInputs {
            omega: 2.0,
            eta: 1.5,
            h: 0.5,
            var_share: 0.0,
            c_t: 1.0,
            c_prev: 0.99,
        };
        assert_eq!(frisch_gammas(&g).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn complete_markets_frisch() {
        let el = WageElasticities {
            hours: 0.4,
            mu_net: -0.2,
            g_c: 0.7,
            ..Default::default()
        };
        let g = GammaInputs {
            omega: 2.0,
            eta: 1.5,
            h: 0.0,
            var_share: 0.02,
            c_t: 1.0,
            c_prev: 0.99,
        };
        let d = frisch_decomposition(&el, 0.1, &g).unwrap();
        assert_eq!(d.eps_xi_lab, 0.0);
        assert!((d.inv_eta.unwrap() - 0.4 / 0.8).abs() < 1e-15);
        let bad = WageElasticities { mu_net: -1.0, ..el };
        assert!(frisch_decomposition(&bad, 0.0, &g).unwrap().inv_eta.is_none());
    }

    #[test]
    fn elasticity_of_power_law() {
        let w = [1.0, 1.1, 1.3, 0.9];
        let y: Vec<f64> = w.iter().map(|v: &f64| 2.0 * v.powf(0.7)).collect();
        assert!((log_elasticity(&y, &w).unwrap() - 0.7).abs() < 1e-12);
        assert!(log_elasticity(&y, &[1.0; 4]).is_err());
    }
}
