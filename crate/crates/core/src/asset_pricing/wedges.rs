//! Per-period Euler wedges, the heterogeneity-adjusted SDF, and the premium
//! prediction over a set of preference parameters.

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{sdf, xi_consumption_at, PreferenceTheta};
use crate::error::{Error, Result};
use crate::moments::observation;
use crate::panel::{MacroPanel, ReturnKind};

/// Marginal utility (C_t − hC_{t−1})^{−ω}.
fn marginal_utility(theta: &PreferenceTheta, panel: &MacroPanel, t: usize) -> Result<f64> {
    let gap = panel.c[t] - theta.h * panel.c[t - 1];
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::Domain {
            what: format!("habit-adjusted consumption C_t - h C_(t-1) = {gap:.6e} is not positive"),
            period: t,
        });
    }
    Ok(gap.powf(-theta.omega))
}

/// Periods `t` in `1..T-1`, optionally restricted to those where every
/// listed return is observed at `t + 1`.
fn periods(panel: &MacroPanel, assets: &[ReturnKind]) -> Result<Vec<usize>> {
    let mut series = Vec::new();
    for &a in assets {
        series.push(panel.return_series(a)?);
    }
    Ok((1..panel.len().saturating_sub(1))
        .filter(|&t| series.iter().all(|r| r[t + 1].is_finite()))
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct SdfSeries {
    /// Period `t` of each M_{t+1}.
    pub periods: Vec<usize>,
    pub values: Vec<f64>,
}

/// M_{t+1} = β((C_{t+1}−hC_t)/(C_t−hC_{t−1}))^{−ω}(Ξ_{t+1}/Ξ_t) for every
/// period with both neighbours.
pub fn sdf_series(theta: &PreferenceTheta, panel: &MacroPanel) -> Result<SdfSeries> {
    theta.validate()?;
    let periods: Vec<usize> = (1..panel.len().saturating_sub(1)).collect();
    if periods.is_empty() {
        return Err(Error::validation("the SDF needs at least three periods"));
    }
    let values = periods
        .iter()
        .map(|&t| sdf(theta, &observation(panel, t, None, false)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(SdfSeries { periods, values })
}

#[derive(Debug, Clone, Serialize)]
pub struct DistortionSeries {
    pub asset: ReturnKind,
    pub theta: PreferenceTheta,
    pub panel_id: String,
    pub periods: Vec<usize>,
    pub dates: Vec<String>,
    /// Wedge in marginal-utility units.
    pub wedge: Vec<f64>,
    /// Wedge as a share of (C_t − hC_{t−1})^{−ω}.
    pub share: Vec<f64>,
    pub mean_wedge: f64,
    pub mean_share: f64,
}

impl DistortionSeries {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        write_distortions_csv(std::slice::from_ref(self), out)
    }
}

/// Long-format CSV of several distortion series, one row per period.
pub fn write_distortions_csv<W: std::io::Write>(series: &[DistortionSeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["asset", "omega", "eta", "h", "beta", "period", "date", "wedge", "share"])?;
    for s in series {
        let th = &s.theta;
        for i in 0..s.periods.len() {
            w.write_record([
                s.asset.as_str().to_string(),
                th.omega.to_string(),
                th.eta.to_string(),
                th.h.to_string(),
                th.beta.to_string(),
                s.periods[i].to_string(),
                s.dates[i].clone(),
                s.wedge[i].to_string(),
                s.share[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn panel_id(panel: &MacroPanel) -> String {
    panel
        .notes
        .get("id")
        .or_else(|| panel.notes.get("source"))
        .cloned()
        .unwrap_or_default()
}

/// wedge_t = (C_t−hC_{t−1})^{−ω} − β(C_{t+1}−hC_t)^{−ω}(Ξ_{t+1}/Ξ_t)R_{x,t+1}.
pub fn distortions(theta: &PreferenceTheta, panel: &MacroPanel, asset: ReturnKind) -> Result<DistortionSeries> {
    theta.validate()?;
    let periods = periods(panel, &[asset])?;
    if periods.is_empty() {
        return Err(Error::validation(format!("no periods with {} observed", asset.column())));
    }
    let r = panel.return_series(asset)?;
    let vs = panel
        .var_share
        .as_deref()
        .ok_or_else(|| Error::validation("panel lacks var_share; impute it before computing wedges"))?;
    let mut wedge = Vec::with_capacity(periods.len());
    let mut share = Vec::with_capacity(periods.len());
    for &t in &periods {
        let mu_t = marginal_utility(theta, panel, t)?;
        let mu_next = marginal_utility(theta, panel, t + 1)?;
        let xi_t = xi_consumption_at(theta, panel.c[t], panel.c[t - 1], vs[t], t)?;
        let xi_next = xi_consumption_at(theta, panel.c[t + 1], panel.c[t], vs[t + 1], t + 1)?;
        let w = mu_t - theta.beta * mu_next * (xi_next / xi_t) * r[t + 1];
        if !w.is_finite() {
            return Err(Error::Numerical {
                what: format!("{} wedge is not finite", asset.column()),
                period: Some(t),
            });
        }
        wedge.push(w);
        share.push(w / mu_t);
    }
    let n = periods.len() as f64;
    Ok(DistortionSeries {
        asset,
        theta: *theta,
        panel_id: panel_id(panel),
        dates: periods.iter().map(|&t| panel.dates[t].clone()).collect(),
        mean_wedge: wedge.iter().sum::<f64>() / n,
        mean_share: share.iter().sum::<f64>() / n,
        periods,
        wedge,
        share,
    })
}

/// Pointwise range of the wedge share over a parameter set.
#[derive(Debug, Clone, Serialize)]
pub struct DistortionBand {
    pub asset: ReturnKind,
    pub dates: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub mean_share_lo: f64,
    pub mean_share_hi: f64,
}

impl DistortionBand {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "share_lo", "share_hi"])?;
        for i in 0..self.dates.len() {
            w.write_record([self.dates[i].clone(), self.lo[i].to_string(), self.hi[i].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn distortion_band(theta_set: &[PreferenceTheta], panel: &MacroPanel, asset: ReturnKind) -> Result<DistortionBand> {
    if theta_set.is_empty() {
        return Err(Error::validation("parameter set is empty"));
    }
    let all = theta_set
        .par_iter()
        .map(|th| distortions(th, panel, asset))
        .collect::<Result<Vec<_>>>()?;
    let n = all[0].share.len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for s in &all {
        for i in 0..n {
            lo[i] = lo[i].min(s.share[i]);
            hi[i] = hi[i].max(s.share[i]);
        }
    }
    let means = all.iter().map(|s| s.mean_share);
    Ok(DistortionBand {
        asset,
        dates: all[0].dates.clone(),
        lo,
        hi,
        mean_share_lo: means.clone().fold(f64::INFINITY, f64::min),
        mean_share_hi: means.fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiumMode {
    /// Heterogeneity-adjusted SDF and sample-mean wedges.
    WithFrictions,
    /// μ^e = μ^g = 0 and Ξ_t = 1.
    Counterfactual,
}

#[derive(Debug, Clone, Serialize)]
pub struct PremiumPoint {
    pub theta: PreferenceTheta,
    pub cov_m_re: f64,
    /// Mean wedge shares of equity and government bonds.
    pub mu_e: f64,
    pub mu_g: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PremiumInterval {
    pub mode: PremiumMode,
    pub lo: f64,
    pub hi: f64,
    pub points: Vec<PremiumPoint>,
    /// Indices into the parameter set dropped because 1 − μ^g vanished.
    pub excluded: Vec<usize>,
    /// ln(mean R_e / mean R_g) over the same periods.
    pub observed: f64,
}

impl PremiumInterval {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "omega", "eta", "h", "beta", "cov_m_re", "mu_e", "mu_g", "prediction"])?;
        let mode = match self.mode {
            PremiumMode::WithFrictions => "with_frictions",
            PremiumMode::Counterfactual => "counterfactual",
        };
        for p in &self.points {
            w.write_record([
                mode.to_string(),
                p.theta.omega.to_string(),
                p.theta.eta.to_string(),
                p.theta.h.to_string(),
                p.theta.beta.to_string(),
                p.cov_m_re.to_string(),
                p.mu_e.to_string(),
                p.mu_g.to_string(),
                p.prediction.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

/// Copy of the panel with zero consumption dispersion, so Ξ_t = 1.
fn without_dispersion(panel: &MacroPanel) -> MacroPanel {
    let mut p = panel.clone();
    p.var_share = Some(vec![0.0; panel.len()]);
    p
}

fn premium_point(theta: &PreferenceTheta, panel: &MacroPanel, periods: &[usize], mode: PremiumMode) -> Result<PremiumPoint> {
    let re = panel.return_series(ReturnKind::Equity)?;
    let rg = panel.return_series(ReturnKind::Government)?;
    let m = periods
        .iter()
        .map(|&t| sdf(theta, &observation(panel, t, None, false)?))
        .collect::<Result<Vec<_>>>()?;
    let r_e: Vec<f64> = periods.iter().map(|&t| re[t + 1]).collect();
    let r_g: Vec<f64> = periods.iter().map(|&t| rg[t + 1]).collect();
    let cov_m_re = cov(&m, &r_e);
    let (mu_e, mu_g) = match mode {
        PremiumMode::Counterfactual => (0.0, 0.0),
        PremiumMode::WithFrictions => {
            let share = |r: &[f64]| mean(&m.iter().zip(r).map(|(m, r)| 1.0 - m * r).collect::<Vec<_>>());
            (share(&r_e), share(&r_g))
        }
    };
    Ok(PremiumPoint {
        theta: *theta,
        cov_m_re,
        mu_e,
        mu_g,
        prediction: -(cov_m_re + mu_e - mu_g) / (1.0 - mu_g),
    })
}

/// Range over `theta_set` of −[Cov(M, R_e) + μ^e − μ^g]/(1 − μ^g), with μ the
/// mean wedge shares. Points where |1 − μ^g| < 1e-10 are excluded and logged.
pub fn premium_prediction(
    theta_set: &[PreferenceTheta],
    panel: &MacroPanel,
    mode: PremiumMode,
) -> Result<PremiumInterval> {
    if theta_set.is_empty() {
        return Err(Error::validation("parameter set is empty"));
    }
    for th in theta_set {
        th.validate()?;
    }
    let periods = periods(panel, &[ReturnKind::Equity, ReturnKind::Government])?;
    if periods.len() < 2 {
        return Err(Error::validation("premium prediction needs at least two periods with R_e and R_g"));
    }
    let cf;
    let used = match mode {
        PremiumMode::WithFrictions => panel,
        PremiumMode::Counterfactual => {
            cf = without_dispersion(panel);
            &cf
        }
    };
    let results = theta_set
        .par_iter()
        .map(|th| premium_point(th, used, &periods, mode))
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (i, p) in results.into_iter().enumerate() {
        if (1.0 - p.mu_g).abs() < 1e-10 || !p.prediction.is_finite() {
            log::warn!("premium prediction undefined at {:?}: 1 - mu_g = {:.3e}", p.theta, 1.0 - p.mu_g);
            excluded.push(i);
        } else {
            points.push(p);
        }
    }
    if points.is_empty() {
        return Err(Error::numerical("premium prediction undefined at every parameter value"));
    }
    let lo = points.iter().map(|p| p.prediction).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.prediction).fold(f64::NEG_INFINITY, f64::max);
    let re = panel.return_series(ReturnKind::Equity)?;
    let rg = panel.return_series(ReturnKind::Government)?;
    let me = mean(&periods.iter().map(|&t| re[t + 1]).collect::<Vec<_>>());
    let mg = mean(&periods.iter().map(|&t| rg[t + 1]).collect::<Vec<_>>());
    Ok(PremiumInterval {
        mode,
        lo,
        hi,
        points,
        excluded,
        observed: (me / mg).ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WedgeSign {
    /// Positive equity wedge: short-selling or other trading limits dominate.
    TradingConstraints,
    /// Negative equity wedge: net transaction costs dominate.
    TransactionCosts,
    Zero,
}

impl WedgeSign {
    pub fn of(mu: f64) -> Self {
        if mu > 0.0 {
            WedgeSign::TradingConstraints
        } else if mu < 0.0 {
            WedgeSign::TransactionCosts
        } else {
            WedgeSign::Zero
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            WedgeSign::TradingConstraints => "trading constraints",
            WedgeSign::TransactionCosts => "transaction costs",
            WedgeSign::Zero => "none",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BondEquityRewrite {
    /// E[M R^g − 1] + E[μ^g/U′].
    pub bond_residual: f64,
    /// E[M(R^e − R^g)] − E[(μ^g − μ^e)/U′].
    pub equity_residual: f64,
    pub mean_mu_g_share: f64,
    pub mean_mu_e_share: f64,
    /// Sign classification of each period's equity wedge.
    pub equity_tags: Vec<WedgeSign>,
    pub mean_tag: WedgeSign,
}

/// Evaluates both rewritten pricing equations with sample means. They hold
/// by construction, so the residuals measure rounding only.
pub fn bond_equity_rewrite(theta: &PreferenceTheta, panel: &MacroPanel) -> Result<BondEquityRewrite> {
    let g = distortions(theta, panel, ReturnKind::Government)?;
    let e = distortions(theta, panel, ReturnKind::Equity)?;
    let re = panel.return_series(ReturnKind::Equity)?;
    let rg = panel.return_series(ReturnKind::Government)?;
    let common: Vec<usize> = g.periods.iter().copied().filter(|t| e.periods.contains(t)).collect();
    if common.is_empty() {
        return Err(Error::validation("no periods with both R_e and R_g observed"));
    }
    let gi = |t: usize| g.periods.binary_search(&t).unwrap();
    let ei = |t: usize| e.periods.binary_search(&t).unwrap();
    let n = common.len() as f64;
    let (mut bond, mut eq, mut sg, mut se) = (0.0, 0.0, 0.0, 0.0);
    let mut tags = Vec::with_capacity(common.len());
    for &t in &common {
        let m = sdf(theta, &observation(panel, t, None, false)?)?;
        let up = marginal_utility(theta, panel, t)?;
        let (mu_g, mu_e) = (g.wedge[gi(t)], e.wedge[ei(t)]);
        bond += m * rg[t + 1] - 1.0 + mu_g / up;
        eq += m * (re[t + 1] - rg[t + 1]) - (mu_g - mu_e) / up;
        sg += mu_g / up;
        se += mu_e / up;
        tags.push(WedgeSign::of(mu_e));
    }
    Ok(BondEquityRewrite {
        bond_residual: bond / n,
        equity_residual: eq / n,
        mean_mu_g_share: sg / n,
        mean_mu_e_share: se / n,
        equity_tags: tags,
        mean_tag: WedgeSign::of(se / n),
    })
}
