//! Closed-form bounds from the linearized consumption Euler equation and the
//! survey threshold on the probability of being constrained.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Half-open interval `(0, upper]` of admissible values of ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoSet {
    pub upper: f64,
    /// IV slope of consumption growth on consumption, instrumented by income.
    pub rho_iv: f64,
}

impl RhoSet {
    pub fn contains(&self, rho: f64) -> bool {
        rho > 0.0 && rho <= self.upper
    }
}

/// `(0, 1 + cov(y, Δc)/cov(y, c)]`.
pub fn rho_identified_set(cov_y_dc: f64, cov_y_c: f64) -> Result<RhoSet> {
    if !(cov_y_c > 0.0) || !cov_y_dc.is_finite() {
        return Err(Error::validation("cov(y, c) must be positive and cov(y, dc) finite"));
    }
    let rho_iv = cov_y_dc / cov_y_c;
    Ok(RhoSet {
        upper: 1.0 + rho_iv,
        rho_iv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaBound {
    /// β(1+r) = 1: consumption is a random walk and any ω > 0 fits.
    Unidentified,
    /// ω < value.
    Upper { value: f64 },
}

impl OmegaBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            OmegaBound::Unidentified => None,
            OmegaBound::Upper { value } => Some(*value),
        }
    }
}

/// Upper bound on ω: `|log β(1+r)| / log(cov(y,c) / (cov(y,c) − |cov(y,Δc)|))`.
pub fn omega_upper_bound(beta: f64, r: f64, cov_y_c: f64, cov_y_dc: f64) -> Result<OmegaBound> {
    let gross = beta * (1.0 + r);
    if !(gross > 0.0 && gross.is_finite()) {
        return Err(Error::validation("beta (1 + r) must be positive"));
    }
    if (gross - 1.0).abs() < 1e-12 {
        return Ok(OmegaBound::Unidentified);
    }
    if gross > 1.0 {
        return Err(Error::validation("omega bound needs an impatient household, beta (1 + r) < 1"));
    }
    let a = cov_y_dc.abs();
    if !(a > 0.0 && a < cov_y_c) {
        return Err(Error::validation("need 0 < |cov(y, dc)| < cov(y, c)"));
    }
    Ok(OmegaBound::Upper {
        value: gross.ln().abs() / (cov_y_c / (cov_y_c - a)).ln(),
    })
}

/// Inputs of the survey threshold at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdInputs {
    pub v: f64,
    pub c: f64,
    pub rho: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub sigma_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub g: f64,
    /// Set when the two normal arguments of the denominator coincide.
    pub degenerate: bool,
}

/// Threshold g with Normal(0, σ_ε) forecast errors:
///
/// ```text
/// g = [Φ(v − (ρ−1)c) − Φ(v − ρ_IV c)] / [Φ(v − (ρ−1)c) − Φ(v − λ₀ − (ρ−1+λ₁)c)]
/// ```
///
/// A degenerate denominator returns the frictionless limit when the
/// numerator also vanishes and 0 otherwise, flagged.
pub fn threshold_g(
    v: f64,
    c: f64,
    rho: f64,
    rho_iv: f64,
    lambda0: f64,
    lambda1: f64,
    sigma_eps: f64,
) -> Result<Threshold> {
    if !(sigma_eps > 0.0) {
        return Err(Error::validation("sigma_eps must be positive"));
    }
    let phi = Normal::new(0.0, sigma_eps).map_err(|e| Error::validation(e.to_string()))?;
    let base = v - (rho - 1.0) * c;
    let iv = v - rho_iv * c;
    let con = v - lambda0 - (rho - 1.0 + lambda1) * c;
    let num = phi.cdf(base) - phi.cdf(iv);
    let den = phi.cdf(base) - phi.cdf(con);
    if den == 0.0 || base == con {
        return Ok(Threshold {
            g: 0.0,
            degenerate: true,
        });
    }
    Ok(Threshold {
        g: num / den,
        degenerate: false,
    })
}

/// IV slope when a share `p` of households is constrained and the
/// distortion among them is `λ₁c + λ₀` at consumption `c`.
pub fn iv_slope(rho: f64, p: f64, lambda0: f64, lambda1: f64, c: f64) -> f64 {
    rho - 1.0 + p * (lambda1 + lambda0 / c)
}

/// g as a function of the constrained probability p, with ρ_IV from [`iv_slope`].
pub fn threshold_at(inputs: &ThresholdInputs, p: f64) -> Result<Threshold> {
    let ThresholdInputs {
        v,
        c,
        rho,
        lambda0,
        lambda1,
        sigma_eps,
    } = *inputs;
    let rho_iv = iv_slope(rho, p, lambda0, lambda1, c);
    threshold_g(v, c, rho, rho_iv, lambda0, lambda1, sigma_eps)
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementCurve {
    pub p: Vec<f64>,
    pub g: Vec<f64>,
}

impl RefinementCurve {
    /// Area between g and the diagonal where g exceeds p.
    pub fn band_area(&self) -> f64 {
        let gap: Vec<f64> = self.p.iter().zip(&self.g).map(|(p, g)| (g - p).max(0.0)).collect();
        self.p
            .windows(2)
            .zip(gap.windows(2))
            .map(|(p, d)| 0.5 * (p[1] - p[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Share of grid points with p > g, where the survey excludes ρ_IV.
    pub fn excluded_share(&self) -> f64 {
        let n = self.p.iter().zip(&self.g).filter(|(p, g)| p > g).count();
        n as f64 / self.p.len() as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "g"])?;
        for (p, g) in self.p.iter().zip(&self.g) {
            w.write_record([p.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// g on `n` evenly spaced probabilities in [0, 1].
pub fn refinement_curve(inputs: &ThresholdInputs, n: usize) -> Result<RefinementCurve> {
    if n < 2 {
        return Err(Error::validation("refinement curve needs at least two points"));
    }
    let p: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let g = p
        .iter()
        .map(|&pi| threshold_at(inputs, pi).map(|t| t.g))
        .collect::<Result<Vec<_>>>()?;
    Ok(RefinementCurve { p, g })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_walk_boundary() {
        let s = rho_identified_set(0.0, 0.3).unwrap();
        assert_eq!(s.upper, 1.0);
        assert!(s.contains(1.0) && !s.contains(0.0));
        assert!(rho_identified_set(0.1, 0.0).is_err());
    }

    #[test]
    fn omega_bound_hand_value() {
        let b = omega_upper_bound(0.96, 0.02, 0.1, -0.03).unwrap().value().unwrap();
        let expect = (0.96f64 * 1.02).ln().abs() / (0.1f64 / 0.07).ln();
        assert!((b - expect).abs() < 1e-15);
        assert_eq!(omega_upper_bound(1.0 / 1.02, 0.02, 0.1, -0.03).unwrap(), OmegaBound::Unidentified);
        assert!(omega_upper_bound(0.99, 0.05, 0.1, -0.03).is_err());
        assert!(omega_upper_bound(0.96, 0.02, 0.1, -0.2).is_err());
    }

    #[test]
    fn threshold_boundaries() {
        let inp = ThresholdInputs {
            v: 0.0,
            c: 1.0,
            rho: 0.98,
            lambda0: 1.0,
            lambda1: -0.98,
            sigma_eps: 0.1,
        };
        assert_eq!(threshold_at(&inp, 0.0).unwrap().g, 0.0);
        assert!((threshold_at(&inp, 1.0).unwrap().g - 1.0).abs() < 1e-15);
        assert!(threshold_g(0.0, 1.0, 0.9, 0.1, 0.0, 0.0, 0.1).unwrap().degenerate);
        assert!(threshold_g(0.0, 1.0, 0.9, 0.1, 0.0, 0.0, 0.0).is_err());
    }
}
