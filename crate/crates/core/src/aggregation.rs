//! Second-order aggregation residuals and the pointwise aggregated
//! Euler and intratemporal moment functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural preference parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTheta {
    /// Relative risk aversion.
    pub omega: f64,
    /// Inverse Frisch elasticity.
    pub eta: f64,
    /// External habit.
    pub h: f64,
    /// Discount factor.
    pub beta: f64,
}

impl PreferenceTheta {
    pub fn new(omega: f64, eta: f64, h: f64, beta: f64) -> Result<Self> {
        let theta = PreferenceTheta {
            omega,
            eta,
            h,
            beta,
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.omega.is_finite()
            && self.omega > 0.0
            && self.eta.is_finite()
            && self.eta > 0.0
            && self.h.is_finite()
            && (0.0..1.0).contains(&self.h)
            && self.beta.is_finite()
            && self.beta > 0.0
            && self.beta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "preference parameters out of bounds: {self:?} \
                 (need omega > 0, eta > 0, h in [0,1), beta in (0,1))"
            )))
        }
    }
}

/// Labor-market block of an observation, needed by the intratemporal moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaborObs {
    pub l_t: f64,
    pub l_next: f64,
    pub w_t: f64,
    pub w_next: f64,
}

/// Everything the pointwise moment functions read at date `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateObs {
    /// Period index, used only for error reporting.
    pub period: usize,
    pub c_prev: f64,
    pub c_t: f64,
    pub c_next: f64,
    pub labor: Option<LaborObs>,
    /// Gross real return realized at `t + 1`.
    pub r_next: f64,
    pub var_share_t: f64,
    pub var_share_next: f64,
    pub b_t: Option<f64>,
}

fn habit_gap(h: f64, c_t: f64, c_prev: f64, period: usize) -> Result<f64> {
    let gap = c_t - h * c_prev;
    if gap > 0.0 && gap.is_finite() {
        Ok(gap)
    } else {
        Err(Error::Domain {
            what: format!("habit-adjusted consumption C_t - h C_(t-1) = {gap:.6e} is not positive"),
            period,
        })
    }
}

fn check_var(v: f64, period: usize) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: format!("consumption-share variance {v} is negative or not finite"),
            period,
        })
    }
}

/// (1 - h C_{t-1}/C_t)^{-2}, the habit amplification of the dispersion term.
fn habit_factor(theta: &PreferenceTheta, c_t: f64, c_prev: f64, period: usize) -> Result<f64> {
    let gap = habit_gap(theta.h, c_t, c_prev, period)?;
    let ratio = gap / c_t;
    Ok(ratio.powi(-2))
}

/// Consumption aggregation residual Ξ_t.
pub fn xi_consumption(
    theta: &PreferenceTheta,
    c_t: f64,
    c_prev: f64,
    var_share_t: f64,
) -> Result<f64> {
    xi_consumption_at(theta, c_t, c_prev, var_share_t, 0)
}

pub(crate) fn xi_consumption_at(
    theta: &PreferenceTheta,
    c_t: f64,
    c_prev: f64,
    var_share_t: f64,
    period: usize,
) -> Result<f64> {
    check_var(var_share_t, period)?;
    let f = habit_factor(theta, c_t, c_prev, period)?;
    let w = theta.omega * (theta.omega + 1.0) / 2.0;
    Ok(1.0 + w * f * var_share_t)
}

/// Labor-side aggregation residual Ξ^lab_t.
pub fn xi_labor(theta: &PreferenceTheta, c_t: f64, c_prev: f64, var_share_t: f64) -> Result<f64> {
    xi_labor_at(theta, c_t, c_prev, var_share_t, 0)
}

pub(crate) fn xi_labor_at(
    theta: &PreferenceTheta,
    c_t: f64,
    c_prev: f64,
    var_share_t: f64,
    period: usize,
) -> Result<f64> {
    check_var(var_share_t, period)?;
    let f = habit_factor(theta, c_t, c_prev, period)?;
    let w = theta.omega * (theta.eta + theta.omega) / (2.0 * theta.eta * theta.eta);
    Ok(1.0 + w * f * var_share_t)
}

/// Ξ_{t+1} / Ξ_t.
fn xi_ratio(theta: &PreferenceTheta, obs: &AggregateObs) -> Result<f64> {
    let xi_t = xi_consumption_at(theta, obs.c_t, obs.c_prev, obs.var_share_t, obs.period)?;
    let xi_next = xi_consumption_at(
        theta,
        obs.c_next,
        obs.c_t,
        obs.var_share_next,
        obs.period + 1,
    )?;
    Ok(xi_next / xi_t)
}

/// (C_{t+1} - h C_t) / (C_t - h C_{t-1}).
fn habit_growth(theta: &PreferenceTheta, obs: &AggregateObs) -> Result<f64> {
    let g_t = habit_gap(theta.h, obs.c_t, obs.c_prev, obs.period)?;
    let g_next = habit_gap(theta.h, obs.c_next, obs.c_t, obs.period + 1)?;
    Ok(g_next / g_t)
}

fn check_return(obs: &AggregateObs) -> Result<()> {
    if obs.r_next > 0.0 && obs.r_next.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: format!("gross return {} is not positive", obs.r_next),
            period: obs.period + 1,
        })
    }
}

/// Heterogeneity-adjusted stochastic discount factor M_{t+1}.
pub fn sdf(theta: &PreferenceTheta, obs: &AggregateObs) -> Result<f64> {
    Ok(theta.beta * habit_growth(theta, obs)?.powf(-theta.omega) * xi_ratio(theta, obs)?)
}

/// Aggregated Euler moment 1 - M_{t+1} R_{t+1}.
pub fn euler_moment(theta: &PreferenceTheta, obs: &AggregateObs) -> Result<f64> {
    check_return(obs)?;
    Ok(1.0 - sdf(theta, obs)? * obs.r_next)
}

/// (Ξ^lab_t / Ξ^lab_{t+1})^η (L_{t+1}/L_t)^η (W_t / W_{t+1}).
fn labor_block(theta: &PreferenceTheta, obs: &AggregateObs) -> Result<f64> {
    let lab = obs.labor.ok_or_else(|| {
        Error::validation("intratemporal moments need hours and wages in the panel")
    })?;
    for (v, name, p) in [
        (lab.l_t, "hours", obs.period),
        (lab.l_next, "hours", obs.period + 1),
        (lab.w_t, "wage", obs.period),
        (lab.w_next, "wage", obs.period + 1),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain {
                what: format!("{name} level {v} is not positive"),
                period: p,
            });
        }
    }
    let xl_t = xi_labor_at(theta, obs.c_t, obs.c_prev, obs.var_share_t, obs.period)?;
    let xl_next = xi_labor_at(theta, obs.c_next, obs.c_t, obs.var_share_next, obs.period + 1)?;
    let eta = theta.eta;
    Ok((xl_t / xl_next).powf(eta) * (lab.l_next / lab.l_t).powf(eta) * (lab.w_t / lab.w_next))
}

/// Combined Euler-intratemporal moment
/// 1 - β (Ξ_{t+1}/Ξ_t) (Ξ^lab_t/Ξ^lab_{t+1})^η (L_{t+1}/L_t)^η (W_t/W_{t+1}) R_{t+1}.
pub fn intratemporal_moment(theta: &PreferenceTheta, obs: &AggregateObs) -> Result<f64> {
    check_return(obs)?;
    let lab = labor_block(theta, obs)?;
    Ok(1.0 - theta.beta * xi_ratio(theta, obs)? * lab * obs.r_next)
}

/// Equality form of the intratemporal condition: habit growth^{-ω} minus the labor block.
pub fn intratemporal_equality(theta: &PreferenceTheta, obs: &AggregateObs) -> Result<f64> {
    let lab = labor_block(theta, obs)?;
    Ok(habit_growth(theta, obs)?.powf(-theta.omega) - lab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn theta(omega: f64, eta: f64, h: f64, beta: f64) -> PreferenceTheta {
        PreferenceTheta::new(omega, eta, h, beta).unwrap()
    }

    fn flat_obs(r: f64) -> AggregateObs {
        AggregateObs {
            period: 5,
            c_prev: 1.0,
            c_t: 1.0,
            c_next: 1.0,
            labor: Some(LaborObs {
                l_t: 0.3,
                l_next: 0.3,
                w_t: 2.0,
                w_next: 2.0,
            }),
            r_next: r,
            var_share_t: 0.0,
            var_share_next: 0.0,
            b_t: None,
        }
    }

    #[test]
    fn xi_hand_values() {
        assert_eq!(xi_consumption(&theta(1.3, 1.0, 0.4, 0.9), 1.0, 0.9, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            xi_consumption(&theta(1.0, 1.0, 0.0, 0.9), 1.0, 1.0, 0.25).unwrap(),
            1.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            xi_consumption(&theta(2.0, 1.0, 0.5, 0.9), 1.0, 1.0, 0.1).unwrap(),
            2.2,
            epsilon = 1e-14
        );
    }

    #[test]
    fn xi_labor_hand_values() {
        assert_eq!(xi_labor(&theta(2.0, 0.5, 0.3, 0.9), 1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            xi_labor(&theta(1.0, 1.0, 0.0, 0.9), 1.0, 1.0, 0.2).unwrap(),
            1.2,
            epsilon = 1e-15
        );
        let big_eta = xi_labor(&theta(3.0, 1e12, 0.2, 0.9), 1.0, 1.0, 0.7).unwrap();
        assert_abs_diff_eq!(big_eta, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn nonpositive_habit_gap_names_period() {
        let th = theta(2.0, 1.0, 0.9, 0.95);
        let mut obs = flat_obs(1.0);
        obs.c_prev = 1.2;
        match euler_moment(&th, &obs) {
            Err(Error::Domain { period, .. }) => assert_eq!(period, 5),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn euler_hand_values() {
        let th = theta(1.5, 1.0, 0.0, 0.97);
        assert_abs_diff_eq!(euler_moment(&th, &flat_obs(1.0 / 0.97)).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(euler_moment(&th, &flat_obs(1.02)).unwrap(), 0.0106, epsilon = 1e-14);
    }

    #[test]
    fn intratemporal_steady_state_is_zero() {
        let th = theta(1.5, 2.0, 0.3, 0.97);
        assert_abs_diff_eq!(
            intratemporal_moment(&th, &flat_obs(1.0 / 0.97)).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(intratemporal_equality(&th, &flat_obs(1.0)).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn intratemporal_without_dispersion_is_representative_agent() {
        let th = theta(1.5, 2.0, 0.0, 0.97);
        let mut obs = flat_obs(1.03);
        obs.labor = Some(LaborObs {
            l_t: 0.3,
            l_next: 0.31,
            w_t: 2.0,
            w_next: 2.05,
        });
        let ra = 1.0 - 0.97 * (0.31f64 / 0.3).powf(2.0) * (2.0 / 2.05) * 1.03;
        assert_abs_diff_eq!(intratemporal_moment(&th, &obs).unwrap(), ra, epsilon = 1e-15);
    }

    #[test]
    fn offsetting_labor_and_wage_growth() {
        let th = theta(3.7, 1.0, 0.0, 0.97);
        let mut obs = flat_obs(1.0);
        obs.labor = Some(LaborObs {
            l_t: 1.0,
            l_next: 1.01,
            w_t: 1.0,
            w_next: 1.01,
        });
        assert_abs_diff_eq!(intratemporal_equality(&th, &obs).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn missing_labor_is_validation_error() {
        let mut obs = flat_obs(1.0);
        obs.labor = None;
        assert!(matches!(
            intratemporal_moment(&theta(1.0, 1.0, 0.0, 0.9), &obs),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn rejects_out_of_box_theta() {
        assert!(PreferenceTheta::new(0.0, 1.0, 0.0, 0.9).is_err());
        assert!(PreferenceTheta::new(1.0, 1.0, 1.0, 0.9).is_err());
        assert!(PreferenceTheta::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(PreferenceTheta::new(1.0, f64::NAN, 0.0, 0.9).is_err());
    }

    proptest! {
        #[test]
        fn xi_monotone_in_dispersion(
            omega in 0.1f64..6.0, eta in 0.01f64..10.0, h in 0.0f64..0.9,
            g in 0.95f64..1.05, v1 in 0.0f64..1.0, dv in 0.0f64..1.0,
        ) {
            let th = theta(omega, eta, h, 0.97);
            let a = xi_consumption(&th, g, 1.0, v1).unwrap();
            let b = xi_consumption(&th, g, 1.0, v1 + dv).unwrap();
            prop_assert!(a >= 1.0 && b >= a);
            let a = xi_labor(&th, g, 1.0, v1).unwrap();
            let b = xi_labor(&th, g, 1.0, v1 + dv).unwrap();
            prop_assert!(a >= 1.0 && b >= a);
        }

        #[test]
        fn euler_reduces_to_representative_agent(
            omega in 0.1f64..6.0, beta in 0.9f64..0.999,
            c0 in 0.5f64..2.0, c1 in 0.5f64..2.0, c2 in 0.5f64..2.0, r in 0.9f64..1.1,
        ) {
            let th = theta(omega, 1.0, 0.0, beta);
            let obs = AggregateObs {
                period: 0, c_prev: c0, c_t: c1, c_next: c2, labor: None, r_next: r,
                var_share_t: 0.0, var_share_next: 0.0, b_t: None,
            };
            let ra = 1.0 - beta * (c2 / c1).powf(-omega) * r;
            prop_assert!((euler_moment(&th, &obs).unwrap() - ra).abs() <= 1e-14);
        }

        #[test]
        fn moments_smooth_in_theta(
            omega in 0.2f64..5.0, eta in 0.2f64..5.0, h in 0.001f64..0.8, beta in 0.9f64..0.99,
            v0 in 0.0f64..0.3, v1 in 0.0f64..0.3,
        ) {
            let obs = AggregateObs {
                period: 0, c_prev: 1.0, c_t: 1.01, c_next: 1.015,
                labor: Some(LaborObs { l_t: 0.3, l_next: 0.302, w_t: 1.0, w_next: 1.004 }),
                r_next: 1.01, var_share_t: v0, var_share_next: v1, b_t: None,
            };
            let eval = |f: fn(&PreferenceTheta, &AggregateObs) -> Result<f64>, d: f64| {
                f(&theta(omega + d, eta + d, h + d, beta + d), &obs).unwrap()
            };
            let s = 1e-6;
            for f in [euler_moment, intratemporal_moment, intratemporal_equality] {
                let vals = [eval(f, -2.0 * s), eval(f, -s), eval(f, 0.0), eval(f, s), eval(f, 2.0 * s)];
                prop_assert!(vals.iter().all(|v| v.is_finite()));
                let d1 = (vals[3] - vals[1]) / (2.0 * s);
                let d2 = (vals[4] - vals[0]) / (4.0 * s);
                prop_assert!((d1 - d2).abs() <= 1e-3 * (1.0 + d1.abs()), "{d1} vs {d2}");
            }
        }
    }
}
