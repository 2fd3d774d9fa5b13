use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregate state index: 0 is the good state, 1 the bad state.
pub const GOOD: usize = 0;
pub const BAD: usize = 1;

/// Joint state index for aggregate state `z` and employment `e` (0 unemployed, 1 employed).
pub fn joint(z: usize, e: usize) -> usize {
    2 * z + e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSParams {
    pub beta: f64,
    /// CRRA coefficient.
    pub omega: f64,
    pub alpha: f64,
    pub delta: f64,
    pub z_good: f64,
    pub z_bad: f64,
    /// Unemployment benefit as a fraction of the wage.
    pub nu: f64,
    pub l_bar: f64,
    pub u_good: f64,
    pub u_bad: f64,
    /// Rows and columns ordered (good,unemp), (good,emp), (bad,unemp), (bad,emp).
    pub transition: [[f64; 4]; 4],
    pub borrow_limit: f64,
}

/// Expected durations used to build the standard transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Durations {
    pub aggregate: f64,
    pub unemployment_good: f64,
    pub unemployment_bad: f64,
}

impl Default for Durations {
    fn default() -> Self {
        Durations {
            aggregate: 8.0,
            unemployment_good: 1.5,
            unemployment_bad: 2.5,
        }
    }
}

/// Standard calibration of the joint transition: aggregate states last
/// `aggregate` periods on average, unemployment spells last 1.5 (good) and
/// 2.5 (bad) periods, switching probabilities of staying unemployed are
/// scaled by 1.25 (good to bad) and 0.75 (bad to good), and employed rows
/// are pinned by the requirement that u(z') follows from u(z).
pub fn standard_transition(u_good: f64, u_bad: f64, d: Durations) -> [[f64; 4]; 4] {
    let u = [u_good, u_bad];
    let stay = 1.0 - 1.0 / d.aggregate;
    let pz = [[stay, 1.0 - stay], [1.0 - stay, stay]];
    let uu_gg = 1.0 - 1.0 / d.unemployment_good;
    let uu_bb = 1.0 - 1.0 / d.unemployment_bad;
    let uu = [[uu_gg, 1.25 * uu_bb], [0.75 * uu_gg, uu_bb]];
    let mut p = [[0.0; 4]; 4];
    for z in 0..2 {
        for zn in 0..2 {
            let p_zz = pz[z][zn];
            let p_uu = uu[z][zn];
            p[joint(z, 0)][joint(zn, 0)] = p_zz * p_uu;
            p[joint(z, 0)][joint(zn, 1)] = p_zz * (1.0 - p_uu);
            let p_eu = if u[z] < 1.0 {
                (u[zn] - u[z] * p_uu) / (1.0 - u[z])
            } else {
                0.0
            };
            p[joint(z, 1)][joint(zn, 0)] = p_zz * p_eu;
            p[joint(z, 1)][joint(zn, 1)] = p_zz * (1.0 - p_eu);
        }
    }
    p
}

impl KSParams {
    /// Calibration of the simulation study with the standard transition.
    pub fn benchmark() -> Self {
        KSParams {
            beta: 0.97,
            omega: 1.5,
            alpha: 0.36,
            delta: 0.025,
            z_good: 1.01,
            z_bad: 0.99,
            nu: 0.15,
            l_bar: 1.0 / 0.9,
            u_good: 0.04,
            u_bad: 0.10,
            transition: standard_transition(0.04, 0.10, Durations::default()),
            borrow_limit: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::validation(format!("KS parameters: {msg}")));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("omega must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta must lie in (0, 1]");
        }
        if !(self.z_good > 0.0 && self.z_bad > 0.0) {
            return bad("productivity levels must be positive");
        }
        if self.z_good < self.z_bad {
            return bad("z_good must be at least z_bad");
        }
        if !((0.0..1.0).contains(&self.u_good) && (0.0..1.0).contains(&self.u_bad)) {
            return bad("unemployment rates must lie in [0, 1)");
        }
        if self.u_bad < self.u_good {
            return bad("the bad state must carry the higher unemployment rate");
        }
        if !(self.nu >= 0.0 && self.l_bar > 0.0) {
            return bad("nu must be nonnegative and l_bar positive");
        }
        if !self.borrow_limit.is_finite() {
            return bad("borrow_limit must be finite");
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return bad(&format!("transition row {i} has a negative entry"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return bad(&format!("transition row {i} sums to {s}"));
            }
        }
        // The aggregate chain must not depend on individual employment.
        for z in 0..2 {
            for zn in 0..2 {
                let a = self.p_agg_from(joint(z, 0), zn);
                let b = self.p_agg_from(joint(z, 1), zn);
                if (a - b).abs() > 1e-12 {
                    return bad("aggregate transition depends on employment status");
                }
            }
        }
        Ok(())
    }

    fn p_agg_from(&self, s: usize, zn: usize) -> f64 {
        self.transition[s][joint(zn, 0)] + self.transition[s][joint(zn, 1)]
    }

    /// P(z' | z).
    pub fn p_agg(&self, z: usize, zn: usize) -> f64 {
        self.p_agg_from(joint(z, 1), zn)
    }

    /// P(e' = employed | e, z, z').
    pub fn p_employed(&self, e: usize, z: usize, zn: usize) -> f64 {
        let pz = self.p_agg_from(joint(z, e), zn);
        if pz > 0.0 {
            self.transition[joint(z, e)][joint(zn, 1)] / pz
        } else {
            1.0 - self.unemployment(zn)
        }
    }

    pub fn productivity(&self, z: usize) -> f64 {
        if z == GOOD {
            self.z_good
        } else {
            self.z_bad
        }
    }

    pub fn unemployment(&self, z: usize) -> f64 {
        if z == GOOD {
            self.u_good
        } else {
            self.u_bad
        }
    }

    /// Effective labor input l̄·L with L = 1 − u.
    pub fn labor_input(&self, z: usize) -> f64 {
        self.l_bar * (1.0 - self.unemployment(z))
    }

    pub fn prices(&self, z: usize, k_agg: f64) -> Prices {
        let zp = self.productivity(z);
        let ratio = k_agg / self.labor_input(z);
        let r = zp * self.alpha * ratio.powf(self.alpha - 1.0);
        let w = zp * (1.0 - self.alpha) * ratio.powf(self.alpha);
        let tau = self.nu * self.unemployment(z) / self.labor_input(z);
        Prices { r, w, tau }
    }

    /// Non-capital income of an agent with employment `e`.
    pub fn income(&self, p: &Prices, e: usize) -> f64 {
        if e == 1 {
            (1.0 - p.tau) * p.w * self.l_bar
        } else {
            self.nu * p.w
        }
    }

    pub fn marginal_utility(&self, c: f64) -> f64 {
        c.powf(-self.omega)
    }

    /// Representative-agent steady-state capital at average productivity.
    pub fn representative_capital(&self) -> f64 {
        let r = 1.0 / self.beta - 1.0 + self.delta;
        let z = 0.5 * (self.z_good + self.z_bad);
        let lab = 0.5 * (self.labor_input(GOOD) + self.labor_input(BAD));
        lab * (self.alpha * z / r).powf(1.0 / (1.0 - self.alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prices {
    /// Rental rate of capital.
    pub r: f64,
    pub w: f64,
    pub tau: f64,
}
