//! Exogenous-income consumption-savings problem with a no-borrowing limit,
//! solved by value function iteration on cash on hand.
//!
//! Cash on hand evolves as `x' = (1+r)(x − c) + y'` with `y'` iid.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::golden_max;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeDist {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl IncomeDist {
    pub fn two_point(low: f64, high: f64, p_low: f64) -> IncomeDist {
        IncomeDist {
            values: vec![low, high],
            probs: vec![p_low, 1.0 - p_low],
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(y, p)| y * p).sum()
    }

    /// P(y ≤ x).
    pub fn cdf(&self, x: f64) -> f64 {
        self.values.iter().zip(&self.probs).filter(|(y, _)| **y <= x).map(|(_, p)| p).sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.probs.len() {
            return Err(Error::validation("income support and probabilities differ in length"));
        }
        if self.values.iter().any(|&y| !(y > 0.0)) {
            return Err(Error::validation("income support must be positive"));
        }
        if self.probs.iter().any(|&p| !(p > 0.0)) || (self.probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::validation("income probabilities must be positive and sum to one"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub beta: f64,
    pub omega: f64,
    pub r: f64,
    pub income: IncomeDist,
    pub n_grid: usize,
    pub x_max: f64,
}

impl ToyModel {
    pub fn validate(&self) -> Result<()> {
        self.income.validate()?;
        if !(self.beta > 0.0 && self.beta < 1.0 && self.omega > 0.0 && self.r > -1.0) {
            return Err(Error::validation("toy model needs beta in (0,1), omega > 0, r > -1"));
        }
        if self.beta * (1.0 + self.r) >= 1.0 {
            return Err(Error::validation("toy model needs beta (1 + r) < 1 for a stationary solution"));
        }
        if self.n_grid < 10 || !(self.x_max > self.income.min()) {
            return Err(Error::validation("cash-on-hand grid must have >= 10 points above the lowest income"));
        }
        Ok(())
    }

    /// (β(1+r))^{1/ω}.
    pub fn rho(&self) -> f64 {
        (self.beta * (1.0 + self.r)).powf(1.0 / self.omega)
    }

    /// (1 + r − ρ)/(1 + r).
    pub fn mpc(&self) -> f64 {
        (1.0 + self.r - self.rho()) / (1.0 + self.r)
    }

    pub fn mean_income(&self) -> f64 {
        self.income.mean()
    }

    /// Perfect-foresight consumption `mpc·(x + ȳ/r)`.
    pub fn perfect_foresight(&self, x: f64) -> f64 {
        self.mpc() * (x + self.mean_income() / self.r)
    }

    fn utility(&self, c: f64) -> f64 {
        if (self.omega - 1.0).abs() < 1e-12 {
            c.ln()
        } else {
            (c.powf(1.0 - self.omega) - 1.0) / (1.0 - self.omega)
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let lo = self.income.min();
        (0..self.n_grid)
            .map(|i| lo + (self.x_max - lo) * i as f64 / (self.n_grid - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ToyPolicy {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub value: Vec<f64>,
    /// Grid points where the optimum is the corner `c = x`.
    pub constrained: Vec<bool>,
    pub iterations: usize,
    pub sup_change: f64,
}

fn interp(x: &[f64], y: &[f64], at: f64) -> f64 {
    let n = x.len();
    let h = (x[n - 1] - x[0]) / (n - 1) as f64;
    let i = (((at - x[0]) / h).floor() as isize).clamp(0, n as isize - 2) as usize;
    let w = (at - x[i]) / (x[i + 1] - x[i]);
    y[i] + w * (y[i + 1] - y[i])
}

impl ToyPolicy {
    /// Consumption at `x`, linear between grid points and extrapolated outside.
    /// Returns `x` itself up to the last constrained grid point.
    pub fn consumption(&self, x: f64) -> f64 {
        if let Some(xs) = self.x_star() {
            if x <= xs {
                return x;
            }
        }
        interp(&self.x, &self.c, x).min(x)
    }

    /// Largest grid point with `c(x) = x`.
    pub fn x_star(&self) -> Option<f64> {
        self.constrained.iter().rposition(|&b| b).map(|i| self.x[i])
    }

    /// Least-squares slope of `c` over grid points in `[lo, hi]`.
    pub fn slope_between(&self, lo: f64, hi: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .x
            .iter()
            .zip(&self.c)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(x, c)| (*x, *c))
            .collect();
        if pts.len() < 2 {
            return Err(Error::validation("slope window contains fewer than two grid points"));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Ok(sxy / sxx)
    }

    pub fn write_csv<W: std::io::Write>(&self, model: &ToyModel, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "c", "c_unconstrained_line", "c_perfect_foresight", "constrained"])?;
        for i in 0..self.x.len() {
            w.write_record([
                self.x[i].to_string(),
                self.c[i].to_string(),
                (model.mpc() * self.x[i]).to_string(),
                model.perfect_foresight(self.x[i]).to_string(),
                (self.constrained[i] as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn expected_value(model: &ToyModel, x: &[f64], v: &[f64], s: f64) -> f64 {
    let gross = 1.0 + model.r;
    model
        .income
        .values
        .iter()
        .zip(&model.income.probs)
        .map(|(y, p)| p * interp(x, v, gross * s + y))
        .sum()
}

/// Value function iteration with golden-section search over savings and
/// policy-evaluation sweeps between maximizations.
pub fn solve_toy_model(model: &ToyModel, tol: f64, max_iter: usize) -> Result<ToyPolicy> {
    model.validate()?;
    let x = model.grid();
    let n = x.len();
    let beta = model.beta;
    let mut v: Vec<f64> = x.iter().map(|&xi| model.utility(model.mpc() * xi) / (1.0 - beta)).collect();
    let mut s = vec![0.0; n];
    let mut sup = f64::INFINITY;
    for it in 1..=max_iter {
        let maximized: Vec<(f64, f64)> = x
            .par_iter()
            .map(|&xi| {
                let hi = xi * (1.0 - 1e-9);
                golden_max(
                    |si| model.utility(xi - si) + beta * expected_value(model, &x, &v, si),
                    0.0,
                    hi,
                    1e-11 * xi.max(1.0),
                )
            })
            .collect();
        let v_new: Vec<f64> = maximized.iter().map(|m| m.1).collect();
        sup = v_new.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for i in 0..n {
            s[i] = maximized[i].0;
        }
        v = v_new;
        if sup < tol {
            return Ok(ToyPolicy {
                c: x.iter().zip(&s).map(|(xi, si)| xi - si).collect(),
                constrained: s.iter().map(|&si| si == 0.0).collect(),
                x,
                value: v,
                iterations: it,
                sup_change: sup,
            });
        }
        // Policy evaluation at fixed savings accelerates the value iteration.
        for _ in 0..50 {
            let flow: Vec<f64> = (0..n)
                .map(|i| model.utility(x[i] - s[i]) + beta * expected_value(model, &x, &v, s[i]))
                .collect();
            v = flow;
        }
    }
    Err(Error::NonConvergence {
        what: "toy model value function iteration".into(),
        iterations: max_iter,
        last_sup: sup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaCoefficients {
    pub lambda1: f64,
    pub lambda0: f64,
    pub x_star: f64,
    /// P(y ≤ x*), the probability of being constrained next period.
    pub prob_constrained: f64,
    /// E[c(y')], the expected consumption after a constrained period.
    pub lambda0_exact: f64,
}

/// `λ₁ = −ρ` and `λ₀ = ȳ[1 − (ρ/(1+r))(1 − F_y(x*))]`.
pub fn lambda_coefficients(model: &ToyModel, policy: &ToyPolicy) -> Result<LambdaCoefficients> {
    let x_star = policy.x_star().ok_or_else(|| {
        Error::validation("no constrained region on the grid; lower beta or tighten the borrowing limit")
    })?;
    let rho = model.rho();
    let f = model.income.cdf(x_star);
    let lambda0_exact = model
        .income
        .values
        .iter()
        .zip(&model.income.probs)
        .map(|(y, p)| p * policy.consumption(*y))
        .sum();
    Ok(LambdaCoefficients {
        lambda1: -rho,
        lambda0: model.mean_income() * (1.0 - rho / (1.0 + model.r) * (1.0 - f)),
        x_star,
        prob_constrained: f,
        lambda0_exact,
    })
}

/// Simulated household panel with the growth decomposition
/// `Δc = (ρ−1)c + ε + 1(constrained)(λ₁c + λ₀) + φ`, where `ε` is the
/// forecast error of next-period consumption and `φ` collects the rest.
#[derive(Debug, Clone, Default, Serialize)]
pub struct HallPanel {
    pub household: Vec<usize>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub dc: Vec<f64>,
    pub constrained: Vec<bool>,
    pub eps: Vec<f64>,
    pub distortion: Vec<f64>,
    pub phi: Vec<f64>,
}

impl HallPanel {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// cov(y, Δc) and cov(y, c), pooled.
    pub fn iv_covariances(&self) -> (f64, f64) {
        (cov(&self.y, &self.dc), cov(&self.y, &self.c))
    }

    /// OLS of `c_{t+1} − ρc_t` on `(1, c_t)` over constrained observations;
    /// returns (intercept, slope).
    pub fn constrained_regression(&self, rho: f64) -> Result<(f64, f64)> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.constrained[i]).collect();
        if idx.len() < 3 {
            return Err(Error::validation("too few constrained observations for the regression"));
        }
        let xs: Vec<f64> = idx.iter().map(|&i| self.c[i]).collect();
        let zs: Vec<f64> = idx.iter().map(|&i| self.c[i] + self.dc[i] - rho * self.c[i]).collect();
        let slope = cov(&xs, &zs) / cov(&xs, &xs);
        let n = xs.len() as f64;
        let intercept = zs.iter().sum::<f64>() / n - slope * xs.iter().sum::<f64>() / n;
        Ok((intercept, slope))
    }
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

/// Simulates `n_households` for `t` periods after `burn` periods, starting
/// from cash on hand ȳ. Household `h` draws from stream `h` of `seed`.
pub fn hall_growth_simulate(
    model: &ToyModel,
    policy: &ToyPolicy,
    n_households: usize,
    t: usize,
    burn: usize,
    seed: u64,
) -> Result<HallPanel> {
    model.validate()?;
    if n_households == 0 || t < 2 {
        return Err(Error::validation("need at least one household and two periods"));
    }
    let lam = lambda_coefficients(model, policy)?;
    let rho = model.rho();
    let gross = 1.0 + model.r;
    let draw = WeightedIndex::new(&model.income.probs)
        .map_err(|e| Error::validation(e.to_string()))?;
    let parts: Vec<HallPanel> = (0..n_households)
        .into_par_iter()
        .map(|h| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(h as u64);
            let mut out = HallPanel::default();
            let mut y = model.mean_income();
            let mut x = y;
            let mut c = policy.consumption(x);
            for step in 0..burn + t {
                let s = x - c;
                let expected: f64 = model
                    .income
                    .values
                    .iter()
                    .zip(&model.income.probs)
                    .map(|(yj, p)| p * policy.consumption(gross * s + yj))
                    .sum();
                let y_next = model.income.values[draw.sample(&mut rng)];
                let x_next = gross * s + y_next;
                let c_next = policy.consumption(x_next);
                if step >= burn {
                    let constrained = policy.x_star().is_some_and(|xs| x <= xs);
                    let dc = c_next - c;
                    let eps = c_next - expected;
                    let distortion = if constrained { lam.lambda1 * c + lam.lambda0 } else { 0.0 };
                    out.household.push(h);
                    out.y.push(y);
                    out.x.push(x);
                    out.c.push(c);
                    out.dc.push(dc);
                    out.constrained.push(constrained);
                    out.eps.push(eps);
                    out.distortion.push(distortion);
                    out.phi.push(dc - (rho - 1.0) * c - eps - distortion);
                }
                y = y_next;
                x = x_next;
                c = c_next;
            }
            out
        })
        .collect();
    let mut panel = HallPanel::default();
    for p in parts {
        panel.household.extend(p.household);
        panel.y.extend(p.y);
        panel.x.extend(p.x);
        panel.c.extend(p.c);
        panel.dc.extend(p.dc);
        panel.constrained.extend(p.constrained);
        panel.eps.extend(p.eps);
        panel.distortion.extend(p.distortion);
        panel.phi.extend(p.phi);
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn model() -> ToyModel {
        ToyModel {
            beta: 0.9,
            omega: 2.0,
            r: 0.05,
            income: IncomeDist::two_point(0.7, 1.3, 0.5),
            n_grid: 400,
            x_max: 20.0,
        }
    }

    #[test]
    fn policy_is_monotone_with_corner_at_bottom() {
        let m = model();
        let p = solve_toy_model(&m, 1e-9, 2000).unwrap();
        assert!(p.constrained[0]);
        assert_eq!(p.c[0], p.x[0]);
        for i in 1..p.x.len() {
            assert!(p.c[i] >= p.c[i - 1] - 1e-9, "c falls at {i}");
            assert!(p.x[i] - p.c[i] >= p.x[i - 1] - p.c[i - 1] - 1e-9, "savings fall at {i}");
        }
        let k = p.constrained.iter().rposition(|&b| b).unwrap();
        assert!(p.constrained[..=k].iter().all(|&b| b));
        assert!(k + 1 < p.x.len());
    }

    #[test]
    fn all_constrained_gives_mean_income() {
        let m = ToyModel {
            beta: 0.3,
            ..model()
        };
        let p = solve_toy_model(&m, 1e-9, 2000).unwrap();
        let lam = lambda_coefficients(&m, &p).unwrap();
        assert_eq!(lam.prob_constrained, 1.0);
        assert!((lam.lambda0 - m.mean_income()).abs() < 1e-15);
    }

    #[test]
    fn rejects_patient_household() {
        let m = ToyModel {
            beta: 0.96,
            ..model()
        };
        assert!(solve_toy_model(&m, 1e-9, 100).is_err());
    }
}
