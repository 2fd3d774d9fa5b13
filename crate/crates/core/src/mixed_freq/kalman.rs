//! Linear Gaussian state space filtering and smoothing with missing rows.
//!
//! ```text
//! x[t] = c + F x[t-1] + ν[t],   ν ~ N(0, Q)
//! y[t] = d + H x[t]   + v[t],   v ~ N(0, diag(r))
//! ```
//!
//! `x[0]` is drawn from N(x0, P0). Any subset of the rows of `y[t]` may be
//! missing; only observed rows enter the update and the likelihood.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::linalg::pseudo_inverse;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub transition: DMatrix<f64>,
    pub intercept: DVector<f64>,
    pub state_cov: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub obs_intercept: DVector<f64>,
    /// Diagonal of the observation noise covariance.
    pub obs_var: DVector<f64>,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub predicted: Vec<DVector<f64>>,
    pub predicted_cov: Vec<DMatrix<f64>>,
    pub filtered: Vec<DVector<f64>>,
    pub filtered_cov: Vec<DMatrix<f64>>,
    /// Gain matrix (n_state × n_obs) per period; columns of missing rows are zero.
    pub gains: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub smoothed: Vec<DVector<f64>>,
    pub smoothed_cov: Vec<DMatrix<f64>>,
}

impl LinearGaussian {
    pub fn n_state(&self) -> usize {
        self.transition.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.observation.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_state();
        let m = self.n_obs();
        let square = |a: &DMatrix<f64>| a.nrows() == n && a.ncols() == n;
        if !(square(&self.transition) && square(&self.state_cov) && square(&self.init_cov))
            || self.intercept.len() != n
            || self.init_mean.len() != n
            || self.observation.ncols() != n
            || self.obs_intercept.len() != m
            || self.obs_var.len() != m
        {
            return Err(Error::validation("state space dimensions are inconsistent"));
        }
        if self.obs_var.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::validation("observation variances must be nonnegative"));
        }
        for (name, a) in [("state", &self.state_cov), ("initial", &self.init_cov)] {
            let asym = (a - a.transpose()).amax();
            let min_eig = a.clone().symmetric_eigenvalues().min();
            if asym > 1e-10 * a.amax().max(1.0) || min_eig < -1e-10 * a.amax().max(1.0) {
                return Err(Error::validation(format!("{name} covariance is not PSD")));
            }
        }
        Ok(())
    }

    fn check_observations(&self, obs: &[Vec<Option<f64>>]) -> Result<()> {
        if let Some((t, _)) = obs.iter().enumerate().find(|(_, y)| y.len() != self.n_obs()) {
            return Err(Error::validation(format!(
                "observation at period {t} has the wrong number of rows"
            )));
        }
        Ok(())
    }

    /// Kalman filter. Observed rows of each period are updated jointly.
    pub fn filter(&self, obs: &[Vec<Option<f64>>]) -> Result<FilterOutput> {
        self.check_observations(obs)?;
        let n = self.n_state();
        let m = self.n_obs();
        let t_len = obs.len();
        let mut out = FilterOutput {
            predicted: Vec::with_capacity(t_len),
            predicted_cov: Vec::with_capacity(t_len),
            filtered: Vec::with_capacity(t_len),
            filtered_cov: Vec::with_capacity(t_len),
            gains: Vec::with_capacity(t_len),
            log_likelihood: 0.0,
        };
        let mut x = self.init_mean.clone();
        let mut p = self.init_cov.clone();
        for (t, y) in obs.iter().enumerate() {
            if t > 0 {
                x = &self.intercept + &self.transition * &x;
                p = &self.transition * &p * self.transition.transpose() + &self.state_cov;
                p = (&p + p.transpose()) * 0.5;
            }
            out.predicted.push(x.clone());
            out.predicted_cov.push(p.clone());

            let rows: Vec<usize> = (0..m).filter(|&i| y[i].is_some()).collect();
            let mut gain = DMatrix::zeros(n, m);
            if !rows.is_empty() {
                let k = rows.len();
                let h = DMatrix::from_fn(k, n, |i, j| self.observation[(rows[i], j)]);
                let innov = DVector::from_fn(k, |i, _| {
                    let r = rows[i];
                    y[r].unwrap() - self.obs_intercept[r] - (self.observation.row(r) * &x)[0]
                });
                let ph = &p * h.transpose();
                let mut s = &h * &ph;
                for (i, &r) in rows.iter().enumerate() {
                    s[(i, i)] += self.obs_var[r];
                }
                let s = (&s + s.transpose()) * 0.5;
                let chol = s.clone().cholesky().ok_or_else(|| Error::Numerical {
                    what: "innovation covariance is not positive definite".into(),
                    period: Some(t),
                })?;
                let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let s_inv_v = chol.solve(&innov);
                out.log_likelihood -= 0.5 * (k as f64 * LN_2PI + log_det + innov.dot(&s_inv_v));
                let kg = chol.solve(&ph.transpose()).transpose();
                x += &kg * &innov;
                // Joseph form keeps the covariance symmetric PSD.
                let i_kh = DMatrix::identity(n, n) - &kg * &h;
                let mut r_o = DMatrix::zeros(k, k);
                for (i, &r) in rows.iter().enumerate() {
                    r_o[(i, i)] = self.obs_var[r];
                }
                p = &i_kh * &p * i_kh.transpose() + &kg * r_o * kg.transpose();
                p = (&p + p.transpose()) * 0.5;
                for (i, &r) in rows.iter().enumerate() {
                    gain.set_column(r, &kg.column(i));
                }
            }
            out.filtered.push(x.clone());
            out.filtered_cov.push(p.clone());
            out.gains.push(gain);
        }
        Ok(out)
    }

    /// Filter that updates observed rows one at a time in the given order.
    /// Agrees with [`LinearGaussian::filter`] because the observation noise
    /// is diagonal; kept as a cross-check.
    pub fn filter_sequential(&self, obs: &[Vec<Option<f64>>], order: &[usize]) -> Result<FilterOutput> {
        self.check_observations(obs)?;
        let m = self.n_obs();
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..m).collect::<Vec<_>>() {
            return Err(Error::validation("row order must be a permutation of the observation rows"));
        }
        let n = self.n_state();
        let mut out = FilterOutput {
            predicted: Vec::new(),
            predicted_cov: Vec::new(),
            filtered: Vec::new(),
            filtered_cov: Vec::new(),
            gains: Vec::new(),
            log_likelihood: 0.0,
        };
        let mut x = self.init_mean.clone();
        let mut p = self.init_cov.clone();
        for (t, y) in obs.iter().enumerate() {
            if t > 0 {
                x = &self.intercept + &self.transition * &x;
                p = &self.transition * &p * self.transition.transpose() + &self.state_cov;
            }
            out.predicted.push(x.clone());
            out.predicted_cov.push(p.clone());
            for &r in order {
                let Some(yr) = y[r] else { continue };
                let h = self.observation.row(r).transpose();
                let ph = &p * &h;
                let s = h.dot(&ph) + self.obs_var[r];
                if !(s > 0.0) {
                    return Err(Error::Numerical {
                        what: format!("innovation variance {s} for row {r}"),
                        period: Some(t),
                    });
                }
                let v = yr - self.obs_intercept[r] - h.dot(&x);
                out.log_likelihood -= 0.5 * (LN_2PI + s.ln() + v * v / s);
                let k = ph / s;
                x += &k * v;
                p -= &k * k.transpose() * s;
                p = (&p + p.transpose()) * 0.5;
            }
            out.filtered.push(x.clone());
            out.filtered_cov.push(p.clone());
            out.gains.push(DMatrix::zeros(n, m));
        }
        Ok(out)
    }

    /// Rauch-Tung-Striebel smoother over a filter pass.
    pub fn smooth(&self, f: &FilterOutput) -> SmootherOutput {
        let t_len = f.filtered.len();
        let mut smoothed = f.filtered.clone();
        let mut smoothed_cov = f.filtered_cov.clone();
        for t in (0..t_len.saturating_sub(1)).rev() {
            let p_pred_inv = pseudo_inverse(&f.predicted_cov[t + 1], 1e-12);
            let j = &f.filtered_cov[t] * self.transition.transpose() * p_pred_inv;
            smoothed[t] = &f.filtered[t] + &j * (&smoothed[t + 1] - &f.predicted[t + 1]);
            let pc = &f.filtered_cov[t] + &j * (&smoothed_cov[t + 1] - &f.predicted_cov[t + 1]) * j.transpose();
            smoothed_cov[t] = (&pc + pc.transpose()) * 0.5;
        }
        SmootherOutput {
            smoothed,
            smoothed_cov,
        }
    }
}

/// Iterates the covariance recursion over a repeating pattern of observed
/// rows until the gain on `(state, row)` at the first pattern period stops
/// changing. Returns that gain.
pub fn periodic_steady_gain(
    model: &LinearGaussian,
    pattern: &[Vec<bool>],
    state: usize,
    row: usize,
    tol: f64,
    max_cycles: usize,
) -> Result<f64> {
    if pattern.is_empty() || pattern.iter().any(|p| p.len() != model.n_obs()) {
        return Err(Error::validation("observation pattern has the wrong shape"));
    }
    let obs: Vec<Vec<Option<f64>>> = pattern
        .iter()
        .map(|p| p.iter().map(|&o| if o { Some(0.0) } else { None }).collect())
        .collect();
    let mut cycle_model = model.clone();
    let mut last = f64::NAN;
    for _ in 0..max_cycles {
        let f = cycle_model.filter(&obs)?;
        let g = f.gains[0][(state, row)];
        if (g - last).abs() < tol {
            return Ok(g);
        }
        last = g;
        // Next cycle starts from the propagated end-of-cycle covariance.
        let p_end = f.filtered_cov.last().unwrap();
        let p_next = &model.transition * p_end * model.transition.transpose() + &model.state_cov;
        cycle_model.init_cov = (&p_next + p_next.transpose()) * 0.5;
    }
    Err(Error::NonConvergence {
        what: "Riccati recursion".into(),
        iterations: max_cycles,
        last_sup: f64::NAN,
    })
}
