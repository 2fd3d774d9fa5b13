//! Time iteration on the household Euler equation under a log-linear
//! aggregate law of motion, with the law of motion updated by simulation.

use serde::{Deserialize, Serialize};

use super::params::{joint, KSParams};
use super::simulate::{simulate_economy, InitialCapital};
use crate::error::{Error, Result};
use crate::optim::brent_root;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSGrid {
    pub n_k: usize,
    pub k_max: f64,
    /// Polynomial spacing exponent; larger values cluster nodes near zero.
    pub curvature: f64,
    pub n_agg: usize,
    pub agg_min: f64,
    pub agg_max: f64,
}

impl KSGrid {
    /// 100 individual nodes up to 250 and 6 aggregate nodes around the
    /// representative-agent capital stock.
    pub fn benchmark(params: &KSParams) -> Self {
        let k_ra = params.representative_capital();
        KSGrid {
            n_k: 100,
            k_max: 250.0,
            curvature: 7.0,
            n_agg: 6,
            agg_min: 0.85 * k_ra,
            agg_max: 1.25 * k_ra,
        }
    }

    pub fn validate(&self, borrow_limit: f64) -> Result<()> {
        if self.n_k < 100 {
            return Err(Error::validation("individual capital grid needs at least 100 nodes"));
        }
        if !(4..=10).contains(&self.n_agg) {
            return Err(Error::validation("aggregate capital grid needs 4 to 10 nodes"));
        }
        if !(self.k_max > borrow_limit && self.curvature >= 1.0) {
            return Err(Error::validation("k_max must exceed the borrowing limit and curvature be >= 1"));
        }
        if !(self.agg_min > 0.0 && self.agg_max > self.agg_min) {
            return Err(Error::validation("aggregate capital bounds must be positive and increasing"));
        }
        Ok(())
    }

    pub fn k_nodes(&self, borrow_limit: f64) -> Vec<f64> {
        let n = self.n_k;
        (0..n)
            .map(|i| {
                let x = i as f64 / (n - 1) as f64;
                borrow_limit + (self.k_max - borrow_limit) * x.powf(self.curvature)
            })
            .collect()
    }

    pub fn agg_nodes(&self) -> Vec<f64> {
        let n = self.n_agg;
        (0..n)
            .map(|j| self.agg_min + (self.agg_max - self.agg_min) * j as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Sup-norm tolerance on successive savings policies.
    pub tol_policy: f64,
    /// Sup-norm tolerance on successive law-of-motion coefficients.
    pub tol_alm: f64,
    pub max_policy_iter: usize,
    pub max_alm_iter: usize,
    /// Weight on the regression estimate in each law-of-motion update.
    pub damping: f64,
    pub sim_agents: usize,
    pub sim_periods: usize,
    pub sim_burn: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_policy: 1e-8,
            tol_alm: 1e-6,
            max_policy_iter: 10_000,
            max_alm_iter: 200,
            damping: 0.3,
            sim_agents: 10_000,
            sim_periods: 1100,
            sim_burn: 100,
            seed: 1,
        }
    }
}

/// ln K' = b0(z) + b1(z) ln K.
pub type Alm = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub alm_iterations: usize,
    pub policy_iterations: usize,
    pub policy_sup_change: f64,
    pub alm_sup_change: f64,
    pub r_squared: [f64; 2],
    /// Largest |Euler residual| over interior grid nodes (marginal-utility units).
    pub max_interior_residual: f64,
    /// Smallest Euler residual over binding grid nodes.
    pub min_binding_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSSolution {
    pub k_grid: Vec<f64>,
    pub agg_grid: Vec<f64>,
    /// Savings policy k' at (z, e, K node, k node), row-major in that order.
    pub savings: Vec<f64>,
    pub alm: Alm,
    pub borrow_limit: f64,
    pub report: ConvergenceReport,
}

/// Grid bracket: index of the left node and the (possibly extrapolating) weight.
#[inline]
pub(crate) fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    let i = match grid.binary_search_by(|g| g.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
}

impl KSSolution {
    fn n_k(&self) -> usize {
        self.k_grid.len()
    }

    fn n_agg(&self) -> usize {
        self.agg_grid.len()
    }

    #[inline]
    fn row(&self, s: usize, j: usize) -> &[f64] {
        let n = self.n_k();
        let start = (s * self.n_agg() + j) * n;
        &self.savings[start..start + n]
    }

    /// Interpolated savings with precomputed brackets in k and K.
    #[inline]
    pub(crate) fn savings_at(&self, s: usize, kb: (usize, f64), ab: (usize, f64)) -> f64 {
        let (i, wk) = kb;
        let (j, wa) = ab;
        let lo = self.row(s, j);
        let hi = self.row(s, j + 1);
        let v0 = lo[i] + wk * (lo[i + 1] - lo[i]);
        let v1 = hi[i] + wk * (hi[i + 1] - hi[i]);
        (v0 + wa * (v1 - v0)).max(self.borrow_limit)
    }

    /// k'(k, e, z, K), floored at the borrowing limit.
    pub fn savings(&self, k: f64, e: usize, z: usize, k_agg: f64) -> f64 {
        self.savings_at(joint(z, e), bracket(&self.k_grid, k), bracket(&self.agg_grid, k_agg))
    }

    pub fn consumption(&self, params: &KSParams, k: f64, e: usize, z: usize, k_agg: f64) -> f64 {
        let p = params.prices(z, k_agg);
        (1.0 - params.delta + p.r) * k + params.income(&p, e) - self.savings(k, e, z, k_agg)
    }

    pub fn next_aggregate(&self, z: usize, k_agg: f64) -> f64 {
        (self.alm[z][0] + self.alm[z][1] * k_agg.ln()).exp()
    }
}

/// A point at which to evaluate the Euler residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePoint {
    pub k: f64,
    pub e: usize,
    pub z: usize,
    pub k_agg: f64,
}

/// c^{-ω} − β E[(1 − δ + r')c'^{-ω}] at a state, using the solved policy for
/// both today and tomorrow.
pub fn euler_residual(solution: &KSSolution, params: &KSParams, point: StatePoint) -> f64 {
    let StatePoint { k, e, z, k_agg } = point;
    let c = solution.consumption(params, k, e, z, k_agg);
    let kp = solution.savings(k, e, z, k_agg);
    let k_next = solution.next_aggregate(z, k_agg);
    let mut expect = 0.0;
    for zn in 0..2 {
        let p = params.prices(zn, k_next);
        let gross = 1.0 - params.delta + p.r;
        for en in 0..2 {
            let prob = params.transition[joint(z, e)][joint(zn, en)];
            if prob == 0.0 {
                continue;
            }
            let cn = solution.consumption(params, kp, en, zn, k_next);
            expect += prob * gross * params.marginal_utility(cn);
        }
    }
    params.marginal_utility(c) - params.beta * expect
}

struct Successor {
    prob: f64,
    s: usize,
    gross: f64,
    income: f64,
    agg: (usize, f64),
}

/// One time-iteration sweep; returns the sup-norm policy change.
fn sweep(sol: &mut KSSolution, params: &KSParams, scratch: &mut Vec<f64>) -> Result<f64> {
    let n_k = sol.n_k();
    let n_agg = sol.n_agg();
    scratch.clear();
    scratch.resize(sol.savings.len(), 0.0);
    let lim = sol.borrow_limit;
    let mut sup = 0.0f64;
    for z in 0..2 {
        for j in 0..n_agg {
            let k_agg = sol.agg_grid[j];
            let prices = params.prices(z, k_agg);
            let gross_now = 1.0 - params.delta + prices.r;
            let k_next = sol.next_aggregate(z, k_agg);
            let agg_next = bracket(&sol.agg_grid, k_next);
            for e in 0..2 {
                let s = joint(z, e);
                let succ: Vec<Successor> = (0..2)
                    .flat_map(|zn| (0..2).map(move |en| (zn, en)))
                    .filter_map(|(zn, en)| {
                        let prob = params.transition[s][joint(zn, en)];
                        (prob > 0.0).then(|| {
                            let p = params.prices(zn, k_next);
                            Successor {
                                prob,
                                s: joint(zn, en),
                                gross: 1.0 - params.delta + p.r,
                                income: params.income(&p, en),
                                agg: agg_next,
                            }
                        })
                    })
                    .collect();
                let inc = params.income(&prices, e);
                for i in 0..n_k {
                    let wealth = gross_now * sol.k_grid[i] + inc;
                    let f = |kp: f64| {
                        let kb = bracket(&sol.k_grid, kp);
                        let mut rhs = 0.0;
                        for sc in &succ {
                            let kpp = sol.savings_at(sc.s, kb, sc.agg);
                            let cn = (sc.gross * kp + sc.income - kpp).max(1e-12);
                            rhs += sc.prob * sc.gross * params.marginal_utility(cn);
                        }
                        params.marginal_utility(wealth - kp) - params.beta * rhs
                    };
                    let kp = if f(lim) >= 0.0 {
                        lim
                    } else {
                        let hi = wealth - 1e-12 * wealth.max(1.0);
                        brent_root(f, lim, hi, 1e-13, 200)?
                    };
                    let idx = (s * n_agg + j) * n_k + i;
                    sup = sup.max((kp - sol.savings[idx]).abs());
                    scratch[idx] = kp;
                }
            }
        }
    }
    std::mem::swap(&mut sol.savings, scratch);
    Ok(sup)
}

/// Solves the household problem for a fixed law of motion, warm-starting
/// from `sol.savings`. Returns the number of sweeps and the last change.
pub fn solve_household(sol: &mut KSSolution, params: &KSParams, opts: &SolverOptions) -> Result<(usize, f64)> {
    let mut scratch = Vec::new();
    let mut last = f64::INFINITY;
    for it in 1..=opts.max_policy_iter {
        last = sweep(sol, params, &mut scratch)?;
        if last < opts.tol_policy {
            return Ok((it, last));
        }
    }
    Err(Error::NonConvergence {
        what: "household time iteration".into(),
        iterations: opts.max_policy_iter,
        last_sup: last,
    })
}

/// Initial law of motion: constant capital at the grid midpoint.
pub fn initial_alm(grid: &KSGrid) -> Alm {
    let mid = (0.5 * (grid.agg_min + grid.agg_max)).ln();
    [[0.05 * mid, 0.95], [0.05 * mid, 0.95]]
}

/// Empty solution on the grid with a simple initial savings guess.
pub fn initial_solution(params: &KSParams, grid: &KSGrid, alm: Alm) -> KSSolution {
    let k_grid = grid.k_nodes(params.borrow_limit);
    let agg_grid = grid.agg_nodes();
    let mut savings = Vec::with_capacity(4 * agg_grid.len() * k_grid.len());
    for z in 0..2 {
        for e in 0..2 {
            for &ka in &agg_grid {
                let p = params.prices(z, ka);
                for &k in &k_grid {
                    let wealth = (1.0 - params.delta + p.r) * k + params.income(&p, e);
                    savings.push((0.9 * k).min(0.9 * wealth).max(params.borrow_limit));
                }
            }
        }
    }
    KSSolution {
        k_grid,
        agg_grid,
        savings,
        alm,
        borrow_limit: params.borrow_limit,
        report: ConvergenceReport {
            alm_iterations: 0,
            policy_iterations: 0,
            policy_sup_change: f64::INFINITY,
            alm_sup_change: f64::INFINITY,
            r_squared: [f64::NAN; 2],
            max_interior_residual: f64::NAN,
            min_binding_residual: f64::NAN,
        },
    }
}

/// OLS of ln K_{t+1} on ln K_t separately by aggregate state.
pub fn regress_alm(k: &[f64], z: &[usize], burn: usize) -> Result<(Alm, [f64; 2])> {
    let mut alm = [[0.0; 2]; 2];
    let mut r2 = [0.0; 2];
    for state in 0..2 {
        let pairs: Vec<(f64, f64)> = (burn..k.len() - 1)
            .filter(|&t| z[t] == state)
            .map(|t| (k[t].ln(), k[t + 1].ln()))
            .collect();
        if pairs.len() < 3 {
            return Err(Error::numerical(format!(
                "aggregate state {state} visited too rarely to fit the law of motion"
            )));
        }
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
        if sxx <= 0.0 {
            return Err(Error::numerical("no variation in aggregate capital for the law-of-motion regression"));
        }
        let b1 = sxy / sxx;
        let b0 = my - b1 * mx;
        alm[state] = [b0, b1];
        let sse: f64 = pairs.iter().map(|p| (p.1 - b0 - b1 * p.0).powi(2)).sum();
        r2[state] = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    }
    Ok((alm, r2))
}

/// Euler residual extremes over the solution grid.
pub fn grid_residuals(sol: &KSSolution, params: &KSParams) -> (f64, f64) {
    let mut max_interior = 0.0f64;
    let mut min_binding = f64::INFINITY;
    for z in 0..2 {
        for e in 0..2 {
            for &k_agg in &sol.agg_grid {
                for &k in &sol.k_grid {
                    let point = StatePoint { k, e, z, k_agg };
                    let res = euler_residual(sol, params, point);
                    if sol.savings(k, e, z, k_agg) > sol.borrow_limit + super::BINDING_TOL {
                        max_interior = max_interior.max(res.abs());
                    } else {
                        min_binding = min_binding.min(res);
                    }
                }
            }
        }
    }
    (max_interior, min_binding)
}

/// Solves the economy: household time iteration nested in law-of-motion
/// updates from simulation regressions.
pub fn solve_ks(params: &KSParams, grid: &KSGrid, opts: &SolverOptions) -> Result<KSSolution> {
    params.validate()?;
    grid.validate(params.borrow_limit)?;
    if !(opts.tol_policy > 0.0 && opts.tol_alm > 0.0) {
        return Err(Error::validation("tolerances must be positive"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::validation("damping must lie in (0, 1]"));
    }
    if opts.sim_periods <= opts.sim_burn + 10 {
        return Err(Error::validation("solver simulation too short for the regression"));
    }
    let mut sol = initial_solution(params, grid, initial_alm(grid));
    let mut total_sweeps = 0;
    let mut last_alm = f64::INFINITY;
    for it in 1..=opts.max_alm_iter {
        let (sweeps, change) = solve_household(&mut sol, params, opts)?;
        total_sweeps += sweeps;
        let sim = simulate_economy(
            &sol,
            params,
            opts.sim_agents,
            opts.sim_periods,
            opts.seed,
            InitialCapital::Uniform(0.5 * (grid.agg_min + grid.agg_max)),
            false,
        )?;
        let (fit, r2) = regress_alm(&sim.k, &sim.z, opts.sim_burn)?;
        last_alm = (0..2)
            .flat_map(|z| (0..2).map(move |c| (z, c)))
            .map(|(z, c)| (fit[z][c] - sol.alm[z][c]).abs())
            .fold(0.0, f64::max);
        log::debug!("law-of-motion iteration {it}: change {last_alm:.3e}, fit {fit:?}, r2 {r2:?}");
        sol.report = ConvergenceReport {
            alm_iterations: it,
            policy_iterations: total_sweeps,
            policy_sup_change: change,
            alm_sup_change: last_alm,
            r_squared: r2,
            max_interior_residual: f64::NAN,
            min_binding_residual: f64::NAN,
        };
        if last_alm < opts.tol_alm {
            let (mi, mb) = grid_residuals(&sol, params);
            sol.report.max_interior_residual = mi;
            sol.report.min_binding_residual = mb;
            for z in 0..2 {
                if !(sol.alm[z][1] > 0.0 && sol.alm[z][1] < 1.0) {
                    return Err(Error::numerical(format!(
                        "law-of-motion slope {} in state {z} is outside (0, 1)",
                        sol.alm[z][1]
                    )));
                }
            }
            return Ok(sol);
        }
        for z in 0..2 {
            for c in 0..2 {
                sol.alm[z][c] = (1.0 - opts.damping) * sol.alm[z][c] + opts.damping * fit[z][c];
            }
        }
    }
    Err(Error::NonConvergence {
        what: "aggregate law of motion".into(),
        iterations: opts.max_alm_iter,
        last_sup: last_alm,
    })
}
