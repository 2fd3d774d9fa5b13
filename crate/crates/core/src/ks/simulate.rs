//! Monte Carlo simulation of a continuum of agents approximated by a finite panel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{joint, KSParams, GOOD};
use super::solver::{bracket, KSSolution};
use super::BINDING_TOL;
use crate::error::{Error, Result};
use crate::panel::{format_value, MacroPanel, ReturnKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCapital {
    /// Every agent starts with the same capital.
    Uniform(f64),
}

/// Full simulated path, one entry per period.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomyPath {
    pub k: Vec<f64>,
    pub z: Vec<usize>,
    pub c: Vec<f64>,
    pub r_k: Vec<f64>,
    pub w: Vec<f64>,
    pub unemployment: Vec<f64>,
    pub var_share: Vec<f64>,
    pub b: Vec<f64>,
    /// Cross-sectional mean of k' (equals `k[t + 1]`).
    pub k_next: Vec<f64>,
}

/// Aggregate-state path drawn from its own stream (stream 0 of `seed`).
pub fn aggregate_path(params: &KSParams, t_total: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut z = Vec::with_capacity(t_total);
    let mut cur = GOOD;
    for _ in 0..t_total {
        z.push(cur);
        let stay = params.p_agg(cur, cur);
        if rng.random::<f64>() >= stay {
            cur = 1 - cur;
        }
    }
    z
}

fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64 + 1);
    rng
}

struct Agent {
    k: f64,
    e: usize,
    rng: ChaCha8Rng,
}

/// Simulates `n_agents` households for `t_total` periods.
pub fn simulate_economy(
    sol: &KSSolution,
    params: &KSParams,
    n_agents: usize,
    t_total: usize,
    seed: u64,
    init: InitialCapital,
    strict_grid: bool,
) -> Result<EconomyPath> {
    if n_agents == 0 || t_total == 0 {
        return Err(Error::validation("simulation needs agents and periods"));
    }
    let z_path = aggregate_path(params, t_total + 1, seed);
    let InitialCapital::Uniform(k0) = init;
    let mut agents: Vec<Agent> = (0..n_agents)
        .map(|i| {
            let mut rng = agent_rng(seed, i);
            let e = usize::from(rng.random::<f64>() >= params.unemployment(z_path[0]));
            Agent { k: k0, e, rng }
        })
        .collect();
    let k_max = *sol.k_grid.last().expect("nonempty grid");
    let lim = sol.borrow_limit;
    let n = n_agents as f64;
    let mut path = EconomyPath {
        k: Vec::with_capacity(t_total),
        z: z_path[..t_total].to_vec(),
        c: Vec::with_capacity(t_total),
        r_k: Vec::with_capacity(t_total),
        w: Vec::with_capacity(t_total),
        unemployment: Vec::with_capacity(t_total),
        var_share: Vec::with_capacity(t_total),
        b: Vec::with_capacity(t_total),
        k_next: Vec::with_capacity(t_total),
    };
    let mut k_agg = agents.iter().map(|a| a.k).sum::<f64>() / n;
    let mut c_buf = vec![0.0; n_agents];
    let mut warned = false;
    for t in 0..t_total {
        let z = z_path[t];
        let zn = z_path[t + 1];
        if !warned && (k_agg < sol.agg_grid[0] || k_agg > *sol.agg_grid.last().unwrap()) {
            log::warn!("aggregate capital {k_agg:.4} outside the aggregate grid at period {t}; extrapolating");
            warned = true;
        }
        let prices = params.prices(z, k_agg);
        let gross = 1.0 - params.delta + prices.r;
        let income = [params.income(&prices, 0), params.income(&prices, 1)];
        let agg = bracket(&sol.agg_grid, k_agg);
        let p_emp = [params.p_employed(0, z, zn), params.p_employed(1, z, zn)];
        let exits: Vec<(usize, f64)> = agents
            .par_iter_mut()
            .zip(c_buf.par_iter_mut())
            .enumerate()
            .filter_map(|(i, (a, c_out))| {
                let wealth = gross * a.k + income[a.e];
                let mut kp = sol.savings_at(joint(z, a.e), bracket(&sol.k_grid, a.k), agg);
                if kp < lim + BINDING_TOL {
                    kp = lim;
                }
                let kp = kp.min(wealth);
                *c_out = wealth - kp;
                a.k = kp;
                let draw: f64 = a.rng.random();
                a.e = usize::from(draw < p_emp[a.e]);
                (kp > k_max).then_some((i, kp))
            })
            .collect();
        if strict_grid {
            if let Some(&(_, value)) = exits.first() {
                return Err(Error::GridExit {
                    period: t,
                    value,
                    lower: lim,
                    upper: k_max,
                });
            }
        }
        let c_mean = c_buf.iter().sum::<f64>() / n;
        let var_share = c_buf.iter().map(|c| (c / c_mean - 1.0).powi(2)).sum::<f64>() / n;
        let n_bind = agents.iter().filter(|a| a.k == lim).count();
        let k_next = agents.iter().map(|a| a.k).sum::<f64>() / n;
        let unemp = agents_unemployment_share(&agents);
        path.k.push(k_agg);
        path.c.push(c_mean);
        path.r_k.push(prices.r);
        path.w.push(prices.w);
        path.var_share.push(var_share);
        path.b.push(n_bind as f64 / n);
        path.k_next.push(k_next);
        path.unemployment.push(unemp);
        k_agg = k_next;
    }
    Ok(path)
}

fn agents_unemployment_share(agents: &[Agent]) -> f64 {
    agents.iter().filter(|a| a.e == 0).count() as f64 / agents.len() as f64
}

/// Kept simulation sample with export helpers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPanel {
    pub c: Vec<f64>,
    pub k: Vec<f64>,
    pub r_k: Vec<f64>,
    pub w: Vec<f64>,
    /// Aggregate state index (0 good, 1 bad).
    pub z: Vec<usize>,
    pub var_share: Vec<f64>,
    pub b: Vec<f64>,
    /// Labor input l̄·(1 − u_t) implied by the aggregate state.
    pub labor: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
    pub n_agents: usize,
    pub t_kept: usize,
}

/// Simulates `t_total` periods and keeps the last `t_total - t_burn`.
pub fn simulate_panel(
    sol: &KSSolution,
    params: &KSParams,
    n_agents: usize,
    t_total: usize,
    t_burn: usize,
    seed: u64,
) -> Result<SimulatedPanel> {
    let k0 = stationary_guess(sol);
    simulate_panel_from(sol, params, n_agents, t_total, t_burn, seed, InitialCapital::Uniform(k0))
}

/// Fixed point of the average law of motion, used as the starting capital.
pub fn stationary_guess(sol: &KSSolution) -> f64 {
    let b0 = 0.5 * (sol.alm[0][0] + sol.alm[1][0]);
    let b1 = 0.5 * (sol.alm[0][1] + sol.alm[1][1]);
    (b0 / (1.0 - b1)).exp()
}

pub fn simulate_panel_from(
    sol: &KSSolution,
    params: &KSParams,
    n_agents: usize,
    t_total: usize,
    t_burn: usize,
    seed: u64,
    init: InitialCapital,
) -> Result<SimulatedPanel> {
    if t_total <= t_burn {
        return Err(Error::validation("t_total must exceed t_burn"));
    }
    if n_agents < 1000 {
        return Err(Error::validation("simulation needs at least 1000 agents"));
    }
    let path = simulate_economy(sol, params, n_agents, t_total, seed, init, true)?;
    let keep = |v: &Vec<f64>| v[t_burn..].to_vec();
    Ok(SimulatedPanel {
        c: keep(&path.c),
        k: keep(&path.k),
        r_k: keep(&path.r_k),
        w: keep(&path.w),
        z: path.z[t_burn..].to_vec(),
        var_share: keep(&path.var_share),
        b: keep(&path.b),
        labor: path.z[t_burn..].iter().map(|&z| params.labor_input(z)).collect(),
        delta: params.delta,
        seed,
        n_agents,
        t_kept: t_total - t_burn,
    })
}

impl SimulatedPanel {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn mean_b(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.b.len() as f64
    }

    /// Gross return on capital realized at each period.
    pub fn gross_return(&self) -> Vec<f64> {
        self.r_k.iter().map(|r| 1.0 - self.delta + r).collect()
    }

    pub fn to_macro_panel(&self) -> MacroPanel {
        let mut p = MacroPanel::with_index(self.c.clone());
        let n = self.len();
        p.set_labor(self.labor.clone(), self.w.clone()).expect("aligned");
        p.set_return(ReturnKind::Capital, self.gross_return()).expect("aligned");
        p.set_var_share(self.var_share.clone()).expect("aligned");
        p.set_b(self.b.clone()).expect("aligned");
        p.set_extra("K", self.k.clone()).expect("aligned");
        p.set_extra("Z", self.z.iter().map(|&z| z as f64).collect()).expect("aligned");
        debug_assert_eq!(p.len(), n);
        p.notes.insert(
            "source".into(),
            format!("simulated economy, seed {}, {} agents", self.seed, self.n_agents),
        );
        p
    }

    /// CSV with columns t, C, K, r_k, w, Z, var_share, B.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "C", "K", "r_k", "w", "Z", "var_share", "B"])?;
        for t in 0..self.len() {
            wtr.write_record([
                t.to_string(),
                format_value(self.c[t]),
                format_value(self.k[t]),
                format_value(self.r_k[t]),
                format_value(self.w[t]),
                self.z[t].to_string(),
                format_value(self.var_share[t]),
                format_value(self.b[t]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
