//! One-block random-walk Metropolis-Hastings on the quasi-posterior
//! π(θ, U) ∝ 1{θ in box} 1{0 < U < u_max} exp(−T·Q(θ, U)).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Criterion, CriterionState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhOptions {
    /// Retained draws (burn-in comes on top).
    pub n_draws: usize,
    /// Burn-in length as a fraction of `n_draws`; used for adaptation and discarded.
    pub burn_fraction: f64,
    /// Initial proposal standard deviation in transformed coordinates.
    pub proposal_scale: f64,
    pub target_acceptance: f64,
    /// Multiplier on the data-based upper bound for each nuisance component.
    pub u_bound_factor: f64,
    /// Keep every `thin`-th draw.
    pub thin: usize,
    pub seed: u64,
    /// Starting θ; the box center when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for MhOptions {
    fn default() -> Self {
        MhOptions {
            n_draws: 300_000,
            burn_fraction: 0.1,
            proposal_scale: 0.1,
            target_acceptance: 0.25,
            u_bound_factor: 3.0,
            thin: 1,
            seed: 1,
            start: None,
        }
    }
}

/// Retained draws of (θ, U_ineq), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Free θ names followed by `u<row>` for each inequality row.
    pub names: Vec<String>,
    pub n_theta: usize,
    pub draws: Vec<f64>,
    pub log_target: Vec<f64>,
    pub acceptance_rate: f64,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl Chain {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.log_target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_target.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.draws[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.draws[i * self.dim() + j]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim()).map(|j| self.column(j).iter().sum::<f64>() / n).collect()
    }

    /// Writes every `every`-th draw as CSV.
    pub fn write_csv<W: std::io::Write>(&self, out: W, every: usize) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = self.names.clone();
        header.push("log_target".into());
        wtr.write_record(&header)?;
        for i in (0..self.len()).step_by(every.max(1)) {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.log_target[i]));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Concatenates chains with identical layout, in the given order.
    pub fn concat(chains: Vec<Chain>) -> Result<Chain> {
        let mut it = chains.into_iter();
        let mut first = it.next().ok_or_else(|| Error::validation("no chains to merge"))?;
        let mut total = first.len() as f64 * first.acceptance_rate;
        let mut n = first.len() as f64;
        for c in it {
            if c.names != first.names {
                return Err(Error::validation("chains have different layouts"));
            }
            total += c.len() as f64 * c.acceptance_rate;
            n += c.len() as f64;
            first.draws.extend(c.draws);
            first.log_target.extend(c.log_target);
        }
        first.acceptance_rate = total / n;
        Ok(first)
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log of dσ/dz = σ(1 − σ), computed stably.
fn log_dlogistic(z: f64) -> f64 {
    -z.abs() - 2.0 * (1.0 + (-z.abs()).exp()).ln()
}

/// Upper bounds for the inequality nuisance components: `factor` times the
/// largest |m̄_j| over the corners and center of the box (1 when that is zero).
pub fn nuisance_bounds<C: Criterion + ?Sized>(criterion: &C, factor: f64) -> Result<Vec<f64>> {
    let bounds = criterion.bounds();
    let d = bounds.len();
    let mut design: Vec<Vec<f64>> = vec![bounds.iter().map(|(l, h)| 0.5 * (l + h)).collect()];
    if d <= 10 {
        for mask in 0..(1usize << d) {
            design.push(
                (0..d)
                    .map(|i| if mask >> i & 1 == 1 { bounds[i].1 } else { bounds[i].0 })
                    .collect(),
            );
        }
    }
    let states: Vec<CriterionState> = design.iter().filter_map(|x| criterion.state(x).ok()).collect();
    let r = states
        .first()
        .ok_or_else(|| Error::numerical("criterion undefined at the center and corners of the box"))?
        .mean
        .len();
    Ok((0..r)
        .map(|j| {
            let m = states.iter().map(|s| s.mean[j].abs()).fold(0.0, f64::max);
            if m > 0.0 && m.is_finite() {
                factor * m
            } else {
                1.0
            }
        })
        .collect())
}

struct Target<'c, C: ?Sized> {
    criterion: &'c C,
    bounds: Vec<(f64, f64)>,
    free_rows: Vec<usize>,
    r: usize,
    u_max: Vec<f64>,
    t: f64,
}

impl<C: Criterion + ?Sized> Target<'_, C> {
    fn n_theta(&self) -> usize {
        self.bounds.len()
    }

    fn to_natural(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.n_theta();
        let theta = (0..d)
            .map(|i| {
                let (lo, hi) = self.bounds[i];
                lo + (hi - lo) * logistic(z[i])
            })
            .collect();
        let mut u = vec![0.0; self.r];
        for (k, &row) in self.free_rows.iter().enumerate() {
            u[row] = self.u_max[k] * logistic(z[d + k]);
        }
        (theta, u)
    }

    fn to_transformed(&self, theta: &[f64], u_free: &[f64]) -> Vec<f64> {
        let clamp = |p: f64| p.clamp(1e-9, 1.0 - 1e-9);
        let mut z: Vec<f64> = theta
            .iter()
            .zip(&self.bounds)
            .map(|(&x, &(lo, hi))| logit(clamp((x - lo) / (hi - lo))))
            .collect();
        z.extend(u_free.iter().zip(&self.u_max).map(|(&u, &m)| logit(clamp(u / m))));
        z
    }

    /// Log target in transformed coordinates (flat priors, log-Jacobian included).
    fn log_density(&self, z: &[f64]) -> f64 {
        let (theta, u) = self.to_natural(z);
        let q = match self.criterion.state(&theta) {
            Ok(s) => s.q(&u),
            Err(_) => return f64::NEG_INFINITY,
        };
        if !q.is_finite() {
            return f64::NEG_INFINITY;
        }
        -self.t * q + z.iter().map(|&zi| log_dlogistic(zi)).sum::<f64>()
    }
}

/// Draws from the quasi-posterior over (θ, U) with U on inequality rows.
pub fn mh_sample<C: Criterion + ?Sized>(criterion: &C, opts: &MhOptions) -> Result<Chain> {
    if opts.n_draws == 0 || opts.thin == 0 {
        return Err(Error::validation("n_draws and thin must be positive"));
    }
    if !(opts.proposal_scale > 0.0 && (0.0..1.0).contains(&opts.burn_fraction)) {
        return Err(Error::validation("proposal scale must be positive and burn fraction in [0, 1)"));
    }
    let bounds = criterion.bounds();
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
        return Err(Error::validation("prior bounds must be finite"));
    }
    let start: Vec<f64> = match &opts.start {
        Some(s) if s.len() == bounds.len() => s.clone(),
        Some(_) => return Err(Error::validation("start has the wrong dimension")),
        None => bounds.iter().map(|(l, h)| 0.5 * (l + h)).collect(),
    };
    let state0 = criterion.state(&start)?;
    let free_rows: Vec<usize> = (0..state0.inequality.len()).filter(|&j| state0.inequality[j]).collect();
    let all_max = nuisance_bounds(criterion, opts.u_bound_factor)?;
    let u_max: Vec<f64> = free_rows.iter().map(|&j| all_max[j]).collect();
    let target = Target {
        criterion,
        bounds: bounds.clone(),
        free_rows: free_rows.clone(),
        r: state0.mean.len(),
        u_max: u_max.clone(),
        t: criterion.sample_size() as f64,
    };
    let (_, u_prof) = state0.profile();
    let u0: Vec<f64> = free_rows
        .iter()
        .zip(&u_max)
        .map(|(&j, &m)| u_prof[j].clamp(1e-3 * m, 0.999 * m))
        .collect();
    let dim = bounds.len() + free_rows.len();
    let mut z = target.to_transformed(&start, &u0);
    let mut lp = target.log_density(&z);
    if !lp.is_finite() {
        return Err(Error::numerical("quasi-posterior is zero at the starting point"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let burn = (opts.burn_fraction * opts.n_draws as f64).round() as usize;
    let total = burn + opts.n_draws;
    let mut chol = DMatrix::<f64>::identity(dim, dim);
    let mut scale = opts.proposal_scale;
    let mut batch_acc = 0usize;
    let batch = 200usize;
    let mut burn_z: Vec<Vec<f64>> = Vec::new();
    let mut names = criterion.param_names();
    names.extend(free_rows.iter().map(|j| format!("u{j}")));
    let keep_n = opts.n_draws.div_ceil(opts.thin);
    let mut draws = Vec::with_capacity(keep_n * dim);
    let mut log_target = Vec::with_capacity(keep_n);
    let mut accepted = 0usize;

    for it in 0..total {
        let xi = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = &chol * xi * scale;
        let prop: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let lp_prop = target.log_density(&prop);
        let log_u: f64 = rng.random::<f64>().ln();
        let accept = lp_prop.is_finite() && log_u < lp_prop - lp;
        if accept {
            z = prop;
            lp = lp_prop;
        }
        if it < burn {
            batch_acc += usize::from(accept);
            if (it + 1) % batch == 0 {
                let rate = batch_acc as f64 / batch as f64;
                scale *= (2.0 * (rate - opts.target_acceptance)).exp();
                batch_acc = 0;
            }
            if it >= burn / 4 && it < burn / 2 {
                burn_z.push(z.clone());
            }
            if it + 1 == burn / 2 && burn_z.len() > 10 * dim {
                if let Some(l) = empirical_cholesky(&burn_z) {
                    chol = l;
                    scale = 2.38 / (dim as f64).sqrt();
                }
                burn_z.clear();
            }
        } else {
            accepted += usize::from(accept);
            if (it - burn) % opts.thin == 0 {
                let (theta, u) = target.to_natural(&z);
                draws.extend(theta);
                draws.extend(free_rows.iter().map(|&j| u[j]));
                log_target.push(lp);
            }
        }
    }
    let acceptance_rate = accepted as f64 / opts.n_draws as f64;
    if !(0.05..=0.6).contains(&acceptance_rate) {
        log::warn!("Metropolis-Hastings acceptance rate {acceptance_rate:.3} outside [0.05, 0.6]");
    }
    let mut all_bounds = bounds;
    all_bounds.extend(u_max.iter().map(|&m| (0.0, m)));
    Ok(Chain {
        names,
        n_theta: target.n_theta(),
        draws,
        log_target,
        acceptance_rate,
        bounds: all_bounds,
        seed: opts.seed,
    })
}

/// Runs `n_chains` independent chains (seed streams `opts.seed + i`)
/// concurrently and concatenates them in chain order.
pub fn mh_sample_chains<C: Criterion + ?Sized>(criterion: &C, opts: &MhOptions, n_chains: usize) -> Result<Chain> {
    if n_chains == 0 {
        return Err(Error::validation("n_chains must be positive"));
    }
    let chains: Vec<Result<Chain>> = (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let o = MhOptions {
                seed: opts.seed.wrapping_add(i as u64),
                ..opts.clone()
            };
            mh_sample(criterion, &o)
        })
        .collect();
    Chain::concat(chains.into_iter().collect::<Result<Vec<_>>>()?)
}

fn empirical_cholesky(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    let ridge = 1e-6 * (cov.trace() / d as f64).max(1e-12);
    for a in 0..d {
        cov[(a, a)] += ridge;
    }
    Cholesky::new(cov).map(|c| c.l())
}
