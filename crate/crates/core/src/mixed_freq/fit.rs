//! Maximum likelihood for the autoregressive parameters and extraction of
//! the quarterly constrained share.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kalman::periodic_steady_gain;
use super::model::{MixedFreqData, MixedFreqModel, MixedFreqParams};
use crate::error::{Error, Result};
use crate::optim::{pattern_search, PatternSearchOptions};

const NAMES: [&str; 4] = ["rho_b", "rho_zeta", "var_b", "var_zeta"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MleOptions {
    pub rho_bounds: (f64, f64),
    /// Bounds on the state innovation variances.
    pub var_bounds: (f64, f64),
    pub n_starts: usize,
    pub seed: u64,
    /// Fit the state means as well instead of matching sample means.
    pub estimate_means: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            rho_bounds: (-0.98, 0.98),
            var_bounds: (1e-8, 1.0),
            n_starts: 4,
            seed: 1,
            estimate_means: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MleFit {
    pub model: MixedFreqModel,
    pub log_likelihood: f64,
    pub init_log_likelihood: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Parameters that ended within 1e-6 of a bound (relative to box width).
    pub at_bound: Vec<String>,
    /// Parameters along which the likelihood varies by less than 1e-3 across
    /// an 11-point scan of the box, others held at the optimum.
    pub flat: Vec<String>,
    pub start_log_likelihoods: Vec<f64>,
}

/// Sample means of log-b and of log Π − log-b implied by the observations.
pub fn sample_means(data: &MixedFreqData) -> Result<(f64, f64)> {
    let mean = |xs: &[Option<f64>]| -> Option<f64> {
        let v: Vec<f64> = xs.iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let mb = mean(&data.log_b).ok_or_else(|| Error::validation("no survey observations of B"))?;
    let mp = mean(&data.log_pi).ok_or_else(|| Error::validation("no indebtedness observations"))?;
    Ok((mb, mp - mb))
}

pub fn log_likelihood(model: &MixedFreqModel, data: &MixedFreqData) -> Result<f64> {
    model.state_space()?.filter(&data.rows()).map(|f| f.log_likelihood)
}

fn to_search(p: &MixedFreqParams, means: bool) -> Vec<f64> {
    let mut x = vec![p.rho_b, p.rho_zeta, p.var_b.ln(), p.var_zeta.ln()];
    if means {
        x.extend([p.mean_b, p.mean_zeta]);
    }
    x
}

fn from_search(x: &[f64], base: &MixedFreqParams) -> MixedFreqParams {
    let (mean_b, mean_zeta) = if x.len() > 4 { (x[4], x[5]) } else { (base.mean_b, base.mean_zeta) };
    MixedFreqParams {
        rho_b: x[0],
        rho_zeta: x[1],
        var_b: x[2].exp(),
        var_zeta: x[3].exp(),
        mean_b,
        mean_zeta,
    }
}

/// Maximizes the filter likelihood over `(ρ_b, ρ_ζ, σ²_b, σ²_ζ)` with the
/// observation noise held at `init.noise`. Variances are searched on a log
/// scale. Starts after the first are uniform draws in the search box.
pub fn mle_fit(data: &MixedFreqData, init: &MixedFreqModel, opts: &MleOptions) -> Result<MleFit> {
    data.validate()?;
    if opts.n_starts == 0 {
        return Err(Error::validation("n_starts must be at least 1"));
    }
    let (rl, rh) = opts.rho_bounds;
    let (vl, vh) = opts.var_bounds;
    if !(-1.0 < rl && rl < rh && rh < 1.0 && 0.0 < vl && vl < vh) {
        return Err(Error::validation("invalid likelihood search bounds"));
    }
    let mut base = init.params;
    if !opts.estimate_means {
        let (mb, mz) = sample_means(data)?;
        base.mean_b = mb;
        base.mean_zeta = mz;
    }
    let p0 = &init.params;
    if !(rl..=rh).contains(&p0.rho_b)
        || !(rl..=rh).contains(&p0.rho_zeta)
        || !(vl..=vh).contains(&p0.var_b)
        || !(vl..=vh).contains(&p0.var_zeta)
    {
        return Err(Error::validation("initial parameters lie outside the search bounds"));
    }
    let mut lower = vec![rl, rl, vl.ln(), vl.ln()];
    let mut upper = vec![rh, rh, vh.ln(), vh.ln()];
    if opts.estimate_means {
        for m in [base.mean_b, base.mean_zeta] {
            lower.push(m - 5.0);
            upper.push(m + 5.0);
        }
    }
    let rows = data.rows();
    let eval = |x: &[f64]| -> f64 {
        let model = MixedFreqModel {
            params: from_search(x, &base),
            ..init.clone()
        };
        match model.state_space().and_then(|ss| ss.filter(&rows)) {
            Ok(f) if f.log_likelihood.is_finite() => -f.log_likelihood,
            _ => f64::INFINITY,
        }
    };
    let x0 = to_search(&base, opts.estimate_means);
    let init_ll = -eval(&x0);
    if !init_ll.is_finite() {
        return Err(Error::validation("likelihood is not finite at the initial parameters"));
    }
    let starts: Vec<Vec<f64>> = (0..opts.n_starts)
        .map(|i| {
            if i == 0 {
                return x0.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            lower.iter().zip(&upper).map(|(&lo, &hi)| rng.random_range(lo..=hi)).collect()
        })
        .collect();
    let search = PatternSearchOptions {
        step_tol: 1e-8,
        ..Default::default()
    };
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| pattern_search(eval, s, &lower, &upper, &search))
        .collect();
    let best = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap();
    let res = &results[best];
    let x = &res.x;
    let ll = -res.value;
    let mut at_bound = Vec::new();
    let mut flat = Vec::new();
    for i in 0..4 {
        let w = upper[i] - lower[i];
        if (x[i] - lower[i]).abs() < 1e-6 * w || (upper[i] - x[i]).abs() < 1e-6 * w {
            at_bound.push(NAMES[i].to_string());
        }
        let scan: Vec<f64> = (0..=10)
            .map(|k| {
                let mut y = x.clone();
                y[i] = lower[i] + w * k as f64 / 10.0;
                -eval(&y)
            })
            .collect();
        let spread = scan.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - scan.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if spread < 1e-3 {
            flat.push(NAMES[i].to_string());
        }
    }
    if !at_bound.is_empty() || !flat.is_empty() {
        log::warn!("likelihood maximum at bound {at_bound:?}, flat in {flat:?}");
    }
    Ok(MleFit {
        model: MixedFreqModel {
            params: from_search(x, &base),
            ..init.clone()
        },
        log_likelihood: ll,
        init_log_likelihood: init_ll,
        converged: res.converged,
        evaluations: results.iter().map(|r| r.evaluations).sum(),
        at_bound,
        flat,
        start_log_likelihoods: results.iter().map(|r| -r.value).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractionResult {
    pub dates: Vec<String>,
    pub log_b_filtered: Vec<f64>,
    pub log_b_smoothed: Vec<f64>,
    pub b_filtered: Vec<f64>,
    pub b_smoothed: Vec<f64>,
    /// Gain of log-b on the indebtedness innovation, per quarter.
    pub gain: Vec<f64>,
    /// Limit of that gain when only the indebtedness row is observed.
    pub steady_gain: f64,
    pub log_likelihood: f64,
    pub params: MixedFreqParams,
    /// Quarters where an extracted level exceeds 1.
    pub out_of_range: Vec<usize>,
}

/// Filtered and smoothed quarterly B under a fitted model.
pub fn extract_b(model: &MixedFreqModel, data: &MixedFreqData) -> Result<ExtractionResult> {
    data.validate()?;
    let ss = model.state_space()?;
    let f = ss.filter(&data.rows())?;
    let s = ss.smooth(&f);
    let log_b_filtered: Vec<f64> = f.filtered.iter().map(|x| x[0]).collect();
    let log_b_smoothed: Vec<f64> = s.smoothed.iter().map(|x| x[0]).collect();
    let b_filtered: Vec<f64> = log_b_filtered.iter().map(|v| v.exp()).collect();
    let b_smoothed: Vec<f64> = log_b_smoothed.iter().map(|v| v.exp()).collect();
    let out_of_range: Vec<usize> = (0..b_filtered.len())
        .filter(|&t| b_filtered[t] > 1.0 || b_smoothed[t] > 1.0)
        .collect();
    if !out_of_range.is_empty() {
        log::warn!("{} extracted quarters exceed a share of 1", out_of_range.len());
    }
    let steady_gain = periodic_steady_gain(&ss, &[vec![true, false]], 0, 0, 1e-12, 100_000)?;
    Ok(ExtractionResult {
        dates: data.dates.clone(),
        gain: f.gains.iter().map(|g| g[(0, 0)]).collect(),
        log_b_filtered,
        log_b_smoothed,
        b_filtered,
        b_smoothed,
        steady_gain,
        log_likelihood: f.log_likelihood,
        params: model.params,
        out_of_range,
    })
}
