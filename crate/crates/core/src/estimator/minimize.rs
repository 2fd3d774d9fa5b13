//! Multi-start pattern-search minimization of the profiled criterion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::criterion::Criterion;
use crate::error::{Error, Result};
use crate::optim::{pattern_search, PatternSearchOptions};

#[derive(Debug, Clone, Serialize)]
pub struct StartReport {
    pub start: Vec<f64>,
    pub start_value: f64,
    pub end: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Minimum {
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    pub q_min: f64,
    pub starts: Vec<StartReport>,
}

/// Start points: the box center followed by uniform draws, each from a
/// stream keyed by `(seed, start index)`.
pub fn start_points(bounds: &[(f64, f64)], n_starts: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n_starts)
        .map(|i| {
            if i == 0 {
                bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
            }
        })
        .collect()
}

pub fn minimize_from<C: Criterion + ?Sized>(
    criterion: &C,
    starts: &[Vec<f64>],
    opts: &PatternSearchOptions,
) -> Result<Minimum> {
    let bounds = criterion.bounds();
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let reports: Vec<StartReport> = starts
        .par_iter()
        .map(|x0| {
            let start_value = criterion.profiled(x0);
            let res = pattern_search(|x| criterion.profiled(x), x0, &lower, &upper, opts);
            StartReport {
                start: x0.clone(),
                start_value,
                end: res.x,
                value: res.value,
                evaluations: res.evaluations,
                converged: res.converged,
            }
        })
        .collect();
    let best = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    let Some(best) = best else {
        let diag: Vec<String> = reports
            .iter()
            .map(|r| format!("start {:?}: criterion {}", r.start, r.value))
            .collect();
        return Err(Error::Numerical {
            what: format!("every start failed to evaluate: {}", diag.join("; ")),
            period: None,
        });
    };
    let theta = reports[best].end.clone();
    let (q_min, u) = criterion.state(&theta)?.profile();
    Ok(Minimum {
        theta,
        u,
        q_min,
        starts: reports,
    })
}

/// Minimizes the profiled criterion from `n_starts` seeded starts.
pub fn minimize<C: Criterion + ?Sized>(criterion: &C, n_starts: usize, seed: u64) -> Result<Minimum> {
    if n_starts == 0 {
        return Err(Error::validation("n_starts must be at least 1"));
    }
    let bounds = criterion.bounds();
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::validation("minimization bounds must be finite"));
    }
    let starts = start_points(&bounds, n_starts, seed);
    minimize_from(criterion, &starts, &PatternSearchOptions::default())
}
