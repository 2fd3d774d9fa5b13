//! Small derivative-free numerical routines shared by the solvers.

use crate::error::{Error, Result};

/// Brent's method for a root of `f` bracketed by `[a, b]`.
pub fn brent_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::numerical(format!(
            "root not bracketed on [{a}, {b}] (f = {fa:.3e}, {fb:.3e})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(Error::NonConvergence {
        what: "Brent root search".into(),
        iterations: max_iter,
        last_sup: (c - b).abs(),
    })
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns the maximizer and the maximum, also checking both endpoints.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    let mut best = (mid, f(mid));
    for x in [a, b] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct PatternSearchOptions {
    /// Initial step as a fraction of each coordinate's box width.
    pub initial_step: f64,
    /// Stop once the step, as a fraction of box width, falls below this.
    pub step_tol: f64,
    pub max_evals: usize,
}

impl Default for PatternSearchOptions {
    fn default() -> Self {
        PatternSearchOptions {
            initial_step: 0.1,
            step_tol: 1e-9,
            max_evals: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PatternSearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Box-constrained Hooke-Jeeves pattern search minimizing `f`.
///
/// Coordinates are rescaled to the unit box internally. Infeasible
/// evaluations should return `f64::INFINITY`.
pub fn pattern_search<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &PatternSearchOptions,
) -> PatternSearchResult {
    let n = x0.len();
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let to_x = |z: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if width[i] > 0.0 && z[i] >= 1.0 {
                    upper[i]
                } else if width[i] > 0.0 {
                    lower[i] + z[i].max(0.0) * width[i]
                } else {
                    lower[i]
                }
            })
            .collect()
    };
    let mut evals = 0usize;
    let mut eval = |z: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(&to_x(z));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut base: Vec<f64> = (0..n)
        .map(|i| {
            if width[i] > 0.0 {
                ((x0[i] - lower[i]) / width[i]).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let mut f_base = eval(&base, &mut evals);
    let mut step = opts.initial_step;

    let explore = |point: &[f64], f_point: f64, step: f64, evals: &mut usize, eval: &mut dyn FnMut(&[f64], &mut usize) -> f64| {
        let mut z = point.to_vec();
        let mut fz = f_point;
        for i in 0..n {
            if width[i] <= 0.0 {
                continue;
            }
            let orig = z[i];
            let mut improved = false;
            for dir in [1.0, -1.0] {
                let cand = (orig + dir * step).clamp(0.0, 1.0);
                if cand == orig {
                    continue;
                }
                z[i] = cand;
                let fc = eval(&z, evals);
                if fc < fz {
                    fz = fc;
                    improved = true;
                    break;
                }
            }
            if !improved {
                z[i] = orig;
            }
        }
        (z, fz)
    };

    while step > opts.step_tol && evals < opts.max_evals {
        let (z, fz) = explore(&base, f_base, step, &mut evals, &mut eval);
        if fz < f_base {
            // Pattern moves along the improving direction.
            let mut prev = base.clone();
            base = z;
            f_base = fz;
            loop {
                if evals >= opts.max_evals {
                    break;
                }
                let jump: Vec<f64> = (0..n)
                    .map(|i| (2.0 * base[i] - prev[i]).clamp(0.0, 1.0))
                    .collect();
                let f_jump = eval(&jump, &mut evals);
                let (z2, f2) = explore(&jump, f_jump, step, &mut evals, &mut eval);
                if f2 < f_base {
                    prev = std::mem::replace(&mut base, z2);
                    f_base = f2;
                } else {
                    break;
                }
            }
        } else {
            step *= 0.5;
        }
    }
    PatternSearchResult {
        x: to_x(&base),
        value: f_base,
        evaluations: evals,
        converged: step <= opts.step_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14, 100).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn brent_requires_bracket() {
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 50).is_err());
    }

    #[test]
    fn golden_finds_interior_and_boundary_maxima() {
        let (x, fx) = golden_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8 && fx <= 0.0);
        let (x, _) = golden_max(|x| x, 0.0, 2.0, 1e-10);
        assert_eq!(x, 2.0);
    }

    #[test]
    fn pattern_search_correlated_quadratic() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0] - 0.3, x[1] + 0.2);
            a * a + b * b + 1.8 * a * b + 0.5
        };
        let res = pattern_search(
            f,
            &[0.9, 0.9],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &PatternSearchOptions {
                step_tol: 1e-12,
                max_evals: 100_000,
                ..Default::default()
            },
        );
        assert!(res.converged);
        assert!((res.x[0] - 0.3).abs() < 1e-6, "{:?}", res.x);
        assert!((res.x[1] + 0.2).abs() < 1e-6, "{:?}", res.x);
        assert!((res.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pattern_search_respects_box() {
        let res = pattern_search(
            |x: &[f64]| (x[0] - 5.0).powi(2),
            &[0.0],
            &[-1.0],
            &[1.0],
            &PatternSearchOptions::default(),
        );
        assert!((res.x[0] - 1.0).abs() < 1e-9 && res.x[0] <= 1.0);
    }
}
