//! Long-run variance, generalized inverse and nonnegative least squares.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Newey-West long-run variance of the rows of `moments` (T × r) with
/// Bartlett weights `1 - k/(lag+1)`. Columns are demeaned internally.
pub fn newey_west_lrv(moments: &DMatrix<f64>, lag: usize) -> Result<DMatrix<f64>> {
    let t = moments.nrows();
    if t == 0 || lag >= t {
        return Err(Error::validation(format!(
            "Newey-West needs lag < T (lag {lag}, T {t})"
        )));
    }
    let means = crate::moments::column_means(moments);
    let mut e = moments.clone();
    for (j, mut col) in e.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let tf = t as f64;
    let mut v = e.tr_mul(&e) / tf;
    for k in 1..=lag {
        let w = 1.0 - k as f64 / (lag as f64 + 1.0);
        let lead = e.rows(k, t - k);
        let lagged = e.rows(0, t - k);
        let gamma = lead.tr_mul(&lagged) / tf;
        v += (&gamma + gamma.transpose()) * w;
    }
    let v = (&v + v.transpose()) * 0.5;
    if e.column_iter().any(|c| c.iter().all(|&x| x == 0.0)) {
        log::warn!("moment matrix has constant columns; long-run variance is singular");
    }
    Ok(project_psd(&v))
}

/// Clips negative eigenvalues of a symmetric matrix to zero.
pub fn project_psd(v: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(v.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return v.clone();
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    (&out + out.transpose()) * 0.5
}

/// Moore-Penrose inverse of a symmetric matrix via its eigendecomposition.
/// Eigenvalues below `rel_tol` times the largest magnitude are treated as zero.
pub fn pseudo_inverse(v: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = v.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (v + v.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.amax();
    let cut = rel_tol * lmax;
    let inv = eig
        .eigenvalues
        .map(|l| if l.abs() > cut && l != 0.0 { 1.0 / l } else { 0.0 });
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&inv) * q.transpose();
    (&out + out.transpose()) * 0.5
}

/// Nonnegative quadratic program min ½ xᵀ G x − cᵀ x subject to x ≥ 0,
/// for PSD `g`, solved by the Lawson-Hanson active-set method in Gram form.
pub fn nnls_gram(g: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let n = c.len();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let mut passive = vec![false; n];
    let scale = c.amax().max(g.amax() * 1e-300).max(1e-300);
    let tol = 1e-12 * scale * n as f64;
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let w = c - g * &x;
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate.filter(|&j| w[j] > tol) else {
            break;
        };
        passive[t] = true;
        for _ in 0..=n {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let g_pp = g.select_rows(&idx).select_columns(&idx);
            let c_p = DVector::from_iterator(idx.len(), idx.iter().map(|&j| c[j]));
            let s_sub = pseudo_inverse(&g_pp, 1e-12) * c_p;
            if s_sub.iter().all(|&s| s > 0.0) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = s_sub[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if s_sub[k] <= 0.0 {
                    let denom = x[j] - s_sub[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            let mut s = DVector::zeros(n);
            for (k, &j) in idx.iter().enumerate() {
                s[j] = s_sub[k];
            }
            x += (s - &x) * alpha;
            for &j in &idx {
                if x[j] <= 0.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Nonnegative least squares min ‖a x − b‖ subject to x ≥ 0.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    nnls_gram(&a.tr_mul(a), &a.tr_mul(b))
}
