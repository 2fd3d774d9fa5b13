//! CU-GMM estimation: long-run variance, generalized-inverse weighting,
//! closed-form nuisance profiling and multi-start minimization.

pub mod criterion;
pub mod linalg;
pub mod minimize;

pub use criterion::{
    Criterion, CriterionState, GmmCriterion, ParamId, ParamSpace, QuadraticCriterion, Weighting,
};
pub use linalg::{newey_west_lrv, nnls, nnls_gram, pseudo_inverse};
pub use minimize::{minimize, Minimum};

use crate::error::Result;

/// Profiled criterion at each point, as CSV rows `param..., Q`.
pub fn write_surface<C: Criterion + ?Sized, W: std::io::Write>(
    criterion: &C,
    points: &[Vec<f64>],
    out: W,
) -> Result<()> {
    use rayon::prelude::*;
    let values: Vec<f64> = points.par_iter().map(|x| criterion.profiled(x)).collect();
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = criterion.param_names();
    header.push("Q".into());
    wtr.write_record(&header)?;
    for (x, q) in points.iter().zip(values) {
        let mut rec: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{q:?}"));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
