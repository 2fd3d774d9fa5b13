//! Instrument construction and the stacked moment system, with and without
//! the extensive-margin (B_t^{-1} scaled) rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    euler_moment, intratemporal_equality, intratemporal_moment, AggregateObs, LaborObs,
    PreferenceTheta,
};
use crate::error::{Error, Result};
use crate::panel::{format_value, MacroPanel, ReturnKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstrumentSpec {
    Constant,
    /// Level of `column` lagged `lag` periods relative to the moment date.
    Lag { column: String, lag: usize },
    /// Log growth of `column` between `t - lag - 1` and `t - lag`.
    Growth { column: String, lag: usize },
}

impl InstrumentSpec {
    pub fn lag(column: &str, lag: usize) -> Self {
        InstrumentSpec::Lag {
            column: column.into(),
            lag,
        }
    }

    fn first_period(&self) -> usize {
        match self {
            InstrumentSpec::Constant => 0,
            InstrumentSpec::Lag { lag, .. } => *lag,
            InstrumentSpec::Growth { lag, .. } => lag + 1,
        }
    }

    fn label(&self) -> String {
        match self {
            InstrumentSpec::Constant => "1".into(),
            InstrumentSpec::Lag { column, lag } => format!("{column}(-{lag})"),
            InstrumentSpec::Growth { column, lag } => format!("dln{column}(-{lag})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityTransform {
    /// exp((x - mean) / sd) over the instrument sample.
    #[default]
    ExpStandardized,
    Exp,
    /// Raw values; rejected unless already strictly positive.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentFunction {
    Euler,
    Intratemporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSystemConfig {
    pub instruments: Vec<InstrumentSpec>,
    pub returns: Vec<ReturnKind>,
    pub moment_functions: Vec<MomentFunction>,
    pub use_extensive_margin: bool,
    pub include_intratemporal_equality: bool,
    pub positivity_transform: PositivityTransform,
    /// Treat every row as an equality (nuisance fixed at zero).
    pub equalities_only: bool,
    /// Largest sample share of B_t = 0 periods that may be dropped.
    pub max_zero_b_share: f64,
}

impl MomentSystemConfig {
    /// Euler moments for the given returns and instruments.
    pub fn euler(returns: Vec<ReturnKind>, instruments: Vec<InstrumentSpec>) -> Self {
        MomentSystemConfig {
            instruments,
            returns,
            moment_functions: vec![MomentFunction::Euler],
            use_extensive_margin: false,
            include_intratemporal_equality: false,
            positivity_transform: PositivityTransform::ExpStandardized,
            equalities_only: false,
            max_zero_b_share: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(Error::Config {
                key: "moments.instruments".into(),
                reason: "at least one instrument is required".into(),
            });
        }
        if self.returns.is_empty() && !self.moment_functions.is_empty() {
            return Err(Error::Config {
                key: "moments.returns".into(),
                reason: "at least one return is required for the inequality moments".into(),
            });
        }
        if self.moment_functions.is_empty() && !self.include_intratemporal_equality {
            return Err(Error::Config {
                key: "moments.moment_functions".into(),
                reason: "no moment functions selected".into(),
            });
        }
        if !(0.0..1.0).contains(&self.max_zero_b_share) {
            return Err(Error::Config {
                key: "moments.max_zero_b_share".into(),
                reason: "must lie in [0, 1)".into(),
            });
        }
        Ok(())
    }

    pub fn needs_labor(&self) -> bool {
        self.include_intratemporal_equality
            || self.moment_functions.contains(&MomentFunction::Intratemporal)
    }
}

/// Strictly positive instrument matrix; row `i` belongs to period `first_period + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentMatrix {
    pub first_period: usize,
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl InstrumentMatrix {
    pub fn n_instruments(&self) -> usize {
        self.values.ncols()
    }

    fn row(&self, t: usize) -> Option<usize> {
        t.checked_sub(self.first_period)
            .filter(|&i| i < self.values.nrows())
    }
}

pub fn build_instruments(panel: &MacroPanel, config: &MomentSystemConfig) -> Result<InstrumentMatrix> {
    config.validate()?;
    let n = panel.len();
    let first = config
        .instruments
        .iter()
        .map(InstrumentSpec::first_period)
        .max()
        .unwrap_or(0);
    if first >= n {
        return Err(Error::validation(format!(
            "instrument lags need {first} leading periods but the panel has {n}"
        )));
    }
    let rows = n - first;
    let mut values = DMatrix::zeros(rows, config.instruments.len());
    for (j, spec) in config.instruments.iter().enumerate() {
        let raw: Vec<f64> = match spec {
            InstrumentSpec::Constant => vec![1.0; rows],
            InstrumentSpec::Lag { column, lag } | InstrumentSpec::Growth { column, lag } => {
                let series = panel.column(column).ok_or_else(|| Error::Config {
                    key: "moments.instruments".into(),
                    reason: format!("panel has no column `{column}`"),
                })?;
                let growth = matches!(spec, InstrumentSpec::Growth { .. });
                (first..n)
                    .map(|t| {
                        let s = t - lag;
                        let v = if growth {
                            (series[s] / series[s - 1]).ln()
                        } else {
                            series[s]
                        };
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(Error::validation(format!(
                                "instrument `{}` is missing or invalid at period {t}",
                                spec.label()
                            )))
                        }
                    })
                    .collect::<Result<_>>()?
            }
        };
        let transformed = if matches!(spec, InstrumentSpec::Constant) {
            raw
        } else {
            apply_transform(&raw, config.positivity_transform)
        };
        if let Some(i) = transformed.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config {
                key: "moments.positivity_transform".into(),
                reason: format!(
                    "instrument `{}` is not strictly positive at period {} (value {})",
                    spec.label(),
                    first + i,
                    transformed[i]
                ),
            });
        }
        values.set_column(j, &DVector::from_vec(transformed));
    }
    Ok(InstrumentMatrix {
        first_period: first,
        values,
        labels: config.instruments.iter().map(InstrumentSpec::label).collect(),
    })
}

fn apply_transform(raw: &[f64], transform: PositivityTransform) -> Vec<f64> {
    match transform {
        PositivityTransform::Identity => raw.to_vec(),
        PositivityTransform::Exp => raw.iter().map(|x| x.exp()).collect(),
        PositivityTransform::ExpStandardized => {
            let n = raw.len() as f64;
            let mean = raw.iter().sum::<f64>() / n;
            let var = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 0.0 {
                raw.iter().map(|x| ((x - mean) / sd).exp()).collect()
            } else {
                vec![1.0; raw.len()]
            }
        }
    }
}

/// Nonnegative wedge means that restore the moment equalities.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceU(pub Vec<f64>);

impl NuisanceU {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if let Some(i) = u.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::validation(format!(
                "nuisance component {i} is {} (must be >= 0)",
                u[i]
            )));
        }
        Ok(NuisanceU(u))
    }
}

/// Per-period stacked moments at one θ.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    /// Moment date of each row.
    pub periods: Vec<usize>,
    /// T × r per-period moment contributions.
    pub matrix: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub labels: Vec<String>,
    /// True where the row is an inequality (nuisance free and nonnegative).
    pub inequality: Vec<bool>,
    pub dropped_zero_b: usize,
}

impl MomentSystem {
    pub fn n_obs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_moments(&self) -> usize {
        self.matrix.ncols()
    }

    /// m̄(θ) − U.
    pub fn residual(&self, u: &[f64]) -> DVector<f64> {
        &self.mean - DVector::from_column_slice(u)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.labels.iter().cloned());
        wtr.write_record(&header)?;
        for (i, t) in self.periods.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(self.matrix.row(i).iter().map(|&x| format_value(x)));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn value_at(series: &[f64], t: usize, name: &str) -> Result<f64> {
    let v = series[t];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(format!("`{name}` is missing at period {t}")))
    }
}

pub(crate) fn observation(panel: &MacroPanel, t: usize, kind: Option<ReturnKind>, labor: bool) -> Result<AggregateObs> {
    let vs = panel
        .var_share
        .as_deref()
        .ok_or_else(|| Error::validation("panel lacks var_share; impute it before building moments"))?;
    let r_next = match kind {
        Some(k) => value_at(panel.return_series(k)?, t + 1, k.column())?,
        None => 1.0,
    };
    let labor = if labor {
        let l = panel.l.as_deref().ok_or_else(|| Error::validation("panel lacks hours L"))?;
        let w = panel.w.as_deref().ok_or_else(|| Error::validation("panel lacks wages W"))?;
        Some(LaborObs {
            l_t: value_at(l, t, "L")?,
            l_next: value_at(l, t + 1, "L")?,
            w_t: value_at(w, t, "W")?,
            w_next: value_at(w, t + 1, "W")?,
        })
    } else {
        None
    };
    Ok(AggregateObs {
        period: t,
        c_prev: value_at(&panel.c, t - 1, "C")?,
        c_t: value_at(&panel.c, t, "C")?,
        c_next: value_at(&panel.c, t + 1, "C")?,
        labor,
        r_next,
        var_share_t: value_at(vs, t, "var_share")?,
        var_share_next: value_at(vs, t + 1, "var_share")?,
        b_t: panel.b.as_ref().map(|b| b[t]),
    })
}

/// Periods `t` with `C_{t-1}`, `C_{t+1}` and every instrument available.
fn moment_periods(panel: &MacroPanel, inst: &InstrumentMatrix) -> Vec<usize> {
    let start = inst.first_period.max(1);
    let end = (inst.first_period + inst.values.nrows()).min(panel.len().saturating_sub(1));
    (start..end).collect()
}

/// Builds the stacked system m_t(θ) ⊗ X_t at θ.
pub fn stack_moments(
    panel: &MacroPanel,
    theta: &PreferenceTheta,
    config: &MomentSystemConfig,
    instruments: &InstrumentMatrix,
) -> Result<MomentSystem> {
    theta.validate()?;
    let mut periods = moment_periods(panel, instruments);
    let mut dropped = 0;
    let b = if config.use_extensive_margin {
        let b = panel
            .b
            .as_deref()
            .ok_or_else(|| Error::validation("extensive margin requested but the panel has no B"))?;
        for &t in &periods {
            let v = b[t];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("B is {v} at period {t}, outside [0, 1]")));
            }
        }
        let n_zero = periods.iter().filter(|&&t| b[t] == 0.0).count();
        if n_zero > 0 {
            let share = n_zero as f64 / periods.len() as f64;
            if share >= config.max_zero_b_share {
                return Err(Error::validation(format!(
                    "B is zero in {n_zero} of {} moment periods; the B^-1 weighting is undefined",
                    periods.len()
                )));
            }
            log::warn!("dropping {n_zero} periods with B = 0 from the extensive-margin system");
            periods.retain(|&t| b[t] > 0.0);
            dropped = n_zero;
        }
        Some(b)
    } else {
        None
    };
    if periods.is_empty() {
        return Err(Error::validation("no usable moment periods after alignment"));
    }

    let k = instruments.n_instruments();
    let labor = config.needs_labor();
    let mut ineq_labels = Vec::new();
    for &ret in &config.returns {
        for f in &config.moment_functions {
            for lab in &instruments.labels {
                let tag = match f {
                    MomentFunction::Euler => "euler",
                    MomentFunction::Intratemporal => "intra",
                };
                ineq_labels.push(format!("{tag}_{ret}*{lab}"));
            }
        }
    }
    let n_ineq = ineq_labels.len();
    let n_scaled = if b.is_some() { n_ineq } else { 0 };
    let n_eq = if config.include_intratemporal_equality { k } else { 0 };
    let r = n_ineq + n_scaled + n_eq;

    let mut matrix = DMatrix::zeros(periods.len(), r);
    for (i, &t) in periods.iter().enumerate() {
        let x = instruments.values.row(instruments.row(t).expect("aligned period"));
        let mut col = 0;
        let mut base = Vec::with_capacity(config.returns.len() * config.moment_functions.len());
        for &ret in &config.returns {
            let obs = observation(panel, t, Some(ret), labor)?;
            for f in &config.moment_functions {
                base.push(match f {
                    MomentFunction::Euler => euler_moment(theta, &obs)?,
                    MomentFunction::Intratemporal => intratemporal_moment(theta, &obs)?,
                });
            }
        }
        for &m in &base {
            for j in 0..k {
                matrix[(i, col)] = m * x[j];
                col += 1;
            }
        }
        if let Some(b) = b {
            let inv_b = 1.0 / b[t];
            for &m in &base {
                for j in 0..k {
                    matrix[(i, col)] = m * x[j] * inv_b;
                    col += 1;
                }
            }
        }
        if config.include_intratemporal_equality {
            let obs = observation(panel, t, None, true)?;
            let m = intratemporal_equality(theta, &obs)?;
            for j in 0..k {
                matrix[(i, col)] = m * x[j];
                col += 1;
            }
        }
    }
    let mut labels = ineq_labels.clone();
    if b.is_some() {
        labels.extend(ineq_labels.iter().map(|l| format!("{l}/B")));
    }
    if config.include_intratemporal_equality {
        labels.extend(instruments.labels.iter().map(|l| format!("intra_eq*{l}")));
    }
    let mut inequality = vec![!config.equalities_only; n_ineq + n_scaled];
    inequality.extend(std::iter::repeat_n(false, n_eq));
    let mean = column_means(&matrix);
    Ok(MomentSystem {
        periods,
        matrix,
        mean,
        labels,
        inequality,
        dropped_zero_b: dropped,
    })
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Outcome of comparing B-scaled moments under reported and true B.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    /// Componentwise E[m X / B_reported] ≥ E[m X / B_true] over all periods.
    pub holds: bool,
    /// Same comparison restricted to periods where every base moment is ≥ 0.
    pub holds_on_nonnegative: bool,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub negative_moment_periods: usize,
    pub n_periods: usize,
}

/// Checks the robustness ordering of the extensive-margin moments to an
/// under-reported constrained share.
pub fn robustness_ordering(
    panel: &MacroPanel,
    theta: &PreferenceTheta,
    config: &MomentSystemConfig,
    b_reported: &[f64],
    b_true: &[f64],
) -> Result<OrderingReport> {
    if b_reported.len() != panel.len() || b_true.len() != panel.len() {
        return Err(Error::validation("B series must match the panel length"));
    }
    let mut base_config = config.clone();
    base_config.use_extensive_margin = false;
    base_config.include_intratemporal_equality = false;
    let inst = build_instruments(panel, &base_config)?;
    let sys = stack_moments(panel, theta, &base_config, &inst)?;
    for &t in &sys.periods {
        let (bo, bc) = (b_reported[t], b_true[t]);
        if !(bo > 0.0 && bo <= bc && bc <= 1.0) {
            return Err(Error::validation(format!(
                "ordering precondition 0 < B_reported <= B_true <= 1 fails at period {t} \
                 (reported {bo}, true {bc})"
            )));
        }
    }
    let r = sys.n_moments();
    let mut lhs = vec![0.0; r];
    let mut rhs = vec![0.0; r];
    let mut lhs_nn = vec![0.0; r];
    let mut rhs_nn = vec![0.0; r];
    let mut negative = 0;
    for (i, &t) in sys.periods.iter().enumerate() {
        let row = sys.matrix.row(i);
        let nonneg = row.iter().all(|&m| m >= 0.0);
        if !nonneg {
            negative += 1;
        }
        for j in 0..r {
            let a = row[j] / b_reported[t];
            let b = row[j] / b_true[t];
            lhs[j] += a;
            rhs[j] += b;
            if nonneg {
                lhs_nn[j] += a;
                rhs_nn[j] += b;
            }
        }
    }
    let n = sys.n_obs() as f64;
    lhs.iter_mut().chain(rhs.iter_mut()).for_each(|x| *x /= n);
    let holds = lhs.iter().zip(&rhs).all(|(a, b)| a >= b);
    let holds_on_nonnegative = lhs_nn.iter().zip(&rhs_nn).all(|(a, b)| a >= b);
    Ok(OrderingReport {
        holds,
        holds_on_nonnegative,
        lhs,
        rhs,
        negative_moment_periods: negative,
        n_periods: sys.n_obs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn panel(n: usize) -> MacroPanel {
        let c: Vec<f64> = (0..n).map(|t| 1.0 + 0.01 * (t as f64 * 0.7).sin()).collect();
        let mut p = MacroPanel::with_index(c);
        let r: Vec<f64> = (0..n).map(|t| 1.02 + 0.005 * (t as f64 * 1.3).cos()).collect();
        p.set_return(ReturnKind::Capital, r).unwrap();
        p.set_var_share((0..n).map(|t| 0.1 + 0.01 * (t % 3) as f64).collect()).unwrap();
        p.set_b((0..n).map(|t| 0.02 + 0.01 * (t % 4) as f64).collect()).unwrap();
        p.set_labor(vec![0.3; n], (0..n).map(|t| 1.0 + 0.01 * t as f64).collect())
            .unwrap();
        p
    }

    fn theta() -> PreferenceTheta {
        PreferenceTheta::new(1.5, 2.0, 0.0, 0.97).unwrap()
    }

    fn two_lag_config() -> MomentSystemConfig {
        MomentSystemConfig::euler(
            vec![ReturnKind::Capital],
            vec![InstrumentSpec::lag("C", 1), InstrumentSpec::lag("C", 2)],
        )
    }

    #[test]
    fn constant_instrument_is_ones() {
        let p = panel(10);
        let cfg = MomentSystemConfig::euler(vec![ReturnKind::Capital], vec![InstrumentSpec::Constant]);
        let inst = build_instruments(&p, &cfg).unwrap();
        assert!(inst.values.iter().all(|&x| x == 1.0));
        assert_eq!(inst.values.nrows(), 10);
    }

    #[test]
    fn two_consumption_lags_leave_t_minus_two_rows() {
        let p = panel(50);
        let inst = build_instruments(&p, &two_lag_config()).unwrap();
        assert_eq!(inst.values.nrows(), 48);
        assert_eq!(inst.first_period, 2);
    }

    #[test]
    fn exp_standardized_preserves_order() {
        let p = panel(40);
        let cfg = MomentSystemConfig::euler(vec![ReturnKind::Capital], vec![InstrumentSpec::lag("C", 1)]);
        let inst = build_instruments(&p, &cfg).unwrap();
        for t in 2..40 {
            let (a, b) = (p.c[t - 1], p.c[t - 2]);
            let (xa, xb) = (inst.values[(t - 1, 0)], inst.values[(t - 2, 0)]);
            assert!(xa > 0.0);
            assert_eq!(a > b, xa > xb);
        }
    }

    #[test]
    fn identity_transform_rejects_nonpositive() {
        let mut p = panel(20);
        p.set_extra("z", (0..20).map(|t| t as f64 - 5.0).collect()).unwrap();
        let mut cfg = MomentSystemConfig::euler(vec![ReturnKind::Capital], vec![InstrumentSpec::lag("z", 1)]);
        cfg.positivity_transform = PositivityTransform::Identity;
        assert!(matches!(build_instruments(&p, &cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn dimension_bookkeeping() {
        let p = panel(60);
        let cfg = two_lag_config();
        let inst = build_instruments(&p, &cfg).unwrap();
        let sys = stack_moments(&p, &theta(), &cfg, &inst).unwrap();
        assert_eq!(sys.n_moments(), 2);
        assert_eq!(sys.n_obs(), 60 - 3);
        let mut cfg2 = cfg.clone();
        cfg2.use_extensive_margin = true;
        cfg2.include_intratemporal_equality = true;
        cfg2.moment_functions.push(MomentFunction::Intratemporal);
        let sys2 = stack_moments(&p, &theta(), &cfg2, &inst).unwrap();
        assert_eq!(sys2.n_moments(), 4 + 4 + 2);
        assert_eq!(sys2.inequality.iter().filter(|&&b| b).count(), 8);
    }

    #[test]
    fn extensive_margin_rows_are_scaled_base_rows() {
        let p = panel(40);
        let mut cfg = two_lag_config();
        let inst = build_instruments(&p, &cfg).unwrap();
        let base = stack_moments(&p, &theta(), &cfg, &inst).unwrap();
        cfg.use_extensive_margin = true;
        let ext = stack_moments(&p, &theta(), &cfg, &inst).unwrap();
        let b = p.b.as_ref().unwrap();
        for (i, &t) in ext.periods.iter().enumerate() {
            for j in 0..2 {
                assert_eq!(ext.matrix[(i, j)], base.matrix[(i, j)]);
                assert_abs_diff_eq!(ext.matrix[(i, j + 2)], base.matrix[(i, j)] / b[t], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_b_periods_are_dropped_or_rejected() {
        let mut p = panel(100);
        let mut b = p.b.clone().unwrap();
        b[50] = 0.0;
        p.set_b(b.clone()).unwrap();
        let mut cfg = two_lag_config();
        cfg.use_extensive_margin = true;
        let inst = build_instruments(&p, &cfg).unwrap();
        let sys = stack_moments(&p, &theta(), &cfg, &inst).unwrap();
        assert_eq!(sys.dropped_zero_b, 1);
        assert!(!sys.periods.contains(&50));
        for v in b.iter_mut().take(30) {
            *v = 0.0;
        }
        p.set_b(b).unwrap();
        assert!(stack_moments(&p, &theta(), &cfg, &inst).is_err());
    }

    #[test]
    fn ordering_equal_and_halved() {
        let p = panel(60);
        let cfg = two_lag_config();
        // β small enough that every Euler moment is positive.
        let th = PreferenceTheta::new(1.5, 2.0, 0.0, 0.9).unwrap();
        let b = p.b.clone().unwrap();
        let same = robustness_ordering(&p, &th, &cfg, &b, &b).unwrap();
        assert!(same.holds);
        assert_eq!(same.lhs, same.rhs);
        let half: Vec<f64> = b.iter().map(|x| x / 2.0).collect();
        let rep = robustness_ordering(&p, &th, &cfg, &half, &b).unwrap();
        assert_eq!(rep.negative_moment_periods, 0);
        assert!(rep.lhs.iter().zip(&rep.rhs).all(|(a, b)| a > b));
        assert!(robustness_ordering(&p, &th, &cfg, &b, &half).is_err());
    }

    #[test]
    fn residual_identity() {
        let p = panel(30);
        let cfg = two_lag_config();
        let inst = build_instruments(&p, &cfg).unwrap();
        let sys = stack_moments(&p, &theta(), &cfg, &inst).unwrap();
        let u: Vec<f64> = sys.mean.iter().copied().collect();
        assert!(sys.residual(&u).iter().all(|&x| x == 0.0));
    }

    proptest! {
        #[test]
        fn transforms_keep_instruments_positive(
            xs in proptest::collection::vec(-50.0f64..50.0, 8..40),
            exp_std in any::<bool>(),
        ) {
            let n = xs.len();
            let mut p = panel(n);
            p.set_extra("x", xs).unwrap();
            let mut cfg = MomentSystemConfig::euler(
                vec![ReturnKind::Capital],
                vec![InstrumentSpec::lag("x", 1), InstrumentSpec::Growth { column: "C".into(), lag: 1 }],
            );
            cfg.positivity_transform = if exp_std {
                PositivityTransform::ExpStandardized
            } else {
                PositivityTransform::Exp
            };
            let inst = build_instruments(&p, &cfg).unwrap();
            prop_assert!(inst.values.iter().all(|&v| v > 0.0 && v.is_finite()));
        }
    }
}
