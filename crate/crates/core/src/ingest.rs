//! Raw quarterly aggregates to a [`MacroPanel`], and the survey recipe for
//! the cross-sectional consumption variance.
//!
//! Transformations:
//!
//! ```text
//! C_t  = C^tot_t / (Pop_t · P_t) · 100
//! L_t  = H^tot_t / Pop_t
//! W_t  = W^tot_t / H^tot_t
//! π_t  = ln(P_t / P_{t−1})
//! ln R_{x,t+1} = ln(1 + i_{x,t}) − ln(1 + π_{t+1})
//! ```

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{parse_value, MacroPanel, ReturnKind};

/// Column names of the raw file. Everything economically meaningful is
/// named explicitly; there are no defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSchema {
    pub date: String,
    pub consumption_total: String,
    pub population: String,
    pub deflator: String,
    pub hours_total: Option<String>,
    pub compensation_total: Option<String>,
    /// Quarterly nominal rate column per return kind.
    pub rates: BTreeMap<ReturnKind, String>,
    /// Rates quoted in percent rather than as fractions.
    pub rates_in_percent: bool,
    pub var_share: Option<String>,
    pub constrained_share: Option<String>,
}

/// Parsed quarter, ordered by (year, quarter).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Quarter {
    pub year: i32,
    pub quarter: u8,
}

impl Quarter {
    /// Accepts `2001Q1`, `2001-Q1`, `2001:Q1` and `2001 Q1`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::validation(format!("date `{s}` is not a quarter like 2001Q1"));
        let pos = s.find(['Q', 'q']).ok_or_else(bad)?;
        let year: i32 = s[..pos].trim_end_matches(['-', ':', ' ']).parse().map_err(|_| bad())?;
        let quarter: u8 = s[pos + 1..].parse().map_err(|_| bad())?;
        if !(1..=4).contains(&quarter) {
            return Err(bad());
        }
        Ok(Quarter { year, quarter })
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Quarter {
                year: self.year + 1,
                quarter: 1,
            }
        } else {
            Quarter {
                quarter: self.quarter + 1,
                ..self
            }
        }
    }
}

impl std::fmt::Display for Quarter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

/// Raw CSV as named numeric columns plus the untouched first-named date column.
#[derive(Debug, Clone, Default)]
pub struct RawTable {
    pub columns: BTreeMap<String, Vec<f64>>,
    pub strings: BTreeMap<String, Vec<String>>,
    pub n_rows: usize,
}

impl RawTable {
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut strings: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (j, col) in strings.iter_mut().enumerate() {
                col.push(rec.get(j).unwrap_or("").trim().to_string());
            }
        }
        let n_rows = strings.first().map_or(0, Vec::len);
        let mut table = RawTable {
            n_rows,
            ..Default::default()
        };
        for (name, col) in headers.into_iter().zip(strings) {
            if let Some(v) = col.iter().map(|s| parse_value(s)).collect::<Option<Vec<f64>>>() {
                table.columns.insert(name.clone(), v);
            }
            table.strings.insert(name, col);
        }
        Ok(table)
    }

    fn numeric(&self, name: &str) -> Result<&[f64]> {
        if !self.strings.contains_key(name) {
            return Err(Error::validation(format!("missing column `{name}`")));
        }
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::validation(format!("column `{name}` is not numeric")))
    }
}

fn positive(name: &str, v: &[f64], dates: &[String]) -> Result<()> {
    match v.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        Some(t) => Err(Error::validation(format!(
            "column `{name}` is not positive at {} (value {})",
            dates[t], v[t]
        ))),
        None => Ok(()),
    }
}

/// Applies the documented transformations. Returns are stored at their
/// realization date, so R_{x,0} is missing.
pub fn ingest(table: &RawTable, schema: &IngestSchema) -> Result<MacroPanel> {
    let dates = table
        .strings
        .get(&schema.date)
        .ok_or_else(|| Error::validation(format!("missing column `{}`", schema.date)))?
        .clone();
    if dates.len() < 2 {
        return Err(Error::validation("need at least two quarters"));
    }
    let quarters = dates.iter().map(|d| Quarter::parse(d)).collect::<Result<Vec<_>>>()?;
    for (t, w) in quarters.windows(2).enumerate() {
        if w[1] != w[0].next() {
            return Err(Error::validation(format!(
                "dates are not contiguous quarters: {} is followed by {}",
                dates[t],
                dates[t + 1]
            )));
        }
    }
    let c_tot = table.numeric(&schema.consumption_total)?;
    let pop = table.numeric(&schema.population)?;
    let p = table.numeric(&schema.deflator)?;
    for (name, v) in [
        (&schema.consumption_total, c_tot),
        (&schema.population, pop),
        (&schema.deflator, p),
    ] {
        positive(name, v, &dates)?;
    }
    let n = dates.len();
    let c: Vec<f64> = (0..n).map(|t| c_tot[t] / (pop[t] * p[t]) * 100.0).collect();
    let mut panel = MacroPanel::new(dates.iter().map(|d| Quarter::parse(d).unwrap().to_string()).collect(), c)?;
    panel
        .notes
        .insert("C".into(), format!("{} / ({} * {}) * 100", schema.consumption_total, schema.population, schema.deflator));
    let mut pi = vec![f64::NAN; n];
    for t in 1..n {
        pi[t] = (p[t] / p[t - 1]).ln();
    }
    panel.set_extra("P", p.to_vec())?;
    panel.set_extra("pi", pi.clone())?;
    panel.notes.insert("pi".into(), format!("ln({0}_t / {0}_(t-1))", schema.deflator));
    match (&schema.hours_total, &schema.compensation_total) {
        (Some(h), Some(wt)) => {
            let hours = table.numeric(h)?;
            let comp = table.numeric(wt)?;
            positive(h, hours, &dates)?;
            positive(wt, comp, &dates)?;
            let l = (0..n).map(|t| hours[t] / pop[t]).collect();
            let w = (0..n).map(|t| comp[t] / hours[t]).collect();
            panel.set_labor(l, w)?;
            panel.notes.insert("L".into(), format!("{h} / {}", schema.population));
            panel.notes.insert("W".into(), format!("{wt} / {h}"));
        }
        (None, None) => {}
        _ => {
            return Err(Error::Config {
                key: "ingest.hours_total".into(),
                reason: "hours and compensation must be given together".into(),
            })
        }
    }
    let scale = if schema.rates_in_percent { 0.01 } else { 1.0 };
    for (&kind, col) in &schema.rates {
        let i = table.numeric(col)?;
        let mut r = vec![f64::NAN; n];
        for t in 0..n - 1 {
            let gross = 1.0 + scale * i[t];
            if !(gross > 0.0) && i[t].is_finite() {
                return Err(Error::validation(format!("rate `{col}` implies a nonpositive gross return at {}", dates[t])));
            }
            r[t + 1] = ((gross).ln() - (1.0 + pi[t + 1]).ln()).exp();
        }
        panel.set_extra(format!("i_{}", kind.as_str()), i.iter().map(|v| v * scale).collect())?;
        panel.set_return(kind, r)?;
        panel.notes.insert(
            kind.column().into(),
            format!("exp(ln(1 + {col}_t) - ln(1 + pi_(t+1))), stored at t+1"),
        );
    }
    if let Some(col) = &schema.var_share {
        let v = table.numeric(col)?;
        if let Some(t) = v.iter().position(|x| *x < 0.0) {
            return Err(Error::validation(format!("`{col}` is negative at {}", dates[t])));
        }
        panel.set_var_share(v.to_vec())?;
        panel.notes.insert("var_share".into(), col.clone());
    }
    if let Some(col) = &schema.constrained_share {
        let b = table.numeric(col)?;
        if let Some(t) = b.iter().position(|x| x.is_finite() && !(0.0..=1.0).contains(x)) {
            return Err(Error::validation(format!("`{col}` lies outside [0, 1] at {}", dates[t])));
        }
        panel.set_b(b.to_vec())?;
        panel.notes.insert("B".into(), col.clone());
    }
    for (k, v) in &panel.notes {
        log::info!("ingest: {k} = {v}");
    }
    Ok(panel)
}

/// Survey columns entering annual nominal consumption
/// `12 · (rent + car/12 + durables/12 + nondurables)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyColumns {
    pub weight: String,
    pub imputed_rent: String,
    pub car_purchases: String,
    pub house_durables: String,
    pub nondurables: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurveyVariance {
    /// Weighted population variance of annual nominal consumption.
    pub variance: f64,
    pub mean: f64,
    /// variance / mean², the variance of c_i / C.
    pub share_variance: f64,
    pub n_households: usize,
}

/// Annual nominal consumption of one household.
pub fn annual_consumption(rent: f64, car: f64, durables: f64, nondurables: f64) -> f64 {
    12.0 * (rent + car / 12.0 + durables / 12.0 + nondurables)
}

/// Weighted variance Σw(c − c̄)²/Σw over households with complete rows.
pub fn shf_variance_recipe(table: &RawTable, cols: &SurveyColumns) -> Result<SurveyVariance> {
    let w = table.numeric(&cols.weight)?;
    let parts = [
        table.numeric(&cols.imputed_rent)?,
        table.numeric(&cols.car_purchases)?,
        table.numeric(&cols.house_durables)?,
        table.numeric(&cols.nondurables)?,
    ];
    if let Some(i) = w.iter().position(|x| *x < 0.0) {
        return Err(Error::validation(format!("survey weight is negative in row {}", i + 1)));
    }
    let rows: Vec<(f64, f64)> = (0..table.n_rows)
        .filter(|&i| w[i].is_finite() && parts.iter().all(|p| p[i].is_finite()))
        .map(|i| (w[i], annual_consumption(parts[0][i], parts[1][i], parts[2][i], parts[3][i])))
        .collect();
    let total: f64 = rows.iter().map(|r| r.0).sum();
    if !(total > 0.0) {
        return Err(Error::validation("survey weights sum to zero"));
    }
    let mean = rows.iter().map(|(w, c)| w * c).sum::<f64>() / total;
    let variance = (rows.iter().map(|(w, c)| w * (c - mean).powi(2)).sum::<f64>() / total).max(0.0);
    log::info!(
        "survey variance from {}: rent {} x12, car {}/12, durables {}/12, nondurables {} x12",
        rows.len(),
        cols.imputed_rent,
        cols.car_purchases,
        cols.house_durables,
        cols.nondurables
    );
    Ok(SurveyVariance {
        variance,
        mean,
        share_variance: if mean != 0.0 { variance / (mean * mean) } else { f64::NAN },
        n_households: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_formats() {
        for s in ["2001Q1", "2001-Q1", "2001:Q1", "2001 q1"] {
            assert_eq!(Quarter::parse(s).unwrap(), Quarter { year: 2001, quarter: 1 });
        }
        assert_eq!(Quarter::parse("2001Q4").unwrap().next().to_string(), "2002Q1");
        assert!(Quarter::parse("2001Q5").is_err());
        assert!(Quarter::parse("2001-03").is_err());
    }

    #[test]
    fn annual_sum() {
        assert_eq!(annual_consumption(500.0, 1200.0, 600.0, 800.0), 12.0 * (500.0 + 100.0 + 50.0 + 800.0));
    }
}
