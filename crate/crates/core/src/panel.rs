//! Aligned quarterly (or model-period) aggregate time series.
//!
//! Every column is indexed by period `t`. Gross returns are stored at the
//! period in which they are realized, so the moment dated `t` reads
//! `returns[kind][t + 1]`. Missing entries are `NaN`; consumers check
//! finiteness only on the rows they actually use.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    Capital,
    Government,
    Interbank,
    Equity,
    Eonia,
}

impl ReturnKind {
    pub const ALL: [ReturnKind; 5] = [
        ReturnKind::Capital,
        ReturnKind::Government,
        ReturnKind::Interbank,
        ReturnKind::Equity,
        ReturnKind::Eonia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReturnKind::Capital => "capital",
            ReturnKind::Government => "government",
            ReturnKind::Interbank => "interbank",
            ReturnKind::Equity => "equity",
            ReturnKind::Eonia => "eonia",
        }
    }

    /// Column name used in CSV exports, e.g. `R_g`.
    pub fn column(self) -> &'static str {
        match self {
            ReturnKind::Capital => "R_k",
            ReturnKind::Government => "R_g",
            ReturnKind::Interbank => "R_ib",
            ReturnKind::Equity => "R_e",
            ReturnKind::Eonia => "R_eonia",
        }
    }
}

impl fmt::Display for ReturnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReturnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReturnKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || k.column() == s)
            .ok_or_else(|| Error::validation(format!("unknown return kind `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroPanel {
    pub dates: Vec<String>,
    /// Real per-capita consumption.
    pub c: Vec<f64>,
    /// Hours per capita.
    pub l: Option<Vec<f64>>,
    /// Real wage per hour.
    pub w: Option<Vec<f64>>,
    /// Gross real returns, indexed by realization date.
    pub returns: BTreeMap<ReturnKind, Vec<f64>>,
    /// Cross-sectional Var(c_i / C_t).
    pub var_share: Option<Vec<f64>>,
    /// Fraction of constrained households.
    pub b: Option<Vec<f64>>,
    /// Auxiliary series (deflator, nominal rates, instrument sources).
    pub extra: BTreeMap<String, Vec<f64>>,
    /// Provenance notes per column.
    pub notes: BTreeMap<String, String>,
}

impl MacroPanel {
    pub fn new(dates: Vec<String>, c: Vec<f64>) -> Result<Self> {
        if dates.len() != c.len() {
            return Err(Error::validation(format!(
                "date index has {} entries but consumption has {}",
                dates.len(),
                c.len()
            )));
        }
        Ok(MacroPanel {
            dates,
            c,
            ..Default::default()
        })
    }

    /// Panel indexed `0..n` with string dates equal to the index.
    pub fn with_index(c: Vec<f64>) -> Self {
        let dates = (0..c.len()).map(|t| t.to_string()).collect();
        MacroPanel {
            dates,
            c,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    fn check_len(&self, name: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::validation(format!(
                "column `{name}` has {} entries, panel has {}",
                v.len(),
                self.len()
            )));
        }
        Ok(())
    }

    pub fn set_labor(&mut self, l: Vec<f64>, w: Vec<f64>) -> Result<()> {
        self.check_len("L", &l)?;
        self.check_len("W", &w)?;
        self.l = Some(l);
        self.w = Some(w);
        Ok(())
    }

    pub fn set_return(&mut self, kind: ReturnKind, r: Vec<f64>) -> Result<()> {
        self.check_len(kind.column(), &r)?;
        self.returns.insert(kind, r);
        Ok(())
    }

    pub fn set_var_share(&mut self, v: Vec<f64>) -> Result<()> {
        self.check_len("var_share", &v)?;
        self.var_share = Some(v);
        Ok(())
    }

    pub fn set_b(&mut self, b: Vec<f64>) -> Result<()> {
        self.check_len("B", &b)?;
        self.b = Some(b);
        Ok(())
    }

    pub fn set_extra(&mut self, name: impl Into<String>, v: Vec<f64>) -> Result<()> {
        let name = name.into();
        self.check_len(&name, &v)?;
        self.extra.insert(name, v);
        Ok(())
    }

    pub fn return_series(&self, kind: ReturnKind) -> Result<&[f64]> {
        self.returns
            .get(&kind)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::validation(format!("panel has no {kind} return series")))
    }

    /// Looks a column up by its export name (`C`, `L`, `W`, `var_share`, `B`,
    /// a return column such as `R_g`, or any auxiliary series).
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        match name {
            "C" => Some(&self.c),
            "L" => self.l.as_deref(),
            "W" => self.w.as_deref(),
            "var_share" => self.var_share.as_deref(),
            "B" => self.b.as_deref(),
            _ => {
                if let Ok(kind) = name.parse::<ReturnKind>() {
                    if let Some(r) = self.returns.get(&kind) {
                        return Some(r);
                    }
                }
                self.extra.get(name).map(Vec::as_slice)
            }
        }
    }

    /// Replaces missing `var_share` entries by the sample mean of the
    /// observed ones; a fully missing column becomes zeros.
    pub fn impute_var_share(&mut self) {
        let n = self.len();
        match &mut self.var_share {
            None => {
                self.var_share = Some(vec![0.0; n]);
                self.notes
                    .insert("var_share".into(), "absent; set to 0".into());
            }
            Some(v) => {
                let obs: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
                if obs.len() == v.len() {
                    return;
                }
                let fill = if obs.is_empty() {
                    0.0
                } else {
                    obs.iter().sum::<f64>() / obs.len() as f64
                };
                for x in v.iter_mut().filter(|x| !x.is_finite()) {
                    *x = fill;
                }
                self.notes.insert(
                    "var_share".into(),
                    format!("missing entries imputed at sample mean {fill:.6e}"),
                );
            }
        }
    }

    /// Sub-panel over periods `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<MacroPanel> {
        if start > end || end > self.len() {
            return Err(Error::validation(format!(
                "invalid slice {start}..{end} of panel with {} periods",
                self.len()
            )));
        }
        let cut = |v: &Vec<f64>| v[start..end].to_vec();
        Ok(MacroPanel {
            dates: self.dates[start..end].to_vec(),
            c: cut(&self.c),
            l: self.l.as_ref().map(cut),
            w: self.w.as_ref().map(cut),
            returns: self.returns.iter().map(|(k, v)| (*k, cut(v))).collect(),
            var_share: self.var_share.as_ref().map(cut),
            b: self.b.as_ref().map(cut),
            extra: self.extra.iter().map(|(k, v)| (k.clone(), cut(v))).collect(),
            notes: self.notes.clone(),
        })
    }

    /// Writes every present column to CSV, `NaN` for missing values.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut cols: Vec<(String, &[f64])> = vec![("C".into(), &self.c)];
        if let Some(l) = &self.l {
            cols.push(("L".into(), l));
        }
        if let Some(w) = &self.w {
            cols.push(("W".into(), w));
        }
        for (k, v) in &self.returns {
            cols.push((k.column().into(), v));
        }
        if let Some(v) = &self.var_share {
            cols.push(("var_share".into(), v));
        }
        if let Some(b) = &self.b {
            cols.push(("B".into(), b));
        }
        for (k, v) in &self.extra {
            cols.push((k.clone(), v));
        }
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(cols.iter().map(|(n, _)| n.clone()));
        wtr.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![self.dates[t].clone()];
            rec.extend(cols.iter().map(|(_, v)| format_value(v[t])));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the layout produced by [`MacroPanel::write_csv`].
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<MacroPanel> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("date") {
            return Err(Error::validation("first column must be `date`"));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut dates = Vec::new();
        let mut data: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            dates.push(rec.get(0).unwrap_or_default().to_string());
            for (j, col) in data.iter_mut().enumerate() {
                let field = rec.get(j + 1).unwrap_or("").trim();
                col.push(parse_value(field).ok_or_else(|| {
                    Error::validation(format!(
                        "row {}: column `{}` is not numeric: `{field}`",
                        row + 1,
                        names[j]
                    ))
                })?);
            }
        }
        let mut panel = MacroPanel::default();
        panel.dates = dates;
        let mut c = None;
        let (mut l, mut w) = (None, None);
        for (name, col) in names.into_iter().zip(data) {
            match name.as_str() {
                "C" => c = Some(col),
                "L" => l = Some(col),
                "W" => w = Some(col),
                "var_share" => panel.var_share = Some(col),
                "B" => panel.b = Some(col),
                other => match other.parse::<ReturnKind>() {
                    Ok(kind) => {
                        panel.returns.insert(kind, col);
                    }
                    Err(_) => {
                        panel.extra.insert(name, col);
                    }
                },
            }
        }
        panel.c = c.ok_or_else(|| Error::validation("panel CSV lacks a `C` column"))?;
        panel.l = l;
        panel.w = w;
        Ok(panel)
    }
}

/// Shortest representation that round-trips exactly.
pub(crate) fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:?}")
    }
}

pub(crate) fn parse_value(s: &str) -> Option<f64> {
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        Some(f64::NAN)
    } else {
        s.parse().ok()
    }
}
