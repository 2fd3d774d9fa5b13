//! CSV input (`date,pi_obs,b_obs`, levels) and output
//! (`date,b_filtered,b_smoothed,gain`).

use std::io::{Read, Write};

use super::fit::ExtractionResult;
use super::model::MixedFreqData;
use crate::error::{Error, Result};

fn parse_share(raw: &str, row: usize, col: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::validation(format!("row {row}: cannot parse {col} value `{s}`")))?;
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::validation(format!("row {row}: {col} = {v} is not a share in (0, 1]")));
    }
    Ok(Some(v.ln()))
}

/// Reads shares and converts them to logs. Empty cells are missing.
pub fn read_mixed_csv<R: Read>(input: R) -> Result<MixedFreqData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let idx = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("missing column `{name}`")))
    };
    let (id, ip, ib) = (idx("date")?, idx("pi_obs")?, idx("b_obs")?);
    let mut data = MixedFreqData::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        data.dates.push(rec.get(id).unwrap_or("").to_string());
        data.log_pi.push(parse_share(rec.get(ip).unwrap_or(""), row, "pi_obs")?);
        data.log_b.push(parse_share(rec.get(ib).unwrap_or(""), row, "b_obs")?);
    }
    data.validate()?;
    Ok(data)
}

pub fn write_extraction_csv<W: Write>(res: &ExtractionResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "b_filtered", "b_smoothed", "gain"])?;
    for t in 0..res.dates.len() {
        w.write_record([
            res.dates[t].clone(),
            res.b_filtered[t].to_string(),
            res.b_smoothed[t].to_string(),
            res.gain[t].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_sparse_survey_column() {
        let csv = "date,pi_obs,b_obs\n2008Q1,0.05,\n2008Q2,0.06,0.01\n2008Q3,0.07,NA\n";
        let d = read_mixed_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.log_b[0], None);
        assert_eq!(d.log_b[1], Some(0.01f64.ln()));
        assert_eq!(d.log_pi[2], Some(0.07f64.ln()));
    }

    #[test]
    fn rejects_non_shares() {
        let csv = "date,pi_obs,b_obs\n2008Q1,1.5,0.01\n";
        assert!(read_mixed_csv(csv.as_bytes()).is_err());
        let csv = "date,pi_obs\n2008Q1,0.5\n";
        assert!(read_mixed_csv(csv.as_bytes()).is_err());
    }
}
