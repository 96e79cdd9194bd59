use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Exact column order of the trace CSV.
pub const TRACE_HEADER: [&str; 8] = [
    "t",
    "F_real",
    "F_virtual",
    "err_norm",
    "dist_vr",
    "gamma_t",
    "comm_cost_cum",
    "tau_bits_cum",
];

/// One row of a run trace. Round `t` reports the gaps of the iterates it
/// produced (`x_{t+1}`, virtual `x~_{t+1}`) and the error state it started
/// from (`e_t`, `||x~_t - x_t||`). Virtual-iterate columns are empty for
/// methods without one.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub f_real: f64,
    pub f_virtual: Option<f64>,
    pub err_norm: f64,
    pub dist_vr: Option<f64>,
    pub gamma_t: f64,
    pub comm_cost_cum: f64,
    pub tau_bits_cum: u64,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Writes the trace with round-trip exponent formatting.
pub fn write_trace_csv<W: Write>(out: W, records: &[RoundRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(TRACE_HEADER)?;
    for r in records {
        writer.write_record([
            r.t.to_string(),
            format!("{:e}", r.f_real),
            cell(r.f_virtual),
            format!("{:e}", r.err_norm),
            cell(r.dist_vr),
            format!("{:e}", r.gamma_t),
            format!("{:e}", r.comm_cost_cum),
            r.tau_bits_cum.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_trace_csv<R: Read>(input: R) -> Result<Vec<RoundRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: "<trace>".into(),
            line: 1,
            message: format!(
                "unexpected header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |field: &str| Error::Parse {
            path: "<trace>".into(),
            line,
            message: format!("malformed `{field}`"),
        };
        let num = |j: usize| -> Result<f64> { row[j].parse().map_err(|_| bad(TRACE_HEADER[j])) };
        let opt = |j: usize| -> Result<Option<f64>> {
            if row[j].is_empty() {
                Ok(None)
            } else {
                num(j).map(Some)
            }
        };
        if row.len() != TRACE_HEADER.len() {
            return Err(bad("row width"));
        }
        records.push(RoundRecord {
            t: row[0].parse().map_err(|_| bad("t"))?,
            f_real: num(1)?,
            f_virtual: opt(2)?,
            err_norm: num(3)?,
            dist_vr: opt(4)?,
            gamma_t: num(5)?,
            comm_cost_cum: num(6)?,
            tau_bits_cum: row[7].parse().map_err(|_| bad("tau_bits_cum"))?,
        });
    }
    Ok(records)
}
