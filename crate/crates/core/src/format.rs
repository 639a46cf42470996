//! Text output: numbers at 12 significant digits, marginal-vector CSV files
//! and JSON records.
//!
//! Twelve digits sit well inside `f64` precision, so a parsed value formats
//! back to the same string and CSV files survive a read/write cycle
//! byte-for-byte.

use std::io::{Read, Write};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Decimal form with 12 significant digits and trailing zeros removed;
/// scientific notation outside `[1e-5, 1e15)`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..15).contains(&exp) {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to what [`fmt_num`] prints.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_num(x).parse().expect("formatted number parses")
    } else {
        x
    }
}

/// Serialises `value` with every non-integer number rounded by [`round_sig`].
pub fn to_json_value<T: Serialize>(value: &T) -> Result<Value> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::format(e.to_string()))?;
    round_json(&mut v);
    Ok(v)
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// One compact JSON record per line.
pub fn write_json_line<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    let v = to_json_value(value)?;
    serde_json::to_writer(&mut w, &v).map_err(|e| Error::format(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Rows of `trial,index,value`.
pub fn write_marginals_csv<W: Write>(w: W, releases: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial", "index", "value"]).map_err(csv_error)?;
    for (t, values) in releases.iter().enumerate() {
        for (j, v) in values.iter().enumerate() {
            out.write_record([t.to_string(), j.to_string(), fmt_num(*v)]).map_err(csv_error)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_marginals_csv<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != ["trial", "index", "value"] {
        return Err(Error::format(format!("unexpected marginals header {header:?}")));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let parse_index = |i: usize| -> Result<usize> {
            record[i].parse().map_err(|_| Error::format(format!("bad index {:?}", &record[i])))
        };
        let (t, j) = (parse_index(0)?, parse_index(1)?);
        let v: f64 = record[2].parse().map_err(|_| Error::format(format!("bad value {:?}", &record[2])))?;
        if t == out.len() {
            out.push(Vec::new());
        }
        let last = out.len();
        match out.get_mut(t) {
            Some(row) if t + 1 == last && j == row.len() => row.push(v),
            _ => return Err(Error::format(format!("rows out of order at trial {t}, index {j}"))),
        }
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::format(e.to_string())
    }
}

/// A header row and data rows, written as CSV with every cell preformatted.
pub fn write_table_csv<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_error)?;
    for row in rows {
        out.write_record(row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}
