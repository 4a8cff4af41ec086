//! CSV text encoding used for every exchanged and emitted file.
//!
//! Numbers are written with 17 significant digits so that a 64-bit float
//! survives a write/read cycle bit for bit.

use crate::error::{DraError, Result};
use crate::scalar::Scalar;

pub fn fmt17<S: Scalar>(v: S) -> String {
    let x = v.to_f64_lossless();
    if x.is_nan() {
        return ".".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

pub fn parse_num<S: Scalar>(text: &str) -> Result<S> {
    let x: f64 = match text.trim() {
        "." | "" => f64::NAN,
        "inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        t => t
            .parse()
            .map_err(|_| DraError::Protocol(format!("`{t}` is not a number")))?,
    };
    S::from_f64(x).ok_or_else(|| DraError::Protocol(format!("`{text}` out of range")))
}

pub fn write_rows(rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .flexible(true)
        .from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("writing to memory cannot fail");
    }
    w.into_inner().expect("flushing to memory cannot fail")
}

pub fn read_rows(bytes: &[u8]) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut out = Vec::new();
    for rec in rdr.records() {
        out.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(out)
}

/// Two-column `Statistic,Value` table.
pub fn write_named_values<S: Scalar>(entries: &[(&str, S)]) -> Vec<u8> {
    let mut rows = vec![vec!["Statistic".to_string(), "Value".to_string()]];
    rows.extend(entries.iter().map(|(k, v)| vec![k.to_string(), fmt17(*v)]));
    write_rows(&rows)
}

pub fn read_named_values<S: Scalar>(bytes: &[u8]) -> Result<Vec<(String, S)>> {
    let rows = read_rows(bytes)?;
    match rows.first() {
        Some(h) if h.len() == 2 && h[0] == "Statistic" && h[1] == "Value" => {}
        _ => return Err(DraError::Protocol("expected a Statistic,Value header".into())),
    }
    rows[1..]
        .iter()
        .map(|r| {
            if r.len() != 2 {
                return Err(DraError::Protocol("Statistic,Value row has the wrong width".into()));
            }
            Ok((r[0].clone(), parse_num(&r[1])?))
        })
        .collect()
}

/// Single-row table with one column per label (the coefficient layout).
pub fn write_vector<S: Scalar>(labels: &[String], values: &[S]) -> Vec<u8> {
    write_rows(&[labels.to_vec(), values.iter().map(|&v| fmt17(v)).collect()])
}

pub fn read_vector<S: Scalar>(bytes: &[u8]) -> Result<(Vec<String>, Vec<S>)> {
    let rows = read_rows(bytes)?;
    if rows.len() != 2 || rows[0].len() != rows[1].len() {
        return Err(DraError::Protocol("expected a header row and one value row".into()));
    }
    let values = rows[1].iter().map(|t| parse_num(t)).collect::<Result<Vec<S>>>()?;
    Ok((rows[0].clone(), values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0, -0.0, f64::MIN_POSITIVE] {
            let s = fmt17(x);
            let back: f64 = parse_num(&s).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
        assert!(parse_num::<f64>(".").unwrap().is_nan());
    }

    #[test]
    fn vector_round_trip() {
        let labels = vec!["Intercept".to_string(), "x".to_string()];
        let bytes = write_vector(&labels, &[1.5f64, -0.25]);
        let (l, v) = read_vector::<f64>(&bytes).unwrap();
        assert_eq!(l, labels);
        assert_eq!(v, vec![1.5, -0.25]);
    }
}
