//! Turning-count demand tables.
//!
//! CSV with header `approach,turn,count_per_hour`, one row per movement.
//! Approaches are `E W N S`, turns `L C R`. Right-turn rows are accepted and
//! ignored; missing movements get rate 0. Lines starting with `#` are
//! comments.

use std::path::Path;

use thiserror::Error;

use crate::movement::{Approach, MovementId, Turn};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TurningCounts {
    /// Vehicles per hour, in canonical movement order.
    pub rates: [f64; 8],
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("header must be `approach,turn,count_per_hour`, found `{0}`")]
    Header(String),
}

const HEADER: [&str; 3] = ["approach", "turn", "count_per_hour"];

pub fn load_turning_counts(path: &Path) -> Result<TurningCounts, DemandError> {
    let text = std::fs::read(path).map_err(|source| DemandError::Io { path: path.display().to_string(), source })?;
    parse_turning_counts(&text)
}

pub fn parse_turning_counts(bytes: &[u8]) -> Result<TurningCounts, DemandError> {
    let mut out = TurningCounts::default();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut seen = [false; 8];
    let mut header_done = false;
    for rec in rdr.byte_records() {
        let rec = rec.map_err(|e| DemandError::Row {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<String> = rec.iter().map(|f| String::from_utf8_lossy(f).into_owned()).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        if !header_done {
            if fields.len() != 3 || fields.iter().zip(HEADER).any(|(f, h)| !f.eq_ignore_ascii_case(h)) {
                return Err(DemandError::Header(fields.join(",")));
            }
            header_done = true;
            continue;
        }
        let row = |msg: String| DemandError::Row { line, msg };
        if fields.len() != 3 {
            return Err(row(format!("expected 3 fields, found {}", fields.len())));
        }
        let approach = {
            let mut c = fields[0].chars();
            match (c.next(), c.next()) {
                (Some(ch), None) => Approach::from_letter(ch),
                _ => None,
            }
        }
        .ok_or_else(|| row(format!("unknown approach `{}`", fields[0])))?;
        let count: f64 = fields[2].parse().map_err(|_| row(format!("count `{}` is not a number", fields[2])))?;
        if !count.is_finite() || count < 0.0 {
            return Err(row(format!("count must be finite and non-negative, found {count}")));
        }
        let turn = match fields[1].to_ascii_uppercase().as_str() {
            "L" => Turn::L,
            "C" => Turn::C,
            "R" => {
                out.warnings.push(format!("line {line}: right turn from {} ignored", approach.letter()));
                continue;
            }
            other => return Err(row(format!("unknown turn `{other}`"))),
        };
        let i = MovementId::new(approach, turn).index();
        if seen[i] {
            return Err(row(format!("duplicate movement {}", MovementId::new(approach, turn))));
        }
        seen[i] = true;
        out.rates[i] = count;
    }
    if !header_done {
        out.warnings.push("empty demand file; all rates are 0".into());
    }
    Ok(out)
}
