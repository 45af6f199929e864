//! Output files. CSV files start with a `#` line naming the tool version and
//! the spec hash; JSON files wrap their payload with the same two fields.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SpecError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV cell.
#[derive(Clone, Debug)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits round-trip every f64
            Cell::F(v) => format!("{v:.16e}"),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => (if *v { "1" } else { "0" }).to_string(),
        }
    }
}

fn out_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> SpecError + '_ {
    move |e| SpecError::Output(format!("{}: {e}", path.display()))
}

pub fn header_line(hash: &str) -> String {
    format!("# specop {VERSION} spec-hash {hash}\n")
}

pub fn csv_string(hash: &str, columns: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| SpecError::Output(e.to_string());
    w.write_record(columns).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(err)?;
    }
    let body = w.into_inner().map_err(|e| SpecError::Output(e.to_string()))?;
    Ok(header_line(hash) + &String::from_utf8_lossy(&body))
}

pub fn write_csv(path: &Path, hash: &str, columns: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    fs::write(path, csv_string(hash, columns, rows)?).map_err(out_err(path))
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    specop_version: &'a str,
    spec_hash: &'a str,
    data: &'a T,
}

pub fn json_string<T: Serialize>(hash: &str, data: &T) -> Result<String> {
    let w = Wrapped { specop_version: VERSION, spec_hash: hash, data };
    let mut s = serde_json::to_string_pretty(&w).map_err(|e| SpecError::Output(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, hash: &str, data: &T) -> Result<()> {
    fs::write(path, json_string(hash, data)?).map_err(out_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        let vals = [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, f64::MAX];
        let rows: Vec<Vec<Cell>> = vals.iter().map(|&v| vec![Cell::F(v), Cell::I(3), Cell::B(true)]).collect();
        let s = csv_string("abc", &["x", "i", "b"], &rows).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), format!("# specop {VERSION} spec-hash abc"));
        assert_eq!(lines.next().unwrap(), "x,i,b");
        for (line, v) in lines.zip(vals) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0].parse::<f64>().unwrap().to_bits(), v.to_bits());
            assert_eq!(&cells[1..], &["3", "1"]);
        }
    }

    #[test]
    fn json_carries_version_and_hash() {
        let s = json_string("00ff", &Vec::<f64>::new()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["spec_hash"], "00ff");
        assert_eq!(v["specop_version"], VERSION);
        assert_eq!(v["data"], serde_json::json!([]));
    }
}
