//! Plain-text table output. Every file starts with `#` comment lines naming
//! the crate version and the SHA-256 of the config that produced it; floats
//! use the shortest representation that round-trips exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputHeader {
    pub config_sha256: String,
    pub version: String,
}

impl OutputHeader {
    pub fn new(config_sha256: impl Into<String>) -> Self {
        OutputHeader {
            config_sha256: config_sha256.into(),
            version: VERSION.to_string(),
        }
    }

    pub fn comment_lines(&self) -> String {
        format!(
            "# hjb-leverage {}\n# config-sha256 {}\n",
            self.version, self.config_sha256
        )
    }
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("table i/o: {e}"))
}

/// Writes `rows` rows of `names.len()` columns, cell text from `cell(row, col)`.
pub fn write_table<W: Write>(
    mut w: W,
    header: Option<&OutputHeader>,
    names: &[&str],
    rows: usize,
    cell: impl Fn(usize, usize) -> String,
) -> Result<()> {
    if let Some(h) = header {
        w.write_all(h.comment_lines().as_bytes()).map_err(io_err)?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(names).map_err(io_err)?;
    for r in 0..rows {
        out.write_record((0..names.len()).map(|c| cell(r, c)))
            .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// A parsed table: header names and string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read<R: Read>(r: R) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let names = rdr
            .headers()
            .map_err(io_err)?
            .iter()
            .map(String::from)
            .collect();
        let rows = rdr
            .records()
            .map(|rec| {
                rec.map(|r| r.iter().map(String::from).collect())
                    .map_err(io_err)
            })
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Table { names, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let k = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| io_err(format!("missing column {name}")))?;
        Ok(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .into_iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| io_err(format!("column {name}: {e}")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bit_exactly() {
        let vals = [0.1 + 0.2, 1e-300, -7.184, f64::INFINITY, 3.0];
        let mut buf = Vec::new();
        write_table(
            &mut buf,
            Some(&OutputHeader::new("abc")),
            &["a"],
            vals.len(),
            |r, _| vals[r].to_string(),
        )
        .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# hjb-leverage"));
        let t = Table::read(buf.as_slice()).unwrap();
        let back = t.column_f64("a").unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
