//! Shared text-output helpers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Writes `# key=value` comment lines followed by CSV rows.
pub fn write_csv(path: &Path, comments: &[(String, String)], header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (k, v) in comments {
        writeln!(out, "# {k}={v}")?;
    }
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the `# key=value` comment lines at the top of a CSV file.
pub fn read_comments(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').trim().split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, f64::MAX] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }
}
