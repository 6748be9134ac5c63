//! Small CSV writer for numeric tables.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

/// Renders rows of `f64` under a header line. `Display` for `f64` prints the
/// shortest decimal that parses back to the same bits, so identical inputs
/// always produce identical bytes.
pub fn csv_string(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::with_capacity(header.len() + 1 + rows.len() * 24);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes [`csv_string`] to `path`, creating parent directories.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, csv_string(header, rows))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_is_lossless_and_stable() {
        let rows = vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-9, 7.0]];
        let s = csv_string("a,b", &rows);
        assert_eq!(s, csv_string("a,b", &rows));
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("a,b"));
        let first: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(first, rows[0]);
    }
}
