//! Artifact formats: CSV (comma separated, `\n` line endings, shortest
//! round-trip float formatting), ASCII PGM and atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::pssmlt::Image;

/// Writes `bytes` to a temporary file beside `path`, then renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn one_line(text: &str) -> String {
    text.replace(['\n', '\r'], " ")
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Incrementally built CSV document with a leading `# ` comment line.
#[derive(Clone, Debug, Default)]
pub struct CsvWriter {
    buf: String,
}

impl CsvWriter {
    pub fn new(comment: &str, header: &[String]) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "# {}", one_line(comment));
        buf.push_str(&header.join(","));
        buf.push('\n');
        CsvWriter { buf }
    }

    /// Appends one row: integer columns first, then floats.
    pub fn row(&mut self, ints: &[u64], values: &[f64]) {
        let mut first = true;
        for i in ints {
            if !first {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{i}");
            first = false;
        }
        for v in values {
            if !first {
                self.buf.push(',');
            }
            self.buf.push_str(&fmt_f64(*v));
            first = false;
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Header names `prefix0, prefix1, …`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Parsed numeric CSV: comment lines dropped, optional header kept.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    /// Index of a named column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.as_ref()?.iter().position(|h| h == name)
    }
}

/// Reads comma-separated numbers. Lines starting with `#` are skipped; a
/// first data line that does not parse as numbers is taken as the header.
pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                if let Some(first) = rows.first() {
                    if first.len() != v.len() {
                        return Err(Error::RejectedInput(format!(
                            "line {}: expected {} columns, found {}",
                            lineno + 1,
                            first.len(),
                            v.len()
                        )));
                    }
                }
                rows.push(v);
            }
            Err(_) if header.is_none() && rows.is_empty() => {
                header = Some(fields.iter().map(|s| s.to_string()).collect());
            }
            Err(_) => {
                return Err(Error::RejectedInput(format!("line {}: non-numeric value", lineno + 1)));
            }
        }
    }
    if let (Some(h), Some(r)) = (&header, rows.first()) {
        if h.len() != r.len() {
            return Err(Error::RejectedInput("header and data column counts differ".into()));
        }
    }
    Ok(CsvTable { header, rows })
}

/// ASCII PGM (`P2`, maxval 65535) with a `#` comment line; pixel values are
/// mapped linearly so the brightest pixel becomes 65535.
pub fn pgm_string(img: &Image, comment: &str) -> String {
    let max = img.pixels.iter().cloned().fold(0.0, f64::max);
    let mut out = String::new();
    let _ = writeln!(out, "P2");
    let _ = writeln!(out, "# {}", one_line(comment));
    let _ = writeln!(out, "{} {}", img.width, img.height);
    let _ = writeln!(out, "65535");
    for row in img.pixels.chunks(img.width) {
        let line: Vec<String> = row
            .iter()
            .map(|p| {
                let v = if max > 0.0 { (p / max * 65535.0).round() } else { 0.0 };
                format!("{}", v.clamp(0.0, 65535.0) as u32)
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Raw floating pixel values as CSV: `row,col,value`.
pub fn image_csv_string(img: &Image, comment: &str) -> String {
    let mut w = CsvWriter::new(comment, &["row".into(), "col".into(), "value".into()]);
    for (i, p) in img.pixels.iter().enumerate() {
        w.row(&[(i / img.width) as u64, (i % img.width) as u64], &[*p]);
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_bits() {
        let vals = [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0];
        let mut w = CsvWriter::new("seed=1\nsecond line", &numbered("x", vals.len()));
        w.row(&[], &vals);
        let text = w.finish();
        assert!(text.starts_with("# seed=1 second line\n"));
        assert!(!text.contains('\r'));
        let t = parse_csv(&text).unwrap();
        assert_eq!(t.header.as_ref().unwrap()[4], "x4");
        for (a, b) in t.rows[0].iter().zip(vals) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_mixed_columns() {
        let mut w = CsvWriter::new("c", &["step".into(), "x".into()]);
        w.row(&[7], &[1.5]);
        assert!(w.finish().ends_with("step,x\n7,1.5\n"));
    }

    #[test]
    fn ragged_csv_rejected() {
        assert!(parse_csv("1,2\n3\n").is_err());
        assert!(parse_csv("a,b\n1,2\nx,y\n").is_err());
        assert_eq!(parse_csv("# only comment\n").unwrap().rows.len(), 0);
    }

    #[test]
    fn pgm_layout() {
        let mut img = Image::new(3, 2).unwrap();
        img.pixels = vec![0.0, 1.0, 2.0, 4.0, 3.0, 0.5];
        let s = pgm_string(&img, "cfg");
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], "# cfg");
        assert_eq!(lines[2], "3 2");
        assert_eq!(lines[3], "65535");
        assert_eq!(lines[4], "0 16384 32768");
        assert_eq!(lines[5], "65535 49151 8192");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
