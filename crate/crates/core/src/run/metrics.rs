//! Line-delimited epoch records:
//!
//! ```text
//! epoch=1 train_loss=1.0986...e0 train_top1=3.35e-1 test_top1=4.0e-1 wall_seconds=1.2e-1
//! ```
//!
//! Numbers carry 17 significant digits, so every `f64` reads back exactly.
//! `wall_seconds` is optional.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::network::EpochRecord;

pub fn format_record(r: &EpochRecord, wall_time: bool) -> String {
    let mut s = format!(
        "epoch={} train_loss={:.16e} train_top1={:.16e} test_top1={:.16e}",
        r.epoch, r.train_loss, r.train_top1, r.test_top1
    );
    if wall_time {
        s.push_str(&format!(" wall_seconds={:.16e}", r.wall_seconds));
    }
    s
}

pub fn parse_record(line: &str) -> Result<EpochRecord> {
    let bad = |why: &str| Error::Format(format!("metrics record {line:?}: {why}"));
    let fields: Vec<(&str, &str)> = line
        .split_whitespace()
        .map(|f| f.split_once('=').ok_or_else(|| bad("field without '='")))
        .collect::<Result<_>>()?;
    let names: Vec<&str> = fields.iter().map(|f| f.0).collect();
    let expected = ["epoch", "train_loss", "train_top1", "test_top1", "wall_seconds"];
    if !(names == expected[..4] || names == expected) {
        return Err(bad("fields out of order or missing"));
    }
    let num = |i: usize| fields[i].1.parse::<f64>().map_err(|_| bad("bad number"));
    Ok(EpochRecord {
        epoch: fields[0].1.parse().map_err(|_| bad("bad epoch"))?,
        train_loss: num(1)?,
        train_top1: num(2)?,
        test_top1: num(3)?,
        wall_seconds: if fields.len() == 5 { num(4)? } else { 0.0 },
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_record)
        .collect()
}

/// Appends one record per epoch, flushing after each.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    wall_time: bool,
    written: usize,
}

impl MetricsWriter {
    /// Creates (truncating) the metrics file.
    pub fn create(path: &Path, wall_time: bool) -> Result<Self> {
        let file = File::create(path)?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            wall_time,
            written: 0,
        })
    }

    /// Opens an existing file for appending.
    pub fn append(path: &Path, wall_time: bool) -> Result<Self> {
        let written = if path.exists() { read_metrics(path)?.len() } else { 0 };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            wall_time,
            written,
        })
    }

    pub fn write(&mut self, r: &EpochRecord) -> Result<()> {
        let line = format_record(r, self.wall_time);
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!(
                        "writing {}: {e}; the file keeps the {} completed epochs before the failure",
                        self.path.display(),
                        self.written
                    ),
                ))
            })?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: 1.0 / 3.0 + epoch as f64,
            train_top1: 0.1 + 0.2,
            test_top1: std::f64::consts::PI / 10.0,
            wall_seconds: 1e-300,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        for wall in [false, true] {
            let r = record(7);
            let back = parse_record(&format_record(&r, wall)).unwrap();
            assert_eq!(back.train_loss.to_bits(), r.train_loss.to_bits());
            assert_eq!(back.train_top1.to_bits(), r.train_top1.to_bits());
            assert_eq!(back.test_top1.to_bits(), r.test_top1.to_bits());
            assert_eq!(back.wall_seconds, if wall { r.wall_seconds } else { 0.0 });
        }
    }

    #[test]
    fn writer_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let mut w = MetricsWriter::create(&path, true).unwrap();
        for e in 1..=3 {
            w.write(&record(e)).unwrap();
        }
        drop(w);
        let mut w = MetricsWriter::append(&path, true).unwrap();
        assert_eq!(w.written(), 3);
        w.write(&record(4)).unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(back[3], record(4));
    }

    #[test]
    fn malformed_records() {
        for bad in [
            "",
            "epoch=1",
            "epoch=x train_loss=1 train_top1=1 test_top1=1",
            "train_loss=1 epoch=1 train_top1=1 test_top1=1",
        ] {
            assert!(parse_record(bad).is_err(), "{bad:?}");
        }
    }
}
