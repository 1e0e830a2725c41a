use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,mean_reward,accuracy,mean_response_len,mean_entropy,lambda,objective";

/// One optimization step's diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub mean_reward: f64,
    /// Fraction of responses scoring +1.
    pub accuracy: f64,
    pub mean_response_len: f64,
    /// Mean next-token entropy (nats) over every generated token.
    pub mean_entropy: f64,
    /// λ after the step's update.
    pub lambda: f64,
    pub objective: f64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            self.mean_reward,
            self.accuracy,
            self.mean_response_len,
            self.mean_entropy,
            self.lambda,
            self.objective
        )
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Shape(format!("metrics row has {} fields: {line:?}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| Error::Shape(format!("bad metrics field {:?}", fields[i])))
        };
        Ok(Self {
            step: fields[0].parse().map_err(|_| Error::Shape(format!("bad step {:?}", fields[0])))?,
            mean_reward: num(1)?,
            accuracy: num(2)?,
            mean_response_len: num(3)?,
            mean_entropy: num(4)?,
            lambda: num(5)?,
            objective: num(6)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        [self.mean_reward, self.accuracy, self.mean_response_len, self.mean_entropy, self.lambda, self.objective]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Appends one CSV row per step, flushing after each.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    /// Creates (or truncates) `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path)?;
        writeln!(file, "{METRICS_HEADER}")?;
        file.flush()?;
        Ok(Self { file })
    }

    /// Keeps the header and every row with `step < keep_before`, then appends.
    /// A missing file starts fresh.
    pub fn resume(path: &Path, keep_before: u64) -> Result<Self> {
        if !path.exists() {
            return Self::create(path);
        }
        let mut kept = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line != METRICS_HEADER {
                    return Err(Error::Shape(format!("{} is not a metrics file", path.display())));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let row = StepMetrics::parse_row(&line)?;
            if row.step < keep_before {
                kept.push(line);
            }
        }
        let mut w = Self::create(path)?;
        for line in kept {
            writeln!(w.file, "{line}")?;
        }
        w.file.flush()?;
        Ok(w)
    }

    pub fn append(&mut self, m: &StepMetrics) -> Result<()> {
        writeln!(self.file, "{}", m.csv_row())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Reads every row of a metrics file.
pub fn read_metrics(path: &Path) -> Result<Vec<StepMetrics>> {
    let f = OpenOptions::new().read(true).open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if i == 0 || line.is_empty() {
            continue;
        }
        out.push(StepMetrics::parse_row(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> StepMetrics {
        StepMetrics {
            step,
            mean_reward: -0.25,
            accuracy: 0.125,
            mean_response_len: 3.5,
            mean_entropy: 1.0 / 3.0,
            lambda: -1e-7,
            objective: 0.1,
        }
    }

    #[test]
    fn row_is_decimal_and_parses_back() {
        let r = row(3);
        let line = r.csv_row();
        assert!(!line.contains('e'), "{line}");
        assert_eq!(StepMetrics::parse_row(&line).unwrap(), r);
    }

    #[test]
    fn resume_truncates_later_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&p).unwrap();
        for s in 0..5 {
            w.append(&row(s)).unwrap();
        }
        drop(w);
        let mut w = MetricsWriter::resume(&p, 3).unwrap();
        w.append(&row(3)).unwrap();
        let rows = read_metrics(&p).unwrap();
        assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(METRICS_HEADER));
        assert!(text.ends_with('\n'));
    }
}
