//! Per-epoch metrics and CSV output.
//!
//! All CSV files use a header row, a fixed column order, `.` as decimal
//! separator and fixed precision, so identical runs give identical bytes.
//! Wall-clock times go to a separate `timing.csv`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Running error of the train-phase forward passes during the epoch, in percent.
    pub train_error: f64,
    /// Error on the test split at the end of the epoch, in percent.
    pub test_error: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub lr_conv: f64,
    pub lr_softmax: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_error_pct,test_error_pct,train_loss,test_loss,lr_conv,lr_softmax";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.4},{:.4},{:.6},{:.6},{:.6e},{:.6e}",
            self.epoch, self.train_error, self.test_error, self.train_loss, self.test_loss, self.lr_conv, self.lr_softmax
        )
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn write_timing_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("epoch,seconds\n");
    for r in rows {
        out.push_str(&format!("{},{:.3}\n", r.epoch, r.seconds));
    }
    out
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::format("metrics CSV", "unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::format("metrics CSV", format!("bad row {line:?}"));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(MetricsRow {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_error: num(1)?,
                test_error: num(2)?,
                train_loss: num(3)?,
                test_loss: num(4)?,
                lr_conv: num(5)?,
                lr_softmax: num(6)?,
                seconds: 0.0,
            })
        })
        .collect()
}

/// Small CSV builder for result tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Percentage with the fixed precision used in every table.
pub fn pct(v: f64) -> String {
    format!("{v:.4}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize) -> MetricsRow {
        MetricsRow {
            epoch,
            train_error: 12.5,
            test_error: 100.0 / 3.0,
            train_loss: 0.693147,
            test_loss: 1.0 / 7.0,
            lr_conv: 0.01,
            lr_softmax: 0.505,
            seconds: 1.25,
        }
    }

    #[test]
    fn fixed_formatting() {
        assert_eq!(
            row(3).csv_line(),
            "3,12.5000,33.3333,0.693147,0.142857,1.000000e-2,5.050000e-1"
        );
        assert_eq!(write_timing_csv(&[row(1)]), "epoch,seconds\n1,1.250\n");
    }

    #[test]
    fn csv_round_trip_is_byte_stable() {
        let text = write_metrics_csv(&[row(1), row(2)]);
        let back = read_metrics_csv(&text).unwrap();
        assert_eq!(write_metrics_csv(&back), text);
        assert!(read_metrics_csv("epoch\n1\n").is_err());
    }

    #[test]
    fn table_output() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), pct(2.0)]);
        assert_eq!(t.to_csv(), "a,b\n1,2.0000\n");
    }
}
