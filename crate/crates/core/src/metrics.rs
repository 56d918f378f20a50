//! Per-evaluation run records and their CSV form.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 8] =
    ["epoch", "iter", "train_acc", "val_acc", "test_acc", "loss", "grad_sq_norm", "wall_s"];

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub iter: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    /// Mean minibatch loss since the previous record; the initial record
    /// holds the exact full-batch training loss.
    pub loss: f64,
    /// Mean `‖G_t‖²` since the previous record; the initial record holds the
    /// exact `‖∇F(W₁)‖²`.
    pub grad_sq_norm: f64,
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<EpochRecord>,
}

impl RunMetrics {
    pub fn max_test_acc(&self) -> f64 {
        self.records.iter().map(|r| r.test_acc).fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Config(format!("writing metrics: {e}"));
        w.write_record(METRICS_HEADER).map_err(to_err)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.iter.to_string(),
                format_sig9(r.train_acc),
                format_sig9(r.val_acc),
                format_sig9(r.test_acc),
                format_sig9(r.loss),
                format_sig9(r.grad_sq_norm),
                format_sig9(r.wall_s),
            ])
            .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Config(format!("writing metrics: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros
/// trimmed, scientific notation outside `[1e-4, 1e9)`.
pub fn format_sig9(v: f64) -> String {
    const SIG: i32 = 9;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= SIG {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_matches_printf_g() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.8110), "0.811");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.0 / 3.0), "0.666666667");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1234567890.0), "1.23456789e+09");
        assert_eq!(format_sig9(0.00001234), "1.234e-05");
        assert_eq!(format_sig9(0.0001234), "0.0001234");
        assert_eq!(format_sig9(9.9999999996), "10");
        assert_eq!(format_sig9(-2.5), "-2.5");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = RunMetrics {
            records: vec![EpochRecord {
                epoch: 0,
                iter: 0,
                train_acc: 0.5,
                val_acc: 0.25,
                test_acc: 1.0,
                loss: std::f64::consts::LN_2,
                grad_sq_norm: 1e-7,
                wall_s: 0.0,
            }],
        };
        let s = m.to_csv_string();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "epoch,iter,train_acc,val_acc,test_acc,loss,grad_sq_norm,wall_s");
        assert_eq!(lines.next().unwrap(), "0,0,0.5,0.25,1,0.693147181,1e-07,0");
        assert_eq!(m.max_test_acc(), 1.0);
    }
}
