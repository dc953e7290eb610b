//! Time series of complex functionals and their CSV forms.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::Operator;

/// A named system observable.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub label: String,
    pub op: Operator,
}

impl Observable {
    pub fn new(label: impl Into<String>, op: Operator) -> Self {
        Observable { label: label.into(), op }
    }
}

/// Fixed-step time discretization of [0, t_end]; every `record_every`-th
/// state (and always t = 0) is emitted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stepping {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl Stepping {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Stepping {
            dt,
            t_end,
            record_every: 1,
        }
    }

    /// Emit `outputs + 1` rows (t = 0 included) instead of every step.
    pub fn with_outputs(mut self, outputs: usize) -> Result<Self> {
        let n = self.steps()?;
        if outputs == 0 || n % outputs != 0 {
            return Err(Error::Grid(format!(
                "{n} steps cannot be split into {outputs} equal output intervals"
            )));
        }
        self.record_every = n / outputs;
        Ok(self)
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Grid(format!("horizon {} must be positive", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::Grid("record_every must be at least 1".into()));
        }
        crate::model::steps_for(self.t_end, self.dt)
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn records(&self, step: usize) -> bool {
        step.is_multiple_of(self.record_every)
    }
}

/// Complex-valued columns sampled at common times. Health metrics gathered
/// during propagation travel alongside in `diagnostics`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Complex64>>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Series {
    pub fn new(columns: Vec<String>) -> Self {
        Series {
            columns,
            ..Default::default()
        }
    }

    pub fn push(&mut self, t: f64, row: Vec<Complex64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.times.push(t);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty() || self.columns.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<Complex64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Keeps the largest value seen under `key`.
    pub fn note_max(&mut self, key: &str, value: f64) {
        let e = self.diagnostics.entry(key.to_string()).or_insert(0.0);
        if value > *e || value.is_nan() {
            *e = value;
        }
    }

    /// Wide CSV: `time`, then `<column>_re`, `<column>_im` pairs.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        for c in &self.columns {
            header.push(format!("{c}_re"));
            header.push(format!("{c}_im"));
        }
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for (t, row) in self.times.iter().zip(&self.rows) {
            rec.clear();
            rec.push(t.to_string());
            for z in row {
                rec.push(z.re.to_string());
                rec.push(z.im.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    /// Reads back what [`Series::write_csv`] produced.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("time") || header.len() % 2 != 1 {
            return Err(Error::Record(format!(
                "{}: expected `time` followed by _re/_im column pairs",
                path.display()
            )));
        }
        let mut columns = Vec::new();
        for pair in header[1..].chunks(2) {
            let name = pair[0].strip_suffix("_re").filter(|n| pair[1].strip_suffix("_im") == Some(n));
            match name {
                Some(n) => columns.push(n.to_string()),
                None => {
                    return Err(Error::Record(format!(
                        "{}: unpaired columns {} / {}",
                        path.display(),
                        pair[0],
                        pair[1]
                    )))
                }
            }
        }
        let mut series = Series::new(columns);
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Record(format!("{}: bad number in row {}", path.display(), line + 2)))
            };
            let t = num(0)?;
            let row = (0..series.columns.len())
                .map(|c| Ok(Complex64::new(num(1 + 2 * c)?, num(2 + 2 * c)?)))
                .collect::<Result<Vec<_>>>()?;
            series.push(t, row);
        }
        Ok(series)
    }

    /// Long-format export: one `(time, series_name, value)` row per real
    /// number. Nothing is written for an empty series.
    pub fn export_long(&self, path: &Path) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Record("cannot export an empty series".into()));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "series_name", "value"])?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            let ts = t.to_string();
            for (name, z) in self.columns.iter().zip(row) {
                w.write_record([ts.as_str(), &format!("{name}_re"), &z.re.to_string()])?;
                w.write_record([ts.as_str(), &format!("{name}_im"), &z.im.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Column name `<prefix>_<jk>_<label>`.
pub fn component_column(prefix: &str, j: impl std::fmt::Display, k: impl std::fmt::Display, label: &str) -> String {
    format!("{prefix}_{j}{k}_{label}")
}
