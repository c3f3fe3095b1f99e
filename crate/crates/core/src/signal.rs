// SPDX-License-Identifier: MIT OR Apache-2.0

//! Signals, CSV ingestion, and the synthetic generators used by the
//! experiment harness.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// An ordered sequence of `n` observations in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Signal {
    pub fn new(data: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if data.is_empty() {
            return Err(Error::Empty);
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::InvalidInput(format!(
                "{} values cannot be arranged into rows of dimension {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        let n = data.len() / d;
        Ok(Self { data, n, d })
    }

    /// One-dimensional signal.
    pub fn from_column(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Observation `i` (0-based).
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Rows at the given 0-based positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> Signal {
        let mut data = Vec::with_capacity(positions.len() * self.d);
        for &p in positions {
            data.extend_from_slice(self.row(p));
        }
        Signal {
            data,
            n: positions.len(),
            d: self.d,
        }
    }

    /// Contiguous block of rows `start..end` (0-based, end exclusive).
    pub fn slice(&self, start: usize, end: usize) -> Signal {
        assert!(start < end && end <= self.n, "slice {start}..{end} out of range");
        Signal {
            data: self.data[start * self.d..end * self.d].to_vec(),
            n: end - start,
            d: self.d,
        }
    }

    /// Applies `f` to every observation, producing a signal of dimension `d_out`.
    pub fn map_rows(&self, d_out: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Signal> {
        let mut data = vec![0.0; self.n * d_out];
        for (i, out) in data.chunks_mut(d_out).enumerate() {
            f(self.row(i), out);
        }
        Signal::new(data, d_out)
    }
}

/// Reads a comma-separated file with one observation per row.
pub fn load_signal(path: impl AsRef<Path>, has_header: bool) -> Result<Signal> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut data = Vec::new();
    let mut d = None;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Parse {
                row,
                column: 0,
                message: e.to_string(),
            },
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match d {
            None => d = Some(record.len()),
            Some(width) if width != record.len() => {
                return Err(Error::Parse {
                    row,
                    column: record.len().min(width) + 1,
                    message: format!("expected {width} columns, found {}", record.len()),
                });
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: col + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: col + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            data.push(value);
        }
    }
    match d {
        None => Err(Error::Empty),
        Some(d) => Signal::new(data, d),
    }
}

/// Writes a signal as headerless CSV using shortest round-trip formatting.
pub fn write_signal(signal: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for i in 0..signal.n() {
        let row = signal.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.write_all(b",").map_err(|e| Error::io(path, e))?;
            }
            write!(out, "{v:?}").map_err(|e| Error::io(path, e))?;
        }
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Post-change law `N(c, 1)`.
    MeanShift,
    /// Post-change law `N(0, sigma^2)`.
    VarianceShift,
    /// Post-change law Student `t_v`.
    TailShift,
    /// Whole signal i.i.d. `N(0, 1)`.
    IidNull,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::MeanShift => "mean-shift",
            GeneratorKind::VarianceShift => "variance-shift",
            GeneratorKind::TailShift => "tail-shift",
            GeneratorKind::IidNull => "iid-null",
        }
    }
}

/// A one-dimensional synthetic signal with at most one change.
///
/// The first `floor(n * change_fraction)` points are standard normal; the
/// remainder follow the post-change law selected by `kind`, with `parameter`
/// holding the mean jump, the variance, or the degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub change_fraction: f64,
    pub parameter: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, change_fraction: f64, parameter: f64, seed: u64) -> Self {
        Self {
            kind,
            n,
            change_fraction,
            parameter,
            seed,
        }
    }

    pub fn null(n: usize, seed: u64) -> Self {
        Self::new(GeneratorKind::IidNull, n, 0.5, 0.0, seed)
    }

    /// Number of pre-change observations, `floor(n * gamma)`; `None` for the null.
    pub fn change_point(&self) -> Option<usize> {
        match self.kind {
            GeneratorKind::IidNull => None,
            _ => Some((self.n as f64 * self.change_fraction).floor() as usize),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("generator length must be at least 2, got {}", self.n)));
        }
        if self.kind == GeneratorKind::IidNull {
            return Ok(());
        }
        if !(self.change_fraction > 0.0 && self.change_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "change fraction must lie in (0, 1), got {}",
                self.change_fraction
            )));
        }
        let k = self.change_point().unwrap_or(0);
        if k < 1 || self.n - k < 1 {
            return Err(Error::InvalidConfig(format!(
                "change point {k} leaves an empty segment for n = {}",
                self.n
            )));
        }
        if !self.parameter.is_finite() {
            return Err(Error::InvalidConfig("generator parameter must be finite".into()));
        }
        match self.kind {
            GeneratorKind::VarianceShift if self.parameter <= 0.0 => Err(Error::InvalidConfig(format!(
                "variance must be positive, got {}",
                self.parameter
            ))),
            GeneratorKind::TailShift if self.parameter < 1.0 || self.parameter.fract() != 0.0 => {
                Err(Error::InvalidConfig(format!(
                    "degrees of freedom must be a positive integer, got {}",
                    self.parameter
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Draws the signal described by `spec`. Pure in `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<Signal> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let cp = spec.change_point().unwrap_or(spec.n);
    let mut data = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let z: f64 = rng.sample(StandardNormal);
        let x = if i < cp {
            z
        } else {
            match spec.kind {
                GeneratorKind::MeanShift => z + spec.parameter,
                GeneratorKind::VarianceShift => spec.parameter.sqrt() * z,
                GeneratorKind::TailShift => {
                    let dof = spec.parameter as usize;
                    let chi2: f64 = (0..dof)
                        .map(|_| {
                            let g: f64 = rng.sample(StandardNormal);
                            g * g
                        })
                        .sum();
                    z / (chi2 / spec.parameter).sqrt()
                }
                GeneratorKind::IidNull => z,
            }
        };
        data.push(x);
    }
    Signal::from_column(data)
}
