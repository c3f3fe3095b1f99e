// SPDX-License-Identifier: MIT OR Apache-2.0

//! Simulation-study harness: repeated trials on synthetic signals,
//! summarized as rejection rates and location statistics per grid cell.

use std::fs::File;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{KernelConfig, DEFAULT_KERNEL_CAP};
use crate::error::{Error, Result};
use crate::limit::{
    asymptotic_test, millis, SimConfig, DEFAULT_ALPHA, DEFAULT_EIGEN_COUNT, DEFAULT_GRID_POINTS,
    DEFAULT_REPLICATES,
};
use crate::long_signal::{detect_long, DEFAULT_TARGET_LENGTH};
use crate::permutation::permutation_test;
use crate::report::{Method, TestReport};
use crate::rng::derive_seed;
use crate::signal::{generate, GeneratorKind, GeneratorSpec, Signal};

/// Test parameters shared by every trial of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TestSettings {
    pub beta: f64,
    pub alpha: f64,
    pub eigen: usize,
    pub replicates: usize,
    pub grid_points: usize,
    pub target_length: usize,
    pub max_n: usize,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self {
            beta: 1.0,
            alpha: DEFAULT_ALPHA,
            eigen: DEFAULT_EIGEN_COUNT,
            replicates: DEFAULT_REPLICATES,
            grid_points: DEFAULT_GRID_POINTS,
            target_length: DEFAULT_TARGET_LENGTH,
            max_n: DEFAULT_KERNEL_CAP,
        }
    }
}

impl TestSettings {
    pub fn kernel_config(&self) -> Result<KernelConfig> {
        Ok(KernelConfig::new(self.beta)?.with_max_n(self.max_n))
    }
}

/// Runs one test of `method` on `signal`; `seed` drives its randomness.
pub fn run_method(signal: &Signal, method: Method, settings: &TestSettings, seed: u64) -> Result<TestReport> {
    let kernel = settings.kernel_config()?;
    match method {
        Method::Asymptotic => {
            let sim = SimConfig::new(settings.grid_points, settings.replicates, seed)?;
            asymptotic_test(signal, &kernel, settings.eigen, &sim, settings.alpha)
        }
        Method::Permutation => permutation_test(signal, &kernel, settings.replicates, settings.alpha, seed),
        Method::Long => {
            let sim = SimConfig::new(settings.grid_points, settings.replicates, seed)?;
            detect_long(signal, &kernel, settings.eigen, &sim, settings.alpha, settings.target_length)
                .map(|r| r.report)
        }
    }
}

/// Summary of repeated trials in one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub trials: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// Mean and sample variance of the estimated location `k_star`.
    pub mean_location: f64,
    pub var_location: f64,
    /// Mean `|k_star - true k|`; `None` under the null.
    pub mean_abs_error: Option<f64>,
    /// Per-trial reports in trial order.
    pub reports: Vec<TestReport>,
    pub elapsed_millis: f64,
}

/// Seeds for trial `t` of a cell: (signal generation, test).
pub fn trial_seeds(cell_seed: u64, trial: usize) -> (u64, u64) {
    let base = derive_seed(cell_seed, trial as u64);
    (derive_seed(base, 1), derive_seed(base, 2))
}

/// Repeats `trials` independent draws of `spec` (whose `seed` acts as the
/// cell's master seed) and tests each with `method`.
pub fn run_cell(spec: &GeneratorSpec, method: Method, settings: &TestSettings, trials: usize) -> Result<CellResult> {
    if trials == 0 {
        return Err(Error::InvalidConfig("a cell needs at least one trial".into()));
    }
    spec.validate()?;
    let start = Instant::now();
    let reports: Vec<TestReport> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (gen_seed, test_seed) = trial_seeds(spec.seed, t);
            let signal = generate(&GeneratorSpec { seed: gen_seed, ..*spec })?;
            run_method(&signal, method, settings, test_seed)
        })
        .collect::<Result<_>>()?;
    let elapsed = millis(start);

    let rejections = reports.iter().filter(|r| r.reject).count();
    let locations: Vec<f64> = reports.iter().map(|r| r.k_star as f64).collect();
    let (mean, var) = mean_var(&locations);
    let mean_abs_error = spec.change_point().map(|k| {
        locations.iter().map(|l| (l - k as f64).abs()).sum::<f64>() / trials as f64
    });
    Ok(CellResult {
        trials,
        rejections,
        rejection_rate: rejections as f64 / trials as f64,
        mean_location: mean,
        var_location: var,
        mean_abs_error,
        reports,
        elapsed_millis: elapsed,
    })
}

pub(crate) fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// A grid of simulation cells, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentGrid {
    pub kind: GeneratorKind,
    pub n: Vec<usize>,
    /// Mean jumps, variances or degrees of freedom; ignored for the null.
    #[serde(default = "default_parameters")]
    pub parameters: Vec<f64>,
    #[serde(default = "default_fractions")]
    pub change_fractions: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, flatten)]
    pub settings: TestSettings,
    /// Adds a wall-clock column; reruns then differ in that column only.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_parameters() -> Vec<f64> {
    vec![0.0]
}

fn default_fractions() -> Vec<f64> {
    vec![0.5]
}

fn default_methods() -> Vec<Method> {
    vec![Method::Asymptotic]
}

impl ExperimentGrid {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let grid: ExperimentGrid = serde_json::from_reader(std::io::BufReader::new(file))?;
        Ok(grid)
    }

    /// Cells in output order: n, then parameter, then change fraction, then method.
    pub fn cells(&self) -> Result<Vec<(GeneratorSpec, Method)>> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("grid trials must be at least 1".into()));
        }
        if self.n.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidConfig("grid needs at least one length and one method".into()));
        }
        let params: &[f64] = if self.kind == GeneratorKind::IidNull { &[0.0] } else { &self.parameters };
        let fractions: &[f64] = if self.kind == GeneratorKind::IidNull { &[0.5] } else { &self.change_fractions };
        let mut cells = Vec::new();
        for &n in &self.n {
            for &p in params {
                for &f in fractions {
                    for &method in &self.methods {
                        let index = cells.len() as u64;
                        let spec = GeneratorSpec::new(self.kind, n, f, p, derive_seed(self.seed, index));
                        spec.validate()?;
                        cells.push((spec, method));
                    }
                }
            }
        }
        self.settings.kernel_config()?;
        Ok(cells)
    }
}

/// One output line of [`run_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridRow {
    pub kind: GeneratorKind,
    pub n: usize,
    pub parameter: f64,
    pub change_point: Option<usize>,
    pub method: Method,
    pub trials: usize,
    pub rejection_rate: f64,
    pub mean_location: f64,
    pub var_location: f64,
    /// Variance of `k_star / n`.
    pub var_relative_location: f64,
    pub mean_abs_error: Option<f64>,
    pub elapsed_millis: Option<f64>,
}

/// Runs every cell of `grid` and writes one CSV row per cell to `out`.
pub fn run_grid(grid: &ExperimentGrid, out: impl AsRef<Path>) -> Result<Vec<GridRow>> {
    let cells = grid.cells()?;
    let out = out.as_ref();
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let mut rows = Vec::with_capacity(cells.len());
    for (spec, method) in cells {
        let cell = run_cell(&spec, method, &grid.settings, grid.trials)?;
        let n = spec.n as f64;
        let row = GridRow {
            kind: spec.kind,
            n: spec.n,
            parameter: spec.parameter,
            change_point: spec.change_point(),
            method,
            trials: cell.trials,
            rejection_rate: cell.rejection_rate,
            mean_location: cell.mean_location,
            var_location: cell.var_location,
            var_relative_location: cell.var_location / (n * n),
            mean_abs_error: cell.mean_abs_error,
            elapsed_millis: grid.record_timing.then_some(cell.elapsed_millis),
        };
        writer
            .serialize(&row)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        rows.push(row);
    }
    writer.flush().map_err(|e| Error::io(out, e))?;
    Ok(rows)
}
