// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte Carlo reference distribution for the supremum of the limit process
//!
//! ```text
//! Y(t) = sum_i lambda_i (t (1 - t) - B_i(t)^2)
//! ```
//!
//! with independent Brownian bridges `B_i`, truncated to the estimated
//! leading eigenvalues, and the one-change-point test built on it.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::eigen::EigenSolver;
use crate::energy::{pairwise_kernel, scan, DivergenceScan, KernelConfig};
use crate::error::{Error, Result};
use crate::report::{Method, PhaseTimings, TestReport};
use crate::rng::stream_rng;
use crate::signal::Signal;
use crate::spectrum::{top_eigenvalues_with, CenteredGram, Spectrum};

pub const DEFAULT_GRID_POINTS: usize = 1000;
pub const DEFAULT_REPLICATES: usize = 499;
pub const DEFAULT_EIGEN_COUNT: usize = 50;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// `T`: the bridges are evaluated at `j / T`.
    pub grid_points: usize,
    /// `R`: number of simulated suprema.
    pub replicates: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(grid_points: usize, replicates: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            grid_points,
            replicates,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            replicates: DEFAULT_REPLICATES,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 points, got {}",
                self.grid_points
            )));
        }
        if self.replicates < 1 {
            return Err(Error::InvalidConfig("at least one replicate is required".into()));
        }
        Ok(())
    }
}

/// Simulated suprema `s_1, ..., s_R` of `|Y|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSample {
    sup_values: Vec<f64>,
    config: SimConfig,
    spectrum: Spectrum,
}

impl LimitSample {
    pub fn sup_values(&self) -> &[f64] {
        &self.sup_values
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }
}

/// Brownian bridge on `j / T`, `j = 0..=T`, from `T` independent `N(0, 1/T)`
/// increments tied down at `t = 1`. Both endpoints are exactly zero.
pub fn brownian_bridge<R: Rng + ?Sized>(grid_points: usize, rng: &mut R) -> Vec<f64> {
    let mut path = vec![0.0; grid_points + 1];
    fill_bridge(&mut path, rng);
    path
}

fn fill_bridge<R: Rng + ?Sized>(path: &mut [f64], rng: &mut R) {
    let t = path.len() - 1;
    let sd = (1.0 / t as f64).sqrt();
    let mut w = 0.0;
    path[0] = 0.0;
    for p in path[1..].iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        w += sd * z;
        *p = w;
    }
    let end = path[t];
    let step = 1.0 / t as f64;
    for (j, p) in path.iter_mut().enumerate() {
        *p -= (j as f64 * step) * end;
    }
    path[t] = 0.0;
}

/// Precomputed grid quantities shared by all replicates.
struct Grid {
    /// `t_j = j / T` for the interior points.
    times: Vec<f64>,
    /// `t_j (1 - t_j)`.
    drift: Vec<f64>,
    /// Variance of one increment, `1 / T`.
    step_var: f64,
}

impl Grid {
    fn new(grid_points: usize) -> Self {
        let times: Vec<f64> = (1..grid_points).map(|j| j as f64 / grid_points as f64).collect();
        let drift = times.iter().map(|t| t * (1.0 - t)).collect();
        Self {
            times,
            drift,
            step_var: 1.0 / grid_points as f64,
        }
    }
}

/// Writes one replicate of `Y` at the interior grid points into `y`.
///
/// With `c_j` the running sum of standard normals, each bridge is
/// `B(t_j) = sqrt(1/T) (c_j - t_j c_T)`. The deterministic part
/// `sum_i lambda_i t_j (1 - t_j)` is added once at the end.
fn replicate_path<R: Rng + ?Sized>(
    eigenvalues: &[f64],
    grid: &Grid,
    walk: &mut [f64],
    y: &mut [f64],
    rng: &mut R,
) {
    y.iter_mut().for_each(|v| *v = 0.0);
    let mut lambda_sum = 0.0;
    for &lambda in eigenvalues {
        lambda_sum += lambda;
        let mut c = 0.0;
        for w in walk.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            c += z;
            *w = c;
        }
        for ((yj, &cj), &tj) in y.iter_mut().zip(walk.iter()).zip(&grid.times) {
            let b = cj - tj * c;
            *yj += lambda * (b * b);
        }
    }
    for (yj, &dj) in y.iter_mut().zip(&grid.drift) {
        *yj = lambda_sum * dj - grid.step_var * *yj;
    }
}

fn supremum(y: &[f64]) -> f64 {
    y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Values of replicate `replicate` of the truncated process at the interior
/// grid points `j / T`, `j = 1..T`. Uses the same random stream as
/// [`simulate_sup`], so its largest absolute value is that replicate's
/// supremum.
pub fn sample_path(spectrum: &Spectrum, config: &SimConfig, replicate: usize) -> Result<Vec<f64>> {
    config.validate()?;
    let t = config.grid_points;
    let grid = Grid::new(t);
    let mut walk = vec![0.0; t];
    let mut y = vec![0.0; t - 1];
    let mut rng = stream_rng(config.seed, replicate as u64);
    replicate_path(spectrum.eigenvalues(), &grid, &mut walk, &mut y, &mut rng);
    Ok(y)
}

/// Draws `R` suprema of `|Y|`. Replicate `r` uses stream `r` of the seed, so
/// the output does not depend on how replicates are scheduled.
pub fn simulate_sup(spectrum: &Spectrum, config: &SimConfig) -> Result<LimitSample> {
    config.validate()?;
    let t = config.grid_points;
    let grid = Grid::new(t);
    let eigenvalues = spectrum.eigenvalues();
    let sup_values: Vec<f64> = (0..config.replicates)
        .into_par_iter()
        .map_init(
            || (vec![0.0; t], vec![0.0; t - 1]),
            |(walk, y), r| {
                let mut rng = stream_rng(config.seed, r as u64);
                replicate_path(eigenvalues, &grid, walk, y, &mut rng);
                supremum(y)
            },
        )
        .collect();
    Ok(LimitSample {
        sup_values,
        config: *config,
        spectrum: spectrum.clone(),
    })
}

/// Fraction of reference draws at least as large as `t_star`, with a zero
/// statistic mapped to 1.
pub(crate) fn exceedance_fraction(reference: &[f64], t_star: f64) -> f64 {
    if t_star == 0.0 {
        return 1.0;
    }
    let count = reference.iter().filter(|&&s| s >= t_star).count();
    count as f64 / reference.len() as f64
}

/// Monte Carlo p-value of an observed scan maximum.
pub fn p_value(sample: &LimitSample, t_star: f64) -> Result<f64> {
    if !t_star.is_finite() || t_star < 0.0 {
        return Err(Error::InvalidInput(format!(
            "statistic must be finite and nonnegative, got {t_star}"
        )));
    }
    if sample.sup_values.is_empty() {
        return Err(Error::InvalidInput("empty reference sample".into()));
    }
    Ok(exceedance_fraction(&sample.sup_values, t_star))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

pub(crate) fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Everything the asymptotic test computes along the way.
#[derive(Debug, Clone)]
pub struct AsymptoticOutcome {
    pub report: TestReport,
    pub scan: DivergenceScan,
    pub spectrum: Spectrum,
    pub sample: LimitSample,
}

/// One-change-point test: scan for the best split, estimate the limit
/// weights from the centered kernel, simulate the supremum of the limit
/// process and compare.
pub fn asymptotic_test(
    signal: &Signal,
    kernel_cfg: &KernelConfig,
    m: usize,
    sim_cfg: &SimConfig,
    alpha: f64,
) -> Result<TestReport> {
    run_asymptotic(signal, kernel_cfg, m, sim_cfg, alpha, &EigenSolver::default()).map(|o| o.report)
}

/// [`asymptotic_test`] with an explicit eigensolver, returning the
/// intermediate scan, spectrum and reference sample.
///
/// `m` is capped at `n`.
pub fn run_asymptotic(
    signal: &Signal,
    kernel_cfg: &KernelConfig,
    m: usize,
    sim_cfg: &SimConfig,
    alpha: f64,
    solver: &EigenSolver,
) -> Result<AsymptoticOutcome> {
    check_alpha(alpha)?;
    sim_cfg.validate()?;
    let n = signal.n();
    if n < 4 {
        return Err(Error::InvalidInput(format!("the test needs at least 4 observations, got {n}")));
    }
    if m == 0 {
        return Err(Error::InvalidConfig("at least one eigenvalue is required".into()));
    }
    let m = m.min(n);
    let mut timings = PhaseTimings::default();
    let start = Instant::now();

    let t0 = Instant::now();
    let kernel = pairwise_kernel(signal, kernel_cfg)?;
    timings.kernel = millis(t0);

    let t0 = Instant::now();
    let scanned = scan(&kernel)?;
    timings.scan = millis(t0);

    let t0 = Instant::now();
    let gram = CenteredGram::from_kernel(kernel)?;
    let spectrum = top_eigenvalues_with(&gram, m, solver)?;
    drop(gram);
    timings.spectrum = millis(t0);

    let t0 = Instant::now();
    let sample = simulate_sup(&spectrum, sim_cfg)?;
    // A negative maximum lies below every (nonnegative) simulated supremum.
    let p = p_value(&sample, scanned.t_star().max(0.0))?;
    timings.simulation = millis(t0);
    timings.total = millis(start);

    let report = TestReport {
        method: Method::Asymptotic,
        n,
        d: signal.d(),
        beta: kernel_cfg.beta(),
        alpha,
        k_star: scanned.k_star(),
        t_star: scanned.t_star(),
        p_value: p,
        reject: p <= alpha,
        eigenvalues_used: Some(m),
        replicates: sim_cfg.replicates,
        grid_points: Some(sim_cfg.grid_points),
        seed: sim_cfg.seed,
        elapsed_millis: timings,
        refined_window: None,
    };
    Ok(AsymptoticOutcome {
        report,
        scan: scanned,
        spectrum,
        sample,
    })
}
