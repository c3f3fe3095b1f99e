// SPDX-License-Identifier: MIT OR Apache-2.0

//! Permutation baseline: the null distribution of the scan maximum is
//! approximated by rescanning randomly reordered data. Reordering is done
//! through index mapping into the one kernel matrix.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::energy::{pairwise_kernel, scan, scan_permuted_batch, KernelConfig, KernelMatrix};
use crate::error::{Error, Result};
use crate::limit::{check_alpha, exceedance_fraction, millis};
use crate::report::{Method, PhaseTimings, TestReport};
use crate::rng::stream_rng;
use crate::signal::Signal;

/// Orders scanned together per pass over the kernel.
const BATCH: usize = 16;

/// Scan maxima of `replicates` uniformly random reorderings; replicate `r`
/// shuffles with stream `r` of `seed`.
pub fn permutation_maxima(kernel: &KernelMatrix, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    let n = kernel.n();
    let starts: Vec<usize> = (0..replicates).step_by(BATCH).collect();
    let batches = starts
        .into_par_iter()
        .map(|start| {
            let orders: Vec<Vec<usize>> = (start..(start + BATCH).min(replicates))
                .map(|r| {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(&mut stream_rng(seed, r as u64));
                    order
                })
                .collect();
            scan_permuted_batch(kernel, &orders).map(|scans| scans.iter().map(|s| s.t_star()).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(batches.concat())
}

pub fn permutation_test(
    signal: &Signal,
    kernel_cfg: &KernelConfig,
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if replicates == 0 {
        return Err(Error::InvalidConfig("at least one permutation is required".into()));
    }
    let n = signal.n();
    if n < 4 {
        return Err(Error::InvalidInput(format!("the test needs at least 4 observations, got {n}")));
    }
    let mut timings = PhaseTimings::default();
    let start = Instant::now();

    let t0 = Instant::now();
    let kernel = pairwise_kernel(signal, kernel_cfg)?;
    timings.kernel = millis(t0);

    let t0 = Instant::now();
    let observed = scan(&kernel)?;
    timings.scan = millis(t0);

    let t0 = Instant::now();
    let maxima = permutation_maxima(&kernel, replicates, seed)?;
    let p = exceedance_fraction(&maxima, observed.t_star());
    timings.simulation = millis(t0);
    timings.total = millis(start);

    Ok(TestReport {
        method: Method::Permutation,
        n,
        d: signal.d(),
        beta: kernel_cfg.beta(),
        alpha,
        k_star: observed.k_star(),
        t_star: observed.t_star(),
        p_value: p,
        reject: p <= alpha,
        eigenvalues_used: None,
        replicates,
        grid_points: None,
        seed,
        elapsed_millis: timings,
        refined_window: None,
    })
}
