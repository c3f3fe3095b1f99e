// SPDX-License-Identifier: MIT OR Apache-2.0

//! Nonparametric single change-point detection with the energy divergence.
//!
//! A signal is scanned with the normalized `|x - y|^beta` energy divergence
//! between the observations before and after each candidate split. The
//! maximum is compared with simulated suprema of the limiting process under
//! the null, whose weights are the leading eigenvalues of the centered
//! kernel matrix. A permutation baseline and a subsample-and-refine mode for
//! very long signals are included, together with the simulation harness.

pub mod eigen;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod limit;
pub mod long_signal;
pub mod permutation;
pub mod report;
pub mod rng;
pub mod signal;
pub mod spectrum;

pub use energy::{
    divergence_at, divergence_at_split, normalization, pairwise_kernel, scan, scan_permuted, scan_permuted_batch,
    DivergenceScan, KernelConfig, KernelMatrix, DEFAULT_KERNEL_CAP,
};
pub use error::{Error, Result};
pub use experiment::{run_cell, run_grid, run_method, CellResult, ExperimentGrid, GridRow, TestSettings};
pub use limit::{
    asymptotic_test, brownian_bridge, p_value, run_asymptotic, sample_path, simulate_sup,
    AsymptoticOutcome, LimitSample, SimConfig,
};
pub use long_signal::{detect_long, subsample, LongSignalResult, SubsamplePlan};
pub use permutation::{permutation_maxima, permutation_test};
pub use report::{read_report, write_report, Method, PhaseTimings, TestReport};
pub use signal::{generate, load_signal, write_signal, GeneratorKind, GeneratorSpec, Signal};
pub use spectrum::{center_gram, top_eigenvalues, top_eigenvalues_with, CenteredGram, Spectrum};
