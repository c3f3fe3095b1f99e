// SPDX-License-Identifier: MIT OR Apache-2.0

//! Centered empirical kernel matrix and its leading eigenvalues, which stand
//! in for the weights of the limit process.

use rayon::prelude::*;

use crate::eigen::{magnitude_order, EigenSolver};
use crate::energy::KernelMatrix;
use crate::error::{Error, Result};

/// `(phi_ij - mu_i - mu_j + eta) / n`, where `mu_i` is the mean of row `i`
/// without its diagonal entry and `eta` the mean of the strict upper
/// triangle. The diagonal is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredGram {
    values: Vec<f64>,
    n: usize,
}

impl CenteredGram {
    /// Centers `kernel` in place, reusing its allocation.
    pub fn from_kernel(kernel: KernelMatrix) -> Result<Self> {
        let n = kernel.n();
        if n < 2 {
            return Err(Error::InvalidInput(format!("centering needs at least 2 observations, got {n}")));
        }
        let mut values = kernel.into_values();
        let row_sums: Vec<f64> = values.par_chunks(n).map(|row| row.iter().sum()).collect();
        let mu: Vec<f64> = row_sums.iter().map(|s| s / (n - 1) as f64).collect();
        let eta = row_sums.iter().sum::<f64>() / (n * (n - 1)) as f64;
        let inv_n = 1.0 / n as f64;
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((*v - (mu[i] + mu[j])) + eta) * inv_n;
            }
        });
        Ok(Self { values, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

pub fn center_gram(kernel: &KernelMatrix) -> Result<CenteredGram> {
    CenteredGram::from_kernel(kernel.clone())
}

/// Leading eigenvalues, ordered by descending magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    residuals: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum from known eigenvalues (residuals zero), reordering
    /// them by magnitude.
    pub fn from_values(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("spectrum needs at least one finite eigenvalue".into()));
        }
        eigenvalues.sort_by(|a, b| magnitude_order(*a, *b));
        let residuals = vec![0.0; eigenvalues.len()];
        Ok(Self {
            eigenvalues,
            residuals,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Convergence residual bound per eigenvalue (zero for dense solves).
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn top_eigenvalues(gram: &CenteredGram, m: usize) -> Result<Spectrum> {
    top_eigenvalues_with(gram, m, &EigenSolver::default())
}

pub fn top_eigenvalues_with(gram: &CenteredGram, m: usize, solver: &EigenSolver) -> Result<Spectrum> {
    let result = solver.largest_magnitude(&gram.values, gram.n, m)?;
    let mut pairs: Vec<(f64, f64)> = result.values.into_iter().zip(result.residuals).collect();
    pairs.sort_by(|a, b| magnitude_order(a.0, b.0));
    let (eigenvalues, residuals) = pairs.into_iter().unzip();
    Ok(Spectrum {
        eigenvalues,
        residuals,
    })
}
