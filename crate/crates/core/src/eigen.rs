// SPDX-License-Identifier: MIT OR Apache-2.0

//! Extremal eigenvalues of dense symmetric matrices.
//!
//! Lanczos with full reorthogonalization builds a tridiagonal projection
//! whose Ritz values converge to both ends of the spectrum at once, so the
//! largest-magnitude eigenvalues are read off after merging by `|.|`.
//! Invariant subspaces (breakdowns) restart the recurrence from a fresh
//! vector orthogonal to the basis, which lets repeated eigenvalues appear
//! with their multiplicity.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

const START_SEED: u64 = 0x1a9c_205e_ed00_0001;
const MAX_QL_SWEEPS: usize = 60;

/// Eigenvalues of a symmetric tridiagonal matrix together with the last
/// component of each normalized eigenvector (implicit QL with Wilkinson
/// shifts). `diag` has length `k`, `off[i]` couples `i` and `i + 1`.
pub(crate) fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    // Only the last row of the accumulated rotation matrix is tracked.
    let mut z = vec![0.0; n];
    if n > 0 {
        z[n - 1] = 1.0;
    }

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Some((d, z))
}

/// Sorts by descending magnitude, ties by descending signed value.
pub(crate) fn magnitude_order(a: f64, b: f64) -> std::cmp::Ordering {
    b.abs().total_cmp(&a.abs()).then(b.total_cmp(&a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSolver {
    /// Ritz residual bound, relative to the largest Ritz magnitude.
    pub tolerance: f64,
    /// Iteration budget is `iteration_factor * m`.
    pub iteration_factor: usize,
    /// Matrices up to this size are handed to a dense symmetric solver.
    pub dense_threshold: usize,
}

impl Default for EigenSolver {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            iteration_factor: 30,
            dense_threshold: 200,
        }
    }
}

/// Eigenvalues in `|.|`-descending order and their residual bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl EigenSolver {
    /// Always use Lanczos, regardless of size.
    pub fn lanczos_only() -> Self {
        Self {
            dense_threshold: 0,
            ..Self::default()
        }
    }

    /// The `m` largest-magnitude eigenvalues of the symmetric row-major
    /// `n x n` matrix `a`.
    pub fn largest_magnitude(&self, a: &[f64], n: usize, m: usize) -> Result<EigenResult> {
        assert_eq!(a.len(), n * n);
        if m == 0 || m > n {
            return Err(Error::InvalidConfig(format!(
                "requested {m} eigenvalues of a {n}x{n} matrix"
            )));
        }
        if n <= self.dense_threshold {
            Ok(dense(a, n, m))
        } else {
            self.lanczos(a, n, m)
        }
    }

    fn lanczos(&self, a: &[f64], n: usize, m: usize) -> Result<EigenResult> {
        let budget = (self.iteration_factor * m).max(m).min(n);
        let mut rng = stream_rng(START_SEED, n as u64);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(budget);
        let mut alpha: Vec<f64> = Vec::with_capacity(budget);
        let mut beta: Vec<f64> = Vec::with_capacity(budget);

        let mut q = random_unit(n, &mut rng);
        let mut w = vec![0.0; n];
        let check_every = (m / 5).max(4);
        let mut worst = f64::INFINITY;

        for j in 0..budget {
            matvec(a, n, &q, &mut w);
            let a_j = dot(&q, &w);
            alpha.push(a_j);
            axpy(-a_j, &q, &mut w);
            if j > 0 && beta[j - 1] != 0.0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            basis.push(std::mem::take(&mut q));
            // Two Gram-Schmidt passes keep the basis orthogonal to rounding.
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    axpy(-c, v, &mut w);
                }
            }
            let b = norm(&w);

            let steps = j + 1;
            let last = steps == budget;
            if steps >= m && (last || steps % check_every == 0) {
                let (theta, z) = tridiagonal_eigen(&alpha, &beta)
                    .ok_or(Error::NoConvergence { iterations: steps, residual: f64::NAN })?;
                let scale = theta.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));
                let mut order: Vec<usize> = (0..steps).collect();
                order.sort_by(|&x, &y| magnitude_order(theta[x], theta[y]));
                let top = &order[..m];
                let residuals: Vec<f64> = top.iter().map(|&i| (b * z[i]).abs()).collect();
                worst = residuals.iter().fold(0.0f64, |acc, r| acc.max(*r));
                let threshold = self.tolerance * scale;
                if worst <= threshold || steps == n {
                    return Ok(EigenResult {
                        values: top.iter().map(|&i| theta[i]).collect(),
                        residuals,
                        iterations: steps,
                    });
                }
                if last {
                    break;
                }
            }

            let scale = alpha.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));
            if b <= 1e-12 * scale.max(f64::MIN_POSITIVE) || b == 0.0 {
                // Invariant subspace found: continue from a fresh direction.
                let mut fresh = random_unit(n, &mut rng);
                for _ in 0..2 {
                    for v in &basis {
                        let c = dot(v, &fresh);
                        axpy(-c, v, &mut fresh);
                    }
                }
                let fresh_norm = norm(&fresh);
                if fresh_norm < 1e-8 {
                    // The basis spans everything reachable; only happens near j = n.
                    fresh = vec![0.0; n];
                } else {
                    fresh.iter_mut().for_each(|x| *x /= fresh_norm);
                }
                beta.push(0.0);
                q = fresh;
            } else {
                beta.push(b);
                q = w.iter().map(|x| x / b).collect();
            }
        }
        Err(Error::NoConvergence {
            iterations: budget,
            residual: worst,
        })
    }
}

fn dense(a: &[f64], n: usize, m: usize) -> EigenResult {
    let matrix = nalgebra::DMatrix::from_row_slice(n, n, a);
    let mut values: Vec<f64> = matrix.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|x, y| magnitude_order(*x, *y));
    values.truncate(m);
    EigenResult {
        residuals: vec![0.0; values.len()],
        values,
        iterations: 0,
    }
}

fn random_unit(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the loop vectorize.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4 * 4;
    for (x, y) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for t in 0..4 {
            acc[t] += x[t] * y[t];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn matvec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    use rayon::prelude::*;
    out.par_iter_mut()
        .enumerate()
        .with_min_len(64)
        .for_each(|(i, o)| *o = dot(&a[i * n..(i + 1) * n], x));
}
