// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `|x - y|^beta` kernel, the empirical energy divergence between the
//! two sides of a split, and the normalized scan over all admissible splits.
//!
//! Split `k` always means "the first `k` observations versus the remaining
//! `n - k`", with `2 <= k <= n - 2`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Largest `n` for which the full `n x n` kernel is materialized by default.
pub const DEFAULT_KERNEL_CAP: usize = 15_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    beta: f64,
    max_n: usize,
}

impl KernelConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) {
            return Err(Error::InvalidConfig(format!("beta must lie in (0, 2), got {beta}")));
        }
        Ok(Self {
            beta,
            max_n: DEFAULT_KERNEL_CAP,
        })
    }

    /// Overrides the full-kernel size cap.
    pub fn with_max_n(mut self, max_n: usize) -> Self {
        self.max_n = max_n;
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    #[inline]
    pub fn phi(&self, a: &[f64], b: &[f64]) -> f64 {
        let dist = if a.len() == 1 {
            (a[0] - b[0]).abs()
        } else {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        if self.beta == 1.0 {
            dist
        } else {
            dist.powf(self.beta)
        }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            max_n: DEFAULT_KERNEL_CAP,
        }
    }
}

/// Dense symmetric matrix of `|X_i - X_j|^beta`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Vec<f64>,
    n: usize,
}

impl KernelMatrix {
    /// Wraps a precomputed matrix, checking the kernel invariants.
    pub fn from_values(values: Vec<f64>, n: usize) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for an {n}x{n} matrix, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = values[i * n + j];
                if !(v.is_finite() && v >= 0.0) || v != values[j * n + i] {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { values, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Materializes the kernel matrix of `signal`. Rows are filled in parallel;
/// each entry is computed independently so the result does not depend on
/// the thread count.
pub fn pairwise_kernel(signal: &Signal, config: &KernelConfig) -> Result<KernelMatrix> {
    let n = signal.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!("kernel needs at least 2 observations, got {n}")));
    }
    if n > config.max_n {
        return Err(Error::KernelCap { n, cap: config.max_n });
    }
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = signal.row(i);
        for (j, v) in row.iter_mut().enumerate() {
            if j != i {
                *v = config.phi(xi, signal.row(j));
            }
        }
    });
    Ok(KernelMatrix { values, n })
}

fn check_split(n: usize, k: usize) -> Result<()> {
    if n < 4 || k < 2 || k > n - 2 {
        return Err(Error::InvalidInput(format!(
            "split {k} outside the admissible range [2, n - 2] for n = {n}"
        )));
    }
    Ok(())
}

fn binom2(m: usize) -> f64 {
    (m * (m - 1)) as f64 / 2.0
}

fn combine(n: usize, k: usize, between: f64, left: f64, right: f64) -> f64 {
    2.0 * between / (k * (n - k)) as f64 - left / binom2(k) - right / binom2(n - k)
}

/// `k^2 (n-k)^2 / (n^2 (n-1))`, the factor turning a divergence into the
/// scan statistic.
pub fn normalization(n: usize, k: usize) -> f64 {
    let kk = (k * (n - k)) as f64;
    kk * kk / ((n * n) as f64 * (n - 1) as f64)
}

/// Empirical divergence at split `k` by direct summation over the three
/// blocks of the kernel. O(n^2) per call.
pub fn divergence_at(kernel: &KernelMatrix, k: usize) -> Result<f64> {
    let n = kernel.n();
    check_split(n, k)?;
    let mut between = 0.0;
    let mut left = 0.0;
    let mut right = 0.0;
    for i in 0..n {
        let row = kernel.row(i);
        for (j, &v) in row.iter().enumerate().skip(i + 1) {
            if j < k {
                left += v;
            } else if i >= k {
                right += v;
            } else {
                between += v;
            }
        }
    }
    Ok(combine(n, k, between, left, right))
}

/// Same quantity as [`divergence_at`], evaluated straight from the signal
/// without materializing the kernel. Useful beyond the kernel cap.
pub fn divergence_at_split(signal: &Signal, config: &KernelConfig, k: usize) -> Result<f64> {
    let n = signal.n();
    check_split(n, k)?;
    let (between, left, right) = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = signal.row(i);
            let mut acc = (0.0, 0.0, 0.0);
            for j in i + 1..n {
                let v = config.phi(xi, signal.row(j));
                if j < k {
                    acc.1 += v;
                } else if i >= k {
                    acc.2 += v;
                } else {
                    acc.0 += v;
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    Ok(combine(n, k, between, left, right))
}

/// Raw and normalized statistics for every split `k` in `[2, n - 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceScan {
    n: usize,
    raw: Vec<f64>,
    normalized: Vec<f64>,
    k_star: usize,
    t_star: f64,
}

impl DivergenceScan {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Admissible splits, in increasing order.
    pub fn splits(&self) -> std::ops::RangeInclusive<usize> {
        2..=self.n - 2
    }

    pub fn raw_at(&self, k: usize) -> f64 {
        self.raw[k - 2]
    }

    pub fn normalized_at(&self, k: usize) -> f64 {
        self.normalized[k - 2]
    }

    /// Raw divergences indexed from split 2.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// Normalized statistics indexed from split 2.
    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    /// Smallest maximizing split.
    pub fn k_star(&self) -> usize {
        self.k_star
    }

    pub fn t_star(&self) -> f64 {
        self.t_star
    }
}

/// Scans every split in O(n^2) total.
///
/// One pass over the kernel collects, for each observation, the sum of its
/// entries towards earlier and towards later observations. Prefix and suffix
/// sums of those give the within-left, within-right and between block sums
/// for every split.
pub fn scan(kernel: &KernelMatrix) -> Result<DivergenceScan> {
    let n = kernel.n();
    if n < 4 {
        return Err(Error::InvalidInput(format!("scan needs at least 4 observations, got {n}")));
    }
    let partials: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|p| {
            let row = kernel.row(p);
            (lane_sum(&row[..p]), lane_sum(&row[p + 1..]))
        })
        .collect();
    Ok(scan_from_partials(&partials))
}

/// Scan of the signal reordered by `order` (a permutation of `0..n`), read
/// through index mapping without copying the kernel.
pub fn scan_permuted(kernel: &KernelMatrix, order: &[usize]) -> Result<DivergenceScan> {
    Ok(scan_permuted_batch(kernel, std::slice::from_ref(&order.to_vec()))?.remove(0))
}

/// [`scan_permuted`] for several orders at once. Each kernel row is read
/// once per batch rather than once per order; results are bit-identical to
/// scanning each order separately.
pub fn scan_permuted_batch(kernel: &KernelMatrix, orders: &[Vec<usize>]) -> Result<Vec<DivergenceScan>> {
    let n = kernel.n();
    if n < 4 {
        return Err(Error::InvalidInput(format!("scan needs at least 4 observations, got {n}")));
    }
    let mut narrow = Vec::with_capacity(orders.len());
    let mut positions = Vec::with_capacity(orders.len());
    for order in orders {
        let mut pos = vec![usize::MAX; n];
        for (p, &i) in order.iter().enumerate() {
            if i < n && pos[i] == usize::MAX {
                pos[i] = p;
            }
        }
        if order.len() != n || pos.contains(&usize::MAX) {
            return Err(Error::InvalidInput(format!("order is not a permutation of 0..{n}")));
        }
        narrow.push(order.iter().map(|&q| q as u32).collect::<Vec<u32>>());
        positions.push(pos);
    }

    let mut partials = vec![vec![(0.0, 0.0); n]; orders.len()];
    for i in 0..n {
        let row = kernel.row(i);
        for ((idx, pos), out) in narrow.iter().zip(&positions).zip(partials.iter_mut()) {
            let p = pos[i];
            out[p] = (gather_sum(row, &idx[..p]), gather_sum(row, &idx[p + 1..]));
        }
    }
    Ok(partials.iter().map(|p| scan_from_partials(p)).collect())
}

/// Sum with four interleaved accumulators, which breaks the add latency
/// chain. [`gather_sum`] groups terms identically, so a permuted scan is
/// bit-identical to scanning a rebuilt kernel.
fn lane_sum(xs: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut chunks = xs.chunks_exact(4);
    for c in &mut chunks {
        for t in 0..4 {
            acc[t] += c[t];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for x in chunks.remainder() {
        s += x;
    }
    s
}

/// `lane_sum` of `row[idx[0]], row[idx[1]], ...`.
fn gather_sum(row: &[f64], idx: &[u32]) -> f64 {
    let mut acc = [0.0; 4];
    let mut chunks = idx.chunks_exact(4);
    for c in &mut chunks {
        for t in 0..4 {
            acc[t] += row[c[t] as usize];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for &q in chunks.remainder() {
        s += row[q as usize];
    }
    s
}

fn scan_from_partials(partials: &[(f64, f64)]) -> DivergenceScan {
    let n = partials.len();
    // right_within[k]: pairs entirely inside positions k..n.
    let mut right_within = vec![0.0; n + 1];
    for p in (0..n).rev() {
        right_within[p] = right_within[p + 1] + partials[p].1;
    }

    let mut raw = Vec::with_capacity(n - 3);
    let mut normalized = Vec::with_capacity(n - 3);
    let mut left_within = 0.0;
    let mut forward = 0.0;
    for k in 1..=n - 2 {
        left_within += partials[k - 1].0;
        forward += partials[k - 1].1;
        if k < 2 {
            continue;
        }
        // forward holds every pair p < q with p left of the split; dropping the
        // pairs with q also on the left leaves the between block.
        let between = forward - left_within;
        let value = combine(n, k, between, left_within, right_within[k]);
        raw.push(value);
        normalized.push(normalization(n, k) * value);
    }

    let mut best = 0;
    for (i, &v) in normalized.iter().enumerate() {
        if v > normalized[best] {
            best = i;
        }
    }
    DivergenceScan {
        n,
        t_star: normalized[best],
        k_star: best + 2,
        raw,
        normalized,
    }
}
