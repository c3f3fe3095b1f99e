// SPDX-License-Identifier: MIT OR Apache-2.0

//! Subsample-and-refine detection for signals too long to hold a full
//! kernel matrix: test on an equidistant sub-signal, then rescan a short
//! contiguous window of the original signal around the coarse estimate.

use std::time::Instant;

use crate::energy::{pairwise_kernel, scan, KernelConfig};
use crate::error::{Error, Result};
use crate::limit::{asymptotic_test, millis, SimConfig};
use crate::report::{Method, TestReport};
use crate::signal::Signal;

pub const DEFAULT_TARGET_LENGTH: usize = 2000;
/// Upper bound on the refinement half-width.
pub const MAX_HALF_WIDTH: usize = 1000;

/// Equidistant sub-signal positions (1-based) and their spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsamplePlan {
    pub indices: Vec<usize>,
    pub stride: f64,
    pub target_length: usize,
}

impl SubsamplePlan {
    pub fn is_identity(&self) -> bool {
        self.stride == 1.0
    }

    /// Refinement half-width `ceil(min(2 * stride, 1000))`.
    pub fn half_width(&self) -> usize {
        (2.0 * self.stride).min(MAX_HALF_WIDTH as f64).ceil() as usize
    }
}

pub fn subsample(n: usize, target_length: usize) -> Result<SubsamplePlan> {
    if n < 4 || target_length < 4 {
        return Err(Error::InvalidConfig(format!(
            "subsampling needs n >= 4 and target >= 4, got n = {n}, target = {target_length}"
        )));
    }
    if n <= target_length {
        return Ok(SubsamplePlan {
            indices: (1..=n).collect(),
            stride: 1.0,
            target_length,
        });
    }
    // floor(j * n / target) in integer arithmetic, for j = 0..target.
    let indices = (0..target_length)
        .map(|j| (j as u128 * n as u128 / target_length as u128) as usize + 1)
        .collect();
    Ok(SubsamplePlan {
        indices,
        stride: n as f64 / target_length as f64,
        target_length,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongSignalResult {
    /// Test on the sub-signal; its p-value is the reported one.
    pub coarse: TestReport,
    /// Refined change location in the original signal (observations before
    /// the change); `None` when the coarse test does not reject.
    pub refined_k: Option<usize>,
    /// 1-based inclusive window rescanned around the coarse estimate.
    pub window: Option<[usize; 2]>,
    pub half_width: usize,
    pub stride: f64,
    /// Report in original-signal coordinates: `k_star` is the refined
    /// location when refinement ran, otherwise the coarse argmax mapped back.
    pub report: TestReport,
}

pub fn detect_long(
    signal: &Signal,
    kernel_cfg: &KernelConfig,
    m: usize,
    sim_cfg: &SimConfig,
    alpha: f64,
    target_length: usize,
) -> Result<LongSignalResult> {
    let start = Instant::now();
    let n = signal.n();
    let plan = subsample(n, target_length)?;
    let positions: Vec<usize> = plan.indices.iter().map(|i| i - 1).collect();
    let sub = if plan.is_identity() {
        signal.clone()
    } else {
        signal.select(&positions)
    };
    let coarse = asymptotic_test(&sub, kernel_cfg, m, sim_cfg, alpha)?;
    let z = plan.half_width();
    let coarse_k = plan.indices[coarse.k_star - 1];

    let (refined_k, window, refine_ms) = if !coarse.reject {
        (None, None, 0.0)
    } else {
        let t0 = Instant::now();
        let (lo, hi) = refinement_window(n, coarse_k, z);
        let refined = if plan.is_identity() {
            // The coarse scan already covered every split of the signal.
            coarse_k
        } else {
            let local = signal.slice(lo - 1, hi);
            let kernel = pairwise_kernel(&local, kernel_cfg)?;
            lo - 1 + scan(&kernel)?.k_star()
        };
        (Some(refined), Some([lo, hi]), millis(t0))
    };

    let mut report = coarse.clone();
    report.method = Method::Long;
    report.n = n;
    report.k_star = refined_k.unwrap_or(coarse_k);
    report.refined_window = window;
    report.elapsed_millis.refine = refine_ms;
    report.elapsed_millis.total = millis(start);
    Ok(LongSignalResult {
        coarse,
        refined_k,
        window,
        half_width: z,
        stride: plan.stride,
        report,
    })
}

/// `[max(1, k - z), min(n, k + z)]`, widened symmetrically to at least
/// four points.
fn refinement_window(n: usize, k: usize, z: usize) -> (usize, usize) {
    let mut lo = k.saturating_sub(z).max(1);
    let mut hi = (k + z).min(n);
    while hi - lo + 1 < 4 {
        if lo > 1 {
            lo -= 1;
        }
        if hi - lo + 1 < 4 && hi < n {
            hi += 1;
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate, GeneratorKind, GeneratorSpec};

    #[test]
    fn short_signal_plan_is_identity() {
        let p = subsample(1500, 2000).unwrap();
        assert!(p.is_identity());
        assert_eq!(p.indices, (1..=1500).collect::<Vec<_>>());
        assert_eq!(p.half_width(), 2);
    }

    #[test]
    fn strided_plan() {
        let p = subsample(10_000, 2000).unwrap();
        assert_eq!(p.stride, 5.0);
        assert_eq!(p.indices.len(), 2000);
        assert_eq!(&p.indices[..3], &[1, 6, 11]);
        assert_eq!(*p.indices.last().unwrap(), 9996);
        assert_eq!(p.half_width(), 10);
    }

    #[test]
    fn huge_plan_clamps_half_width() {
        let p = subsample(10_000_000, 2000).unwrap();
        assert_eq!(p.stride, 5000.0);
        assert_eq!(p.indices.len(), 2000);
        assert!(p.indices.windows(2).all(|w| w[1] - w[0] == 5000));
        assert_eq!(p.half_width(), 1000);
    }

    #[test]
    fn fractional_stride_rounds_up() {
        let p = subsample(3001, 2000).unwrap();
        assert_eq!(p.half_width(), 4);
        assert!(p.indices.windows(2).all(|w| w[1] > w[0]));
        assert!(*p.indices.last().unwrap() <= 3001);
    }

    #[test]
    fn plan_rejects_tiny_inputs() {
        assert!(subsample(3, 2000).is_err());
        assert!(subsample(100, 3).is_err());
    }

    #[test]
    fn windows_are_clipped_and_widened() {
        assert_eq!(refinement_window(100, 50, 10), (40, 60));
        assert_eq!(refinement_window(100, 3, 10), (1, 13));
        assert_eq!(refinement_window(100, 98, 10), (88, 100));
        assert_eq!(refinement_window(100, 50, 1), (48, 51));
        assert_eq!(refinement_window(4, 1, 1), (1, 4));
    }

    #[test]
    fn short_signal_matches_full_test() {
        let spec = GeneratorSpec::new(GeneratorKind::MeanShift, 1500, 0.5, 2.0, 21);
        let s = generate(&spec).unwrap();
        let cfg = KernelConfig::default();
        let sim = SimConfig::with_seed(4);
        let full = asymptotic_test(&s, &cfg, 50, &sim, 0.05).unwrap();
        let res = detect_long(&s, &cfg, 50, &sim, 0.05, 2000).unwrap();
        let report = &res.report;
        assert!(full.reject);
        assert_eq!(res.refined_k, Some(full.k_star));
        assert_eq!(report.k_star, full.k_star);
        assert_eq!(report.method, Method::Long);
        let [lo, hi] = res.window.unwrap();
        assert_eq!((lo, hi), (full.k_star - 2, full.k_star + 2));
    }

    #[test]
    fn strided_refinement_stays_in_window() {
        let spec = GeneratorSpec::new(GeneratorKind::MeanShift, 20_000, 0.5, 1.0, 8);
        let s = generate(&spec).unwrap();
        let res =
            detect_long(&s, &KernelConfig::default(), 50, &SimConfig::with_seed(9), 0.05, 2000).unwrap();
        let report = &res.report;
        let k = res.refined_k.expect("change should be found");
        let [lo, hi] = res.window.unwrap();
        assert!(lo <= k && k <= hi);
        assert_eq!(hi - lo, 2 * res.half_width);
        assert_eq!(report.refined_window, Some([lo, hi]));
        assert!((k as i64 - 10_000).abs() < 400, "refined {k}");
    }

    #[test]
    fn null_signal_skips_refinement() {
        let s = generate(&GeneratorSpec::null(5000, 3)).unwrap();
        let res =
            detect_long(&s, &KernelConfig::default(), 20, &SimConfig::with_seed(5), 0.01, 2000).unwrap();
        if !res.coarse.reject {
            assert_eq!(res.refined_k, None);
            assert_eq!(res.report.refined_window, None);
        }
    }
}
