// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Asymptotic,
    Permutation,
    Long,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Asymptotic => "asymptotic",
            Method::Permutation => "permutation",
            Method::Long => "long",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymptotic" => Ok(Method::Asymptotic),
            "permutation" => Ok(Method::Permutation),
            "long" => Ok(Method::Long),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// Wall-clock milliseconds per pipeline phase. `simulation` covers whichever
/// null-distribution step the method uses (limit-process draws or
/// permutations); `refine` is only nonzero in long-signal mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseTimings {
    pub kernel: f64,
    pub scan: f64,
    pub spectrum: f64,
    pub simulation: f64,
    pub refine: f64,
    pub total: f64,
}

/// Outcome of one change-point test.
///
/// `k_star` counts the observations before the detected change, so the
/// change sits between positions `k_star` and `k_star + 1` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestReport {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    pub alpha: f64,
    pub k_star: usize,
    pub t_star: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Limit-process eigenvalues used; absent for the permutation test.
    pub eigenvalues_used: Option<usize>,
    pub replicates: usize,
    /// Brownian-bridge grid size; absent for the permutation test.
    pub grid_points: Option<usize>,
    pub seed: u64,
    pub elapsed_millis: PhaseTimings,
    /// Original-signal range rescanned in long-signal mode, 1-based inclusive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined_window: Option<[usize; 2]>,
}

impl TestReport {
    /// Copy with timings zeroed, for comparing reruns.
    pub fn without_timings(&self) -> TestReport {
        TestReport {
            elapsed_millis: PhaseTimings::default(),
            ..self.clone()
        }
    }
}

pub fn write_report(report: &TestReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<TestReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TestReport {
        TestReport {
            method: Method::Long,
            n: 10_000_000,
            d: 1,
            beta: 1.0,
            alpha: 0.05,
            k_star: 5_000_123,
            t_star: 123.456_789_012_345_67,
            p_value: 0.0,
            reject: true,
            eigenvalues_used: Some(50),
            replicates: 499,
            grid_points: Some(1000),
            seed: u64::MAX,
            elapsed_millis: PhaseTimings {
                total: 1.5,
                ..Default::default()
            },
            refined_window: Some([4_999_000, 5_001_000]),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let report = sample();
        write_report(&report, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
    }

    #[test]
    fn schema_fields() {
        let json: serde_json::Value = serde_json::to_value(sample()).unwrap();
        assert!(json["pValue"].is_number());
        assert_eq!(json["pValue"].as_f64(), Some(0.0));
        assert_eq!(json["method"], "long");
        assert_eq!(json["refinedWindow"], serde_json::json!([4_999_000, 5_001_000]));
        for key in [
            "n", "d", "beta", "alpha", "kStar", "tStar", "reject", "eigenvaluesUsed",
            "replicates", "gridPoints", "seed", "elapsedMillis",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }

        let mut plain = sample();
        plain.refined_window = None;
        let json = serde_json::to_value(plain).unwrap();
        assert!(json.get("refinedWindow").is_none());
    }

    #[test]
    fn write_into_missing_directory_fails() {
        let err = write_report(&sample(), "/nonexistent/dir/report.json").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
