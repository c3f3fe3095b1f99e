// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then
//! asserts on the same condition. Run with `--nocapture` to see the lines.

use std::time::{Duration, Instant};

use energy_cpd::eigen::EigenSolver;
use energy_cpd::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id:>2} {name}: {detail}");
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Signal {
    let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5).collect();
    Signal::new(data, d).unwrap()
}

/// Energy divergence at split `k` from the definition, one term at a time,
/// with the summed magnitude of its three terms.
fn direct_divergence(signal: &Signal, beta: f64, k: usize) -> (f64, f64) {
    let n = signal.n();
    let dist = |i: usize, j: usize| -> f64 {
        let s: f64 = signal.row(i).iter().zip(signal.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        s.sqrt().powf(beta)
    };
    let mut between = 0.0;
    for i in 0..k {
        for j in k..n {
            between += dist(i, j);
        }
    }
    let mut left = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            left += dist(i, j);
        }
    }
    let mut right = 0.0;
    for i in k..n {
        for j in i + 1..n {
            right += dist(i, j);
        }
    }
    let (kf, mf) = (k as f64, (n - k) as f64);
    let terms = [
        2.0 * between / (kf * mf),
        left / (kf * (kf - 1.0) / 2.0),
        right / (mf * (mf - 1.0) / 2.0),
    ];
    (terms[0] - terms[1] - terms[2], terms.iter().sum())
}

#[test]
fn c01_scan_matches_direct_evaluation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1);
    let betas = [0.5, 1.0, 1.5];
    let mut worst = 0.0f64;
    for case in 0..50 {
        let n = rng.random_range(4..=100);
        let d = if case % 2 == 0 { 1 } else { 3 };
        let beta = betas[case % 3];
        let signal = random_signal(&mut rng, n, d);
        let cfg = KernelConfig::new(beta).unwrap();
        let result = scan(&pairwise_kernel(&signal, &cfg).unwrap()).unwrap();
        for k in 2..=n - 2 {
            let nf = n as f64;
            let (kf, mf) = (k as f64, (n - k) as f64);
            let norm = kf * kf * mf * mf / (nf * nf * (nf - 1.0));
            let (value, magnitude) = direct_divergence(&signal, beta, k);
            let want = value * norm;
            let got = result.normalized_at(k);
            // Relative to the terms that cancel, so splits where the
            // divergence is near zero are still measured meaningfully.
            let scale = want.abs().max(magnitude * norm);
            worst = worst.max((got - want).abs() / scale);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "scan oracle",
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        &format!("max rel err {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    );
}

/// `E|N(mu, sigma^2)|` from the folded-normal law.
fn folded_normal_mean(mu: f64, sigma: f64) -> f64 {
    let phi = Normal::new(0.0, 1.0).unwrap();
    sigma * (2.0 / std::f64::consts::PI).sqrt() * (-mu * mu / (2.0 * sigma * sigma)).exp()
        + mu * (2.0 * phi.cdf(mu / sigma) - 1.0)
}

#[test]
fn c02_divergence_is_consistent() {
    let sqrt2 = 2f64.sqrt();
    // Y ~ N(0,1), Z ~ N(1,1): Y - Z ~ N(-1, 2), Y - Y' ~ N(0, 2).
    let population = 2.0 * folded_normal_mean(-1.0, sqrt2) - 2.0 * folded_normal_mean(0.0, sqrt2);
    assert!((population - 0.5418).abs() < 1e-4, "population value {population}");

    let n = 20_000;
    let cfg = KernelConfig::default();
    let mut estimates = Vec::new();
    for seed in 0..5 {
        let spec = GeneratorSpec::new(GeneratorKind::MeanShift, n, 0.5, 1.0, 1000 + seed);
        let signal = generate(&spec).unwrap();
        let k = spec.change_point().unwrap();
        estimates.push(divergence_at_split(&signal, &cfg, k).unwrap());
    }
    let worst = estimates.iter().map(|e| (e - population).abs()).fold(0.0, f64::max);
    verdict(
        2,
        "consistency",
        worst <= 0.02,
        &format!("population {population:.4}, estimates {estimates:.4?}, max dev {worst:.4}"),
    );
}

#[test]
fn c03_type_one_error_is_calibrated() {
    let settings = TestSettings::default();
    let asym = run_cell(&GeneratorSpec::null(500, 31), Method::Asymptotic, &settings, 500).unwrap();
    let perm = run_cell(&GeneratorSpec::null(200, 32), Method::Permutation, &settings, 500).unwrap();
    let band = |r: f64| (0.03..=0.08).contains(&r);
    verdict(
        3,
        "type I calibration",
        band(asym.rejection_rate) && band(perm.rejection_rate),
        &format!(
            "asymptotic n=500 rate {:.3}, permutation n=200 rate {:.3}",
            asym.rejection_rate, perm.rejection_rate
        ),
    );
}

#[test]
fn c04_power() {
    let settings = TestSettings::default();
    let rate = |kind, parameter, seed| {
        let spec = GeneratorSpec::new(kind, 1000, 0.5, parameter, seed);
        run_cell(&spec, Method::Asymptotic, &settings, 200).unwrap().rejection_rate
    };
    let mean1 = rate(GeneratorKind::MeanShift, 1.0, 41);
    let mean2 = rate(GeneratorKind::MeanShift, 2.0, 42);
    let var5 = rate(GeneratorKind::VarianceShift, 5.0, 43);
    verdict(
        4,
        "power",
        mean1 >= 0.95 && mean2 >= 0.99 && var5 >= 0.9,
        &format!("c=1 {mean1:.3}, c=2 {mean2:.3}, sigma^2=5 {var5:.3}"),
    );
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut a = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let total: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

fn top_by_magnitude(mut values: Vec<f64>, m: usize) -> Vec<f64> {
    values.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    values.truncate(m);
    values.sort_by(f64::total_cmp);
    values
}

fn gram_of(x: &[f64]) -> CenteredGram {
    let s = Signal::from_column(x.to_vec()).unwrap();
    center_gram(&pairwise_kernel(&s, &KernelConfig::default()).unwrap()).unwrap()
}

#[test]
fn c05_spectrum_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe16e);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (idx, &n) in [40usize, 120, 250, 500].iter().enumerate() {
        let beta = [0.5, 1.0, 1.5, 1.0][idx];
        let d = 1 + idx % 2;
        let signal = random_signal(&mut rng, n, d);
        let kernel = pairwise_kernel(&signal, &KernelConfig::new(beta).unwrap()).unwrap();
        let gram = CenteredGram::from_kernel(kernel).unwrap();

        // A generic symmetric matrix with eigenvalues of both signs.
        let mut sym = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.sample(StandardNormal);
                sym[i * n + j] = v;
                sym[j * n + i] = v;
            }
        }

        let m = 50.min(n);
        for (matrix, label) in [(gram.values().to_vec(), "gram"), (sym, "random")] {
            let want = top_by_magnitude(jacobi_eigenvalues(&matrix, n), m);
            for solver in [EigenSolver::default(), EigenSolver::lanczos_only()] {
                let got = solver.largest_magnitude(&matrix, n, m).unwrap().values;
                let got = top_by_magnitude(got, m);
                for (g, w) in got.iter().zip(&want) {
                    let err = (g - w).abs() / w.abs().max(f64::MIN_POSITIVE);
                    assert!(err.is_finite(), "{label} n={n}");
                    worst = worst.max(err);
                }
                cases += 1;
            }
        }
    }

    let mut hand_err = 0.0f64;
    let two = gram_of(&[0.0, 1.0]);
    for (g, w) in two.values().iter().zip([-0.5, 0.0, 0.0, -0.5]) {
        hand_err = hand_err.max((g - w).abs());
    }
    let three = gram_of(&[0.0, 1.0, 2.0]);
    let want3 = [
        -5.0 / 9.0, -1.0 / 18.0, 1.0 / 9.0,
        -1.0 / 18.0, -2.0 / 9.0, -1.0 / 18.0,
        1.0 / 9.0, -1.0 / 18.0, -5.0 / 9.0,
    ];
    for (g, w) in three.values().iter().zip(want3) {
        hand_err = hand_err.max((g - w).abs());
    }

    verdict(
        5,
        "spectrum correctness",
        worst <= 1e-8 && hand_err <= 1e-12,
        &format!("{cases} solver runs, max rel err {worst:.2e}; hand examples max err {hand_err:.1e}"),
    );
}

#[test]
fn c06_spectrum_sign_and_decay() {
    let signal = generate(&GeneratorSpec::null(500, 61)).unwrap();
    let gram = CenteredGram::from_kernel(pairwise_kernel(&signal, &KernelConfig::default()).unwrap()).unwrap();
    let all = top_eigenvalues(&gram, 500).unwrap();
    let lambda = all.eigenvalues();
    let positive: f64 = lambda.iter().map(|v| v.max(0.0)).sum();
    let total: f64 = lambda.iter().map(|v| v.abs()).sum();
    let ratio = lambda[19].abs() / lambda[0].abs();
    verdict(
        6,
        "spectrum sign/decay",
        positive <= 0.02 * total && ratio <= 0.05,
        &format!(
            "positive mass {:.2e} of {:.3} ({:.2}%), |l20|/|l1| = {ratio:.4}",
            positive,
            total,
            100.0 * positive / total
        ),
    );
}

fn spectrum_for(n: usize, seed: u64) -> Spectrum {
    let signal = generate(&GeneratorSpec::null(n, seed)).unwrap();
    let cfg = KernelConfig::default();
    let gram = CenteredGram::from_kernel(pairwise_kernel(&signal, &cfg).unwrap()).unwrap();
    top_eigenvalues(&gram, 50).unwrap()
}

fn min_sim_time(spectrum: &Spectrum) -> Duration {
    let cfg = SimConfig::new(1000, 499, 7).unwrap();
    (0..3)
        .map(|_| {
            let t = Instant::now();
            simulate_sup(spectrum, &cfg).unwrap();
            t.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn c07_simulation_time_is_independent_of_n() {
    let small = spectrum_for(1000, 71);
    let large = spectrum_for(8000, 72);
    let t_small = min_sim_time(&small);
    let t_large = min_sim_time(&large);
    let ratio = t_small.max(t_large).as_secs_f64() / t_small.min(t_large).as_secs_f64();
    verdict(
        7,
        "simulation n-independence",
        ratio < 2.0,
        &format!(
            "n=1000 {:.0} ms, n=8000 {:.0} ms, ratio {ratio:.2}",
            t_small.as_secs_f64() * 1e3,
            t_large.as_secs_f64() * 1e3
        ),
    );
}

#[test]
fn c08_long_signal() {
    let n = 10_000_000;
    let spec = GeneratorSpec::new(GeneratorKind::MeanShift, n, 0.5, 1.0, 81);
    let signal = generate(&spec).unwrap();
    let start = Instant::now();
    let result =
        detect_long(&signal, &KernelConfig::default(), 50, &SimConfig::with_seed(82), 0.05, 2000).unwrap();
    let elapsed = start.elapsed();
    drop(signal);
    let window_len = result.window.map(|[lo, hi]| hi - lo + 1);
    let end_to_end = result.refined_k.is_some()
        && window_len.is_some_and(|w| w <= 2001)
        && elapsed < Duration::from_secs(300);

    let settings = TestSettings::default();
    let relative_var = |n: usize, seed: u64| {
        let spec = GeneratorSpec::new(GeneratorKind::MeanShift, n, 0.5, 1.0, seed);
        let cell = run_cell(&spec, Method::Long, &settings, 200).unwrap();
        cell.var_location / (n as f64 * n as f64)
    };
    let v4 = relative_var(10_000, 83);
    let v6 = relative_var(1_000_000, 84);
    let ratio = v4.max(v6) / v4.min(v6);

    verdict(
        8,
        "long signal",
        end_to_end && ratio <= 3.0,
        &format!(
            "n=1e7 in {:.1} s, refined k {:?}, window length {:?}; var(k/n) n=1e4 {v4:.3e}, n=1e6 {v6:.3e}, ratio {ratio:.2}",
            elapsed.as_secs_f64(),
            result.refined_k,
            window_len
        ),
    );
}

#[test]
fn c09_asymptotic_and_permutation_agree() {
    let settings = TestSettings::default();
    let mut agree = 0;
    let mut rejections = [0, 0];
    let trials = 100;
    for t in 0..trials {
        let (gen_seed, test_seed) = experiment::trial_seeds(91, t);
        let shift = if t % 2 == 0 { 0.0 } else { 1.0 };
        let spec = GeneratorSpec::new(GeneratorKind::MeanShift, 500, 0.5, shift, gen_seed);
        let signal = generate(&spec).unwrap();
        let a = run_method(&signal, Method::Asymptotic, &settings, test_seed).unwrap();
        let p = run_method(&signal, Method::Permutation, &settings, test_seed).unwrap();
        agree += usize::from(a.reject == p.reject);
        rejections[0] += usize::from(a.reject);
        rejections[1] += usize::from(p.reject);
    }
    let rate = agree as f64 / trials as f64;
    verdict(
        9,
        "method agreement",
        rate >= 0.85,
        &format!(
            "agreement {rate:.2} over {trials} trials (rejections: asymptotic {}, permutation {})",
            rejections[0], rejections[1]
        ),
    );
}

/// Serialized reports with timings removed, for every pipeline.
fn pipeline_outputs(dir: &std::path::Path, tag: &str) -> Vec<String> {
    let settings = TestSettings::default();
    let short = generate(&GeneratorSpec::new(GeneratorKind::MeanShift, 400, 0.3, 1.0, 101)).unwrap();
    let long = generate(&GeneratorSpec::new(GeneratorKind::TailShift, 12_000, 0.6, 2.0, 102)).unwrap();
    let multi = Signal::new((0..600).map(|i| ((i * i) % 17) as f64 * 0.3).collect(), 3).unwrap();

    let mut out = Vec::new();
    let mut push = |r: TestReport| out.push(serde_json::to_string(&r.without_timings()).unwrap());
    for method in [Method::Asymptotic, Method::Permutation, Method::Long] {
        push(run_method(&short, method, &settings, 5).unwrap());
    }
    push(run_method(&long, Method::Long, &settings, 6).unwrap());
    push(run_method(&multi, Method::Asymptotic, &settings, 7).unwrap());
    let spec = GeneratorSpec::new(GeneratorKind::VarianceShift, 150, 0.5, 3.0, 8);
    for r in run_cell(&spec, Method::Asymptotic, &settings, 6).unwrap().reports {
        push(r);
    }

    let grid: ExperimentGrid = serde_json::from_value(serde_json::json!({
        "kind": "mean-shift",
        "n": [60, 120],
        "parameters": [0.0, 1.5],
        "trials": 4,
        "methods": ["asymptotic", "permutation"],
        "seed": 9,
        "replicates": 99,
        "gridPoints": 200
    }))
    .unwrap();
    let path = dir.join(format!("grid-{tag}.csv"));
    run_grid(&grid, &path).unwrap();
    out.push(std::fs::read_to_string(&path).unwrap());
    out
}

#[test]
fn c10_determinism_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| pipeline_outputs(dir.path(), &threads.to_string()))
    };
    let one = run(1);
    let four = run(4);
    let again = run(4);
    let identical = one == four && four == again;
    verdict(
        10,
        "determinism",
        identical,
        &format!("{} outputs compared across 1 and 4 threads and a rerun", one.len()),
    );
}
