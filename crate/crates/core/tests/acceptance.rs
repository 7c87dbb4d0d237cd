//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p planewave-adapt --test acceptance`. Exits non-zero
//! when any criterion fails.

use std::time::{Duration, Instant};

use planewave_adapt::adapt::{run_eigen, run_source, AdaptiveConfig, EigenRun, LoopMode};
use planewave_adapt::experiment::{execute, run_experiment, ExperimentConfig, RunOptions};
use planewave_adapt::marking::dorfler_mark;
use planewave_adapt::operator::Potential;
use planewave_adapt::verify::{fit_rates, reference_solve, RateOutcome, RatePoint};
use planewave_adapt::{solve_source, FreqIndex, IndexSet, SpectralField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn f1(g: i32) -> FreqIndex {
    FreqIndex::new(&[g])
}

fn one_plus_cos() -> Potential {
    Potential::cosine_series(1, 1.0, &[(f1(1), 1.0)]).unwrap()
}

/// max/min over a window of positive ratios.
fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Shared runs: everything the per-run criteria look at.
struct Runs {
    /// Eigenvalue runs with a label, for the all-runs criteria.
    eigen: Vec<(&'static str, EigenRun)>,
    /// Galerkin ratios of the source loop.
    source_ratios: Vec<f64>,
}

fn cosine_run() -> AdaptiveConfig {
    AdaptiveConfig {
        theta_tilde: 0.5,
        zeta: 0.1,
        tol: 0.0,
        m0: 1,
        k0: 0,
        n_eigs: 1,
        max_iter: 8,
        ..AdaptiveConfig::new(1, LoopMode::EigenFeasible)
    }
}

fn random_decay_config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "seed": 20240517,
            "problem": {"dim": 1, "k0": 0, "n_eigs": 2,
                        "potential": {"family": "random-decay", "amplitude": 1.0, "p": 2.5, "r_cut": 32}},
            "algorithm": {"mode": "compare", "theta_tilde": 0.5, "zeta": 0.1, "tol": 0, "m0": 2, "max_iter": 12},
            "verification": {"m_ref": 128, "fit_skip": 1}
        }"#,
    )
    .unwrap()
}

fn criterion_1(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let v = Potential::constant(1, 1.0).unwrap();
    let cfg = AdaptiveConfig {
        m0: 2,
        k0: 0,
        n_eigs: 3,
        ..AdaptiveConfig::new(1, LoopMode::EigenFeasible)
    };
    let run = run_eigen(&cfg, &v).unwrap();
    let elapsed = start.elapsed();
    let values = &run.final_cluster().eigenvalues;
    let exact = values
        .iter()
        .zip([1.0, 2.0, 2.0])
        .all(|(a, b)| (a - b).abs() < 1e-12);
    let pass = run.records.len() == 1
        && run.records[0].eta_tilde == 0.0
        && exact
        && elapsed < Duration::from_secs(1);
    let detail = format!(
        "iterations = {}, eta_tilde = {:e}, eigenvalues = {values:?}, {:.3}s",
        run.records.len(),
        run.records[0].eta_tilde,
        elapsed.as_secs_f64()
    );
    runs.eigen.push(("constant d=1", run));
    outcome(pass, detail)
}

fn criteria_3_4_7(runs: &mut Runs) -> [Outcome; 3] {
    let start = Instant::now();
    let v = one_plus_cos();
    let run = run_eigen(&cosine_run(), &v).unwrap();
    let reference = reference_solve(&v, 0, 1, 64).unwrap();
    let distances: Vec<f64> = run
        .clusters
        .iter()
        .map(|c| reference.distance(c).unwrap().total)
        .collect();
    let lambda_err: Vec<f64> = run
        .clusters
        .iter()
        .map(|c| reference.eigenvalue_errors(c).unwrap()[0])
        .collect();
    let elapsed = start.elapsed();
    let etas: Vec<f64> = run.records.iter().map(|r| r.eta_exact.unwrap()).collect();
    let iterations = run.records.len() - 1;
    eprintln!("  cosine run: distances {}", fmt_list(&distances));
    eprintln!("  cosine run: eta       {}", fmt_list(&etas));
    eprintln!("  cosine run: lam err   {}", fmt_list(&lambda_err));

    let ratio: Vec<f64> = distances
        .iter()
        .zip(&etas)
        .skip(2)
        .map(|(d, e)| d / e)
        .collect();
    let s3 = spread(&ratio);
    let c3 = outcome(
        iterations >= 8
            && s3 <= 10.0
            && ratio.iter().all(|r| r.is_finite() && *r > 0.0)
            && elapsed < Duration::from_secs(30),
        format!(
            "{iterations} iterations, distance/eta from n=2: {} spread {s3:.3}, {:.2}s",
            fmt_list(&ratio),
            elapsed.as_secs_f64()
        ),
    );

    let points: Vec<RatePoint> = run
        .records
        .iter()
        .zip(&distances)
        .map(|(r, &error)| RatePoint {
            n: r.n,
            dof_delta: r.dof_delta,
            error,
        })
        .collect();
    let c4 = match fit_rates(&points, 1) {
        Ok(RateOutcome::Fit(f)) => outcome(
            f.alpha_hat < 0.95 && f.alpha_r_squared > 0.9,
            format!(
                "alpha_hat = {:.4}, r^2 = {:.4}",
                f.alpha_hat, f.alpha_r_squared
            ),
        ),
        other => outcome(false, format!("no fit: {other:?}")),
    };

    let sq: Vec<f64> = lambda_err
        .iter()
        .zip(&distances)
        .skip(2)
        .map(|(l, d)| l / (d * d))
        .collect();
    let s7 = spread(&sq);
    let c7 = outcome(
        s7 <= 20.0 && sq.iter().all(|r| r.is_finite() && *r > 0.0),
        format!(
            "lambda error / distance^2 from n=2: {} spread {s7:.3}",
            fmt_list(&sq)
        ),
    );
    runs.eigen.push(("1+cos x d=1", run));
    [c3, c4, c7]
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut agree = 0;
    let trials = 200;
    for _ in 0..trials {
        let pairs = rng.random_range(1..=12usize);
        let contribs: Vec<(FreqIndex, f64)> = (0..pairs)
            .map(|i| {
                (
                    FreqIndex::new(&[-(i as i32) - 1]),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let total: f64 = contribs.iter().map(|p| p.1).sum();
        let theta = rng.random_range(0.05..0.95);
        let threshold = theta * theta * total;
        let greedy = dorfler_mark(1, &contribs, theta, total)
            .unwrap()
            .pairs_marked;
        let brute = (0u32..1 << pairs)
            .filter(|mask| {
                (0..pairs)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| contribs[i].1)
                    .sum::<f64>()
                    >= threshold
            })
            .map(|mask| mask.count_ones() as usize)
            .min()
            .unwrap();
        if greedy == brute {
            agree += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        agree == trials && elapsed < Duration::from_secs(5),
        format!("{agree}/{trials} agree, {:.3}s", elapsed.as_secs_f64()),
    )
}

fn criterion_9(runs: &mut Runs) -> (Outcome, Vec<f64>) {
    let start = Instant::now();
    let config = random_decay_config();
    let out = execute(&config).unwrap();
    let elapsed = start.elapsed();
    let run = out.eigen.unwrap();
    let verification = out.verification.unwrap();
    let distances: Vec<f64> = verification.distances.iter().map(|d| d.total).collect();
    eprintln!(
        "  random-decay: |G| {:?}",
        run.records
            .iter()
            .map(|r| r.index_set_size)
            .collect::<Vec<_>>()
    );
    eprintln!("  random-decay: distances {}", fmt_list(&distances));
    let uniform = out.uniform.unwrap();
    let uniform_errors: Vec<f64> = uniform.iter().map(|u| u.distance).collect();
    let iterations = run.records.len() - 1;
    let points: Vec<RatePoint> = run
        .records
        .iter()
        .zip(&distances)
        .map(|(r, &error)| RatePoint {
            n: r.n,
            dof_delta: r.dof_delta,
            error,
        })
        .collect();
    let fit = fit_rates(&points, 1);
    let last = out.comparison.unwrap().last().cloned().unwrap();
    let ratio = last.dof_ratio();
    let (s_ok, s_text) = match fit {
        Ok(RateOutcome::Fit(f)) => (
            f.s_hat.is_some_and(|s| s > 0.0) && f.s_r_squared.is_some_and(|r| r > 0.85),
            format!(
                "s_hat = {:.3}, r^2 = {:.4}",
                f.s_hat.unwrap_or(f64::NAN),
                f.s_r_squared.unwrap_or(f64::NAN)
            ),
        ),
        other => (false, format!("no fit: {other:?}")),
    };
    let pass = iterations >= 10
        && s_ok
        && ratio.is_some_and(|r| r <= 1.5)
        && elapsed < Duration::from_secs(60);
    let detail = format!(
        "{iterations} iterations, {s_text}, final adaptive |G| = {} at error {:.3e} vs uniform |G| = {:?} (ratio {:?}), {:.2}s",
        last.adaptive_dof,
        last.adaptive_error,
        last.uniform_dof,
        ratio.map(|r| (r * 1000.0).round() / 1000.0),
        elapsed.as_secs_f64()
    );
    runs.eigen.push(("random-decay d=1", run));
    (outcome(pass, detail), uniform_errors)
}

fn criterion_10(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let cfg = AdaptiveConfig {
        m0: 1,
        k0: 0,
        n_eigs: 5,
        tol: 0.0,
        max_iter: 6,
        ..AdaptiveConfig::new(2, LoopMode::EigenFeasible)
    };
    let constant = Potential::constant(2, 1.0).unwrap();
    let run_c = run_eigen(&cfg, &constant).unwrap();
    let perturbed = Potential::cosine_series(
        2,
        1.0,
        &[
            (FreqIndex::new(&[1, 0]), 0.3),
            (FreqIndex::new(&[0, 1]), 0.3),
        ],
    )
    .unwrap();
    let run_p = run_eigen(&cfg, &perturbed).unwrap();
    let reference = reference_solve(&perturbed, 0, 5, 12).unwrap();
    let boundary_warnings = run_p
        .warnings
        .iter()
        .filter(|w| w.contains("boundary"))
        .count();
    let per_group: Vec<Vec<f64>> = run_p
        .clusters
        .iter()
        .map(|c| reference.distance(c).unwrap().per_group)
        .collect();
    let elapsed = start.elapsed();
    for (n, g) in per_group.iter().enumerate() {
        eprintln!(
            "  d=2 perturbed n={n} |G|={} per-group {}",
            run_p.records[n].index_set_size,
            fmt_list(g)
        );
    }
    let monotone = per_group
        .windows(2)
        .skip(2)
        .all(|w| w[1].iter().zip(&w[0]).all(|(b, a)| b < a));
    let constant_ok = (run_c.final_cluster().eigenvalues[0] - 1.0).abs() < 1e-12
        && run_c.final_cluster().eigenvalues[1..]
            .iter()
            .all(|l| (l - 2.0).abs() < 1e-12);
    let pass =
        boundary_warnings == 0 && monotone && constant_ok && elapsed < Duration::from_secs(60);
    let detail = format!(
        "constant: {:?} ({}), perturbed groups {:?}, boundary warnings {boundary_warnings}, per-group decreasing after n=2: {monotone}, {:.2}s",
        run_c.final_cluster().eigenvalues,
        run_c.termination.as_str(),
        reference.groups,
        elapsed.as_secs_f64()
    );
    runs.eigen.push(("constant d=2", run_c));
    runs.eigen.push(("perturbed d=2", run_p));
    outcome(pass, detail)
}

fn criterion_11(runs: &mut Runs) -> Outcome {
    let start = Instant::now();
    let v = one_plus_cos();
    let cfg = AdaptiveConfig {
        theta_tilde: 0.6,
        zeta: 0.0,
        tol: 1e-10,
        ..AdaptiveConfig::new(1, LoopMode::Source)
    };
    let f = SpectralField::plane_wave(1, f1(0)).unwrap();
    let run = run_source(&cfg, &v, &[f.clone()]).unwrap();
    let reference = reference_solve(&v, 0, 1, 64).unwrap();
    let u_ref = solve_source(&IndexSet::ball(64, 1).unwrap(), &v, &[f]).unwrap();
    let errors: Vec<f64> = run
        .solutions
        .iter()
        .map(|us| reference.energy_error(u_ref[0].coeffs(), &us[0]).unwrap())
        .collect();
    let elapsed = start.elapsed();
    eprintln!("  source: errors {}", fmt_list(&errors));
    runs.source_ratios = run
        .records
        .iter()
        .filter_map(|r| r.galerkin_ratio)
        .collect();
    let points: Vec<RatePoint> = run
        .records
        .iter()
        .zip(&errors)
        .map(|(r, &error)| RatePoint {
            n: r.n,
            dof_delta: r.dof_delta,
            error,
        })
        .collect();
    match fit_rates(&points, 1) {
        Ok(RateOutcome::Fit(fit)) => outcome(
            fit.alpha_hat < 1.0 && fit.alpha_r_squared > 0.9 && elapsed < Duration::from_secs(10),
            format!(
                "{} iterations ({}), contraction {:.4}, r^2 = {:.4}, {:.2}s",
                run.records.len() - 1,
                run.termination.as_str(),
                fit.alpha_hat,
                fit.alpha_r_squared,
                elapsed.as_secs_f64()
            ),
        ),
        other => outcome(false, format!("no fit: {other:?}")),
    }
}

fn criterion_2(runs: &Runs) -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    for (label, run) in &runs.eigen {
        for r in &run.records {
            let ratio = r.galerkin_ratio.unwrap();
            if ratio >= 1e-9 {
                failures.push(format!(
                    "{label} n={} ratio {ratio:.2e} eta {:.2e}",
                    r.n,
                    r.eta_exact.unwrap()
                ));
            }
            if ratio > worst.0 {
                worst = (ratio, format!("{label} n={}", r.n));
            }
        }
    }
    for (n, &ratio) in runs.source_ratios.iter().enumerate() {
        if ratio >= 1e-9 {
            failures.push(format!("source n={n} ratio {ratio:.2e}"));
        }
        if ratio > worst.0 {
            worst = (ratio, format!("source n={n}"));
        }
    }
    let mut detail = format!("worst ratio {:.3e} at {}", worst.0, worst.1);
    if !failures.is_empty() {
        detail.push_str(&format!(
            "; {} iterations at or above 1e-9: {}",
            failures.len(),
            failures.join("; ")
        ));
    }
    outcome(failures.is_empty(), detail)
}

fn criterion_5(runs: &Runs) -> Outcome {
    let mut checked = 0;
    let mut failures = Vec::new();
    for (label, run) in &runs.eigen {
        let zeta = 0.1;
        for r in run.records.iter().filter(|r| r.truncation_m.is_some()) {
            let (eta, tilde) = (r.eta_exact.unwrap(), r.eta_tilde);
            let slack = 1e-12 * eta.max(tilde);
            checked += 1;
            if !((1.0 - zeta) * tilde <= eta + slack && eta <= (1.0 + zeta) * tilde + slack) {
                failures.push(format!(
                    "{label} n={}: eta {eta:e}, eta_tilde {tilde:e}",
                    r.n
                ));
            }
        }
    }
    outcome(
        failures.is_empty() && checked > 0,
        format!(
            "{checked} truncated iterations checked{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", violations: {}", failures.join("; "))
            }
        ),
    )
}

fn criterion_8(runs: &Runs, uniform_errors: &[f64]) -> Outcome {
    let mut violations = Vec::new();
    for (label, run) in &runs.eigen {
        for (n, w) in run.clusters.windows(2).enumerate() {
            for (l, (b, a)) in w[1].eigenvalues.iter().zip(&w[0].eigenvalues).enumerate() {
                if *b > a + 1e-12 {
                    violations.push(format!("{label} n={} l={l}: {a} -> {b}", n + 1));
                }
            }
        }
    }
    for (i, w) in uniform_errors.windows(2).enumerate() {
        if w[1] > w[0] {
            violations.push(format!("uniform sweep step {i}: {:e} -> {:e}", w[0], w[1]));
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "{} eigen runs, {} uniform radii{}",
            runs.eigen.len(),
            uniform_errors.len(),
            if violations.is_empty() {
                String::new()
            } else {
                format!(", violations: {}", violations.join("; "))
            }
        ),
    )
}

fn criterion_12() -> Outcome {
    let config = random_decay_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let opts = |dir: &std::path::Path| RunOptions {
        out_dir: Some(dir.to_path_buf()),
        ..RunOptions::default()
    };
    run_experiment(&config, &opts(a.path())).unwrap();
    run_experiment(&config, &opts(b.path())).unwrap();
    let fa = std::fs::read(a.path().join("iterations.csv")).unwrap();
    let fb = std::fs::read(b.path().join("iterations.csv")).unwrap();
    outcome(
        fa == fb && !fa.is_empty(),
        format!("{} bytes, identical: {}", fa.len(), fa == fb),
    )
}

fn main() {
    let mut runs = Runs {
        eigen: Vec::new(),
        source_ratios: Vec::new(),
    };
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "exactness smoke test", criterion_1(&mut runs)));
    let [c3, c4, c7] = criteria_3_4_7(&mut runs);
    results.push((3, "estimator equivalence", c3));
    results.push((4, "linear convergence", c4));
    results.push((6, "marking minimality", criterion_6()));
    results.push((7, "eigenvalue squared rate", c7));
    let (c9, uniform_errors) = criterion_9(&mut runs);
    results.push((9, "complexity slope", c9));
    results.push((10, "degenerate cluster d=2", criterion_10(&mut runs)));
    results.push((11, "source loop contraction", criterion_11(&mut runs)));
    results.push((2, "Galerkin orthogonality", criterion_2(&runs)));
    results.push((5, "feasibility sandwich", criterion_5(&runs)));
    results.push((8, "monotonicity", criterion_8(&runs, &uniform_errors)));
    results.push((12, "reproducibility", criterion_12()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, o) in &results {
        println!(
            "{} criterion {id:>2} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
