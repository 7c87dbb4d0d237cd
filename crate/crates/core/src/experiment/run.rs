use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentMode, OutputFormat};
use super::families::{build_potential, coefficient_field, PotentialInfo};
use super::output::{fmt_float, fmt_opt, to_csv, write_atomic};
use super::ExperimentError;
use crate::adapt::{
    run_eigen, run_source, AdaptError, Admissibility, EigenRun, LoopMode, SourceRun, Termination,
};
use crate::frequency::{FreqIndex, IndexSet};
use crate::operator::{assemble, solve_eigen, solve_source, Potential};
use crate::spectral::SpectralField;
use crate::verify::{
    eigenvalue_gap_check, fit_rates, reference_solve, ClusterDistance, GapCheck, RateOutcome,
    RatePoint, ReferenceSolution, VerifyError,
};

/// Environment variable overriding the configured output directory.
pub const OUT_DIR_ENV: &str = "PWADAPT_OUT_DIR";

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub mode: Option<ExperimentMode>,
    pub seed: Option<u64>,
}

fn numerical(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Numerical(e.to_string())
}

fn adapt_error(e: AdaptError) -> ExperimentError {
    match e {
        AdaptError::InvalidConfig(message) => ExperimentError::Validation {
            path: "algorithm".into(),
            message,
        },
        other => numerical(other),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceInfo {
    pub m_ref: u32,
    pub eigenvalues: Vec<f64>,
    pub groups: Vec<[usize; 2]>,
    pub gap_check: Option<GapCheck>,
    pub self_consistency: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformRow {
    pub radius: u32,
    pub dof: usize,
    pub eigenvalues: Vec<f64>,
    pub distance: f64,
    pub eigenvalue_errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub adaptive_dof: usize,
    pub adaptive_error: f64,
    pub uniform_radius: Option<u32>,
    pub uniform_dof: Option<usize>,
    pub uniform_error: Option<f64>,
}

impl ComparisonRow {
    pub fn dof_ratio(&self) -> Option<f64> {
        self.uniform_dof
            .map(|u| self.adaptive_dof as f64 / u as f64)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub mode: &'static str,
    pub seed: Option<u64>,
    pub termination_reason: &'static str,
    pub iterations: usize,
    pub final_index_set_size: usize,
    pub final_eigenvalues: Vec<f64>,
    pub reference: Option<ReferenceInfo>,
    pub rate_fit: Option<RateOutcome>,
    pub admissibility: Option<Admissibility>,
    pub potential: PotentialInfo,
    pub comparison_final: Option<ComparisonRow>,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub wall_time_total: f64,
    pub wall_times: Vec<f64>,
}

/// Verification data of an eigenvalue run.
#[derive(Debug, Clone)]
pub struct EigenVerification {
    pub reference: ReferenceSolution,
    pub distances: Vec<ClusterDistance>,
    pub eigenvalue_errors: Vec<Vec<f64>>,
}

/// Everything a run computes, before anything is written.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub summary: RunSummary,
    pub potential: Potential,
    pub eigen: Option<EigenRun>,
    pub source: Option<SourceRun>,
    pub verification: Option<EigenVerification>,
    /// `‖U_ref - U_n‖_a` per iteration of the source loop.
    pub source_errors: Option<Vec<f64>>,
    pub uniform: Option<Vec<UniformRow>>,
    pub comparison: Option<Vec<ComparisonRow>>,
    pub files: Vec<(String, String)>,
}

/// Dense solves on `ball(M, d)` for each `M` in `radii`, measured against `reference`.
pub fn uniform_sweep(
    potential: &Potential,
    reference: &ReferenceSolution,
    radii: &[u32],
) -> Result<Vec<UniformRow>, VerifyError> {
    uniform_sweep_until(potential, reference, radii, None)
}

/// Like [`uniform_sweep`], but stops after the first radius whose distance
/// is at or below `target`.
pub fn uniform_sweep_until(
    potential: &Potential,
    reference: &ReferenceSolution,
    radii: &[u32],
    target: Option<f64>,
) -> Result<Vec<UniformRow>, VerifyError> {
    let (k0, n) = (reference.cluster.k0, reference.cluster.len());
    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        let basis = IndexSet::ball(radius, potential.dim())?;
        let cluster = solve_eigen(&assemble(&basis, potential)?, k0, n)?;
        let distance = reference.distance(&cluster)?.total;
        rows.push(UniformRow {
            radius,
            dof: basis.len(),
            distance,
            eigenvalue_errors: reference.eigenvalue_errors(&cluster)?,
            eigenvalues: cluster.eigenvalues,
        });
        if target.is_some_and(|t| distance <= t) {
            break;
        }
    }
    Ok(rows)
}

/// `--out`, then the environment override, then the config.
pub fn resolve_out_dir(config: &ExperimentConfig, options: &RunOptions) -> PathBuf {
    options
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.directory))
}

/// Largest reference cutoff used when none is configured.
fn max_auto_ref(dim: usize) -> u32 {
    match dim {
        1 => 512,
        2 => 24,
        _ => 8,
    }
}

fn auto_m_ref(config: &ExperimentConfig, reached: f64) -> u32 {
    let wanted = (2.0 * reached).ceil() as u32;
    wanted
        .max(16)
        .max(2 * config.algorithm.m0)
        .min(max_auto_ref(config.problem.dim))
}

fn reference_info(
    reference: &ReferenceSolution,
    self_consistency: Option<f64>,
    eigen: bool,
) -> ReferenceInfo {
    ReferenceInfo {
        m_ref: reference.radius,
        eigenvalues: reference.eigenvalues().to_vec(),
        groups: reference.groups.iter().map(|r| [r.start, r.end]).collect(),
        gap_check: eigen.then(|| eigenvalue_gap_check(reference)),
        self_consistency,
    }
}

fn rhs_fields(config: &ExperimentConfig) -> Result<Vec<SpectralField>, ExperimentError> {
    let dim = config.problem.dim;
    if config.problem.rhs.is_empty() {
        return Ok(vec![
            SpectralField::plane_wave(dim, FreqIndex::ZERO).map_err(numerical)?
        ]);
    }
    config
        .problem
        .rhs
        .iter()
        .map(|items| {
            let real = coefficient_field(dim, items, true);
            match real {
                Ok(f) => Ok(f),
                Err(_) => coefficient_field(dim, items, false),
            }
        })
        .collect()
}

fn rate_fit(
    records: &[crate::adapt::IterationRecord],
    errors: &[f64],
    skip: usize,
    warnings: &mut Vec<String>,
) -> Option<RateOutcome> {
    let points: Vec<RatePoint> = records
        .iter()
        .zip(errors)
        .map(|(r, &error)| RatePoint {
            n: r.n,
            dof_delta: r.dof_delta,
            error,
        })
        .collect();
    match fit_rates(&points, skip) {
        Ok(fit) => Some(fit),
        Err(e) => {
            warnings.push(format!("rate fit skipped: {e}"));
            None
        }
    }
}

fn base_columns(values_prefix: &str, count: usize) -> Vec<String> {
    let mut header: Vec<String> = [
        "n",
        "index_set_size",
        "dof_delta",
        "eta_tilde",
        "eta_exact",
        "zeta_actual",
        "truncation_m",
        "marked_pairs",
        "achieved_fraction",
        "galerkin_ratio",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=count).map(|l| format!("{values_prefix}_{l}")));
    header
}

fn base_row(r: &crate::adapt::IterationRecord) -> Vec<String> {
    let mut row = vec![
        r.n.to_string(),
        r.index_set_size.to_string(),
        r.dof_delta.to_string(),
        fmt_float(r.eta_tilde),
        fmt_opt(r.eta_exact),
        fmt_float(r.zeta_actual),
        r.truncation_m.map(|m| m.to_string()).unwrap_or_default(),
        r.marked_pairs.to_string(),
        fmt_opt(r.achieved_fraction),
        fmt_opt(r.galerkin_ratio),
    ];
    row.extend(r.eigenvalues.iter().map(|&v| fmt_float(v)));
    row
}

fn audit_lines(marks: &[crate::marking::MarkResult]) -> Result<String, ExperimentError> {
    let mut out = String::new();
    for (n, m) in marks.iter().enumerate() {
        let line = serde_json::json!({
            "n": n,
            "pairs_considered": m.pairs_considered,
            "pairs_marked": m.pairs_marked,
            "achieved_fraction": m.achieved_fraction,
            "marked": m.marked.to_tuples(),
        });
        out.push_str(&serde_json::to_string(&line).map_err(numerical)?);
        out.push('\n');
    }
    Ok(out)
}

fn gnuplot_script(has_distance: bool, error_column: &str) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset logscale xy\n\
         set xlabel '|G_n|'\nset ylabel 'estimator / error'\n\
         plot 'iterations.csv' using 'index_set_size':'eta_tilde' with linespoints title 'eta_tilde'",
    );
    if has_distance {
        s.push_str(&format!(
            ", \\\n     '' using 'index_set_size':'{error_column}' with linespoints title '{error_column}'"
        ));
    }
    s.push('\n');
    s
}

fn default_radii(config: &ExperimentConfig, m_ref: u32) -> Vec<u32> {
    let lo = config.algorithm.m0.min(m_ref);
    (lo..=(m_ref / 2).max(lo)).collect()
}

fn comparison_rows(
    records: &[crate::adapt::IterationRecord],
    distances: &[ClusterDistance],
    uniform: &[UniformRow],
) -> Vec<ComparisonRow> {
    records
        .iter()
        .zip(distances)
        .map(|(r, d)| {
            let matched = uniform.iter().find(|u| u.distance <= d.total);
            ComparisonRow {
                n: r.n,
                adaptive_dof: r.index_set_size,
                adaptive_error: d.total,
                uniform_radius: matched.map(|u| u.radius),
                uniform_dof: matched.map(|u| u.dof),
                uniform_error: matched.map(|u| u.distance),
            }
        })
        .collect()
}

/// Runs the configured experiment in memory.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    config.validate()?;
    let started = Instant::now();
    let built = build_potential(&config.problem.potential, config.problem.dim, config.seed)?;
    let potential = built.potential.clone();
    let info = built.info(&config.problem.potential);
    let mode = config.algorithm.mode;
    let verif = &config.verification;
    let mut warnings = Vec::new();
    let mut files: Vec<(String, String)> = Vec::new();
    let mut outcome_eigen = None;
    let mut outcome_source = None;
    let mut verification = None;
    let mut source_errors = None;
    let mut uniform = None;
    let mut comparison = None;
    let mut reference_summary = None;
    let mut fit = None;
    let mut admissibility = None;
    let termination;
    let iterations;
    let final_size;
    let final_values;
    let mut wall_times = Vec::new();

    match mode {
        ExperimentMode::EigenFeasible | ExperimentMode::EigenExact | ExperimentMode::Compare => {
            let loop_mode = if mode == ExperimentMode::EigenExact {
                LoopMode::EigenExact
            } else {
                LoopMode::EigenFeasible
            };
            let run = run_eigen(&config.adaptive(loop_mode), &potential).map_err(adapt_error)?;
            warnings.extend(run.warnings.iter().cloned());
            admissibility = Some(run.admissibility);
            termination = run.termination;
            iterations = run.records.len();
            final_size = run.final_cluster().basis.len();
            final_values = run.final_cluster().eigenvalues.clone();
            wall_times = run.records.iter().map(|r| r.wall_time).collect();

            let mut header = base_columns("lambda", config.problem.n_eigs);
            let mut rows: Vec<Vec<String>> = run.records.iter().map(base_row).collect();

            if verif.enable_subspace_distance || mode == ExperimentMode::Compare {
                let reached = run.final_cluster().basis.max_norm();
                let m_ref = verif.m_ref.unwrap_or_else(|| auto_m_ref(config, reached));
                if f64::from(m_ref) < 2.0 * reached {
                    warnings.push(format!(
                        "m_ref = {m_ref} is below twice the largest frequency reached ({reached:.2})"
                    ));
                }
                let reference =
                    reference_solve(&potential, config.problem.k0, config.problem.n_eigs, m_ref)
                        .map_err(numerical)?;
                let gap = eigenvalue_gap_check(&reference);
                if !gap.ok {
                    warnings.push(format!(
                        "reference cluster boundary unresolved at m_ref = {m_ref}"
                    ));
                }
                let consistency = if verif.self_consistency {
                    Some(reference.self_consistency(&potential).map_err(numerical)?)
                } else {
                    None
                };
                reference_summary = Some(reference_info(&reference, consistency, true));
                let contained = run.final_cluster().basis.is_subset_of(reference.basis());
                if contained {
                    let distances = run
                        .clusters
                        .iter()
                        .map(|c| reference.distance(c))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(numerical)?;
                    let errors = run
                        .clusters
                        .iter()
                        .map(|c| reference.eigenvalue_errors(c))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(numerical)?;
                    header.push("distance".into());
                    header.extend((1..=config.problem.n_eigs).map(|l| format!("lambda_err_{l}")));
                    for ((row, d), e) in rows.iter_mut().zip(&distances).zip(&errors) {
                        row.push(fmt_float(d.total));
                        row.extend(e.iter().map(|&x| fmt_float(x)));
                    }
                    let totals: Vec<f64> = distances.iter().map(|d| d.total).collect();
                    fit = rate_fit(&run.records, &totals, verif.fit_skip, &mut warnings);

                    if mode == ExperimentMode::Compare {
                        // Without explicit radii the sweep only needs to reach the final adaptive error.
                        let (radii, target) = match &verif.uniform_radii {
                            Some(r) => (r.clone(), None),
                            None => (default_radii(config, m_ref), totals.last().copied()),
                        };
                        let sweep = uniform_sweep_until(&potential, &reference, &radii, target)
                            .map_err(numerical)?;
                        let table = comparison_rows(&run.records, &distances, &sweep);
                        files.push((
                            "uniform.csv".into(),
                            uniform_csv(&sweep, config.problem.n_eigs)?,
                        ));
                        files.push(("comparison.csv".into(), comparison_csv(&table)?));
                        uniform = Some(sweep);
                        comparison = Some(table);
                    }
                    verification = Some(EigenVerification {
                        reference,
                        distances,
                        eigenvalue_errors: errors,
                    });
                } else {
                    warnings.push(format!(
                        "adaptive index set leaves the reference ball of radius {m_ref}; distances skipped"
                    ));
                }
            }
            files.insert(0, ("iterations.csv".into(), to_csv(&header, &rows)?));
            if config.output.formats.contains(&OutputFormat::Audit) {
                files.push(("marked_sets.jsonl".into(), audit_lines(&run.marks)?));
            }
            if config.output.formats.contains(&OutputFormat::Gnuplot) {
                files.push((
                    "plot.gp".into(),
                    gnuplot_script(verification.is_some(), "distance"),
                ));
            }
            outcome_eigen = Some(run);
        }
        ExperimentMode::Source => {
            let rhs = rhs_fields(config)?;
            let run = run_source(&config.adaptive(LoopMode::Source), &potential, &rhs)
                .map_err(adapt_error)?;
            warnings.extend(run.warnings.iter().cloned());
            termination = run.termination;
            iterations = run.records.len();
            final_size = run.sets.last().map_or(0, IndexSet::len);
            final_values = run
                .records
                .last()
                .map(|r| r.eigenvalues.clone())
                .unwrap_or_default();
            wall_times = run.records.iter().map(|r| r.wall_time).collect();
            let mut header = base_columns("norm", rhs.len());
            let mut rows: Vec<Vec<String>> = run.records.iter().map(base_row).collect();
            if verif.enable_subspace_distance {
                let reached = run.sets.last().map_or(0.0, IndexSet::max_norm);
                let m_ref = verif.m_ref.unwrap_or_else(|| auto_m_ref(config, reached));
                let basis = IndexSet::ball(m_ref, config.problem.dim).map_err(numerical)?;
                let refs = solve_source(&basis, &potential, &rhs).map_err(numerical)?;
                let reference = reference_solve(&potential, 0, 1, m_ref).map_err(numerical)?;
                if run.sets.last().is_some_and(|s| s.is_subset_of(&basis)) {
                    let ref_vecs: Vec<Vec<Complex64>> =
                        refs.iter().map(|u| u.coeffs().to_vec()).collect();
                    let errors = run
                        .solutions
                        .iter()
                        .map(|us| {
                            us.iter()
                                .zip(&ref_vecs)
                                .map(|(u, r)| reference.energy_error(r, u).map(|e| e * e))
                                .sum::<Result<f64, _>>()
                                .map(f64::sqrt)
                        })
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(numerical)?;
                    header.push("energy_error".into());
                    for (row, e) in rows.iter_mut().zip(&errors) {
                        row.push(fmt_float(*e));
                    }
                    fit = rate_fit(&run.records, &errors, verif.fit_skip, &mut warnings);
                    source_errors = Some(errors);
                } else {
                    warnings.push(format!(
                        "adaptive index set leaves the reference ball of radius {m_ref}"
                    ));
                }
                let mut info = reference_info(&reference, None, false);
                info.eigenvalues.clear();
                reference_summary = Some(info);
            }
            files.insert(0, ("iterations.csv".into(), to_csv(&header, &rows)?));
            if config.output.formats.contains(&OutputFormat::Audit) {
                files.push(("marked_sets.jsonl".into(), audit_lines(&run.marks)?));
            }
            if config.output.formats.contains(&OutputFormat::Gnuplot) {
                files.push((
                    "plot.gp".into(),
                    gnuplot_script(source_errors.is_some(), "energy_error"),
                ));
            }
            outcome_source = Some(run);
        }
        ExperimentMode::Uniform => {
            let m_ref = verif
                .m_ref
                .unwrap_or_else(|| auto_m_ref(config, f64::from(config.algorithm.m0)));
            let reference =
                reference_solve(&potential, config.problem.k0, config.problem.n_eigs, m_ref)
                    .map_err(numerical)?;
            let radii = verif
                .uniform_radii
                .clone()
                .unwrap_or_else(|| default_radii(config, m_ref));
            let sweep = uniform_sweep(&potential, &reference, &radii).map_err(numerical)?;
            files.push((
                "uniform.csv".into(),
                uniform_csv(&sweep, config.problem.n_eigs)?,
            ));
            reference_summary = Some(reference_info(&reference, None, true));
            // The sweep always runs through its whole radius list.
            termination = Termination::MaxIter;
            iterations = sweep.len();
            final_size = sweep.last().map_or(0, |r| r.dof);
            final_values = sweep
                .last()
                .map(|r| r.eigenvalues.clone())
                .unwrap_or_default();
            uniform = Some(sweep);
        }
    }

    let mut file_names: Vec<String> = files.iter().map(|f| f.0.clone()).collect();
    file_names.push("summary.json".into());
    let summary = RunSummary {
        config: config.clone(),
        mode: mode.as_str(),
        seed: config.seed,
        termination_reason: termination.as_str(),
        iterations,
        final_index_set_size: final_size,
        final_eigenvalues: final_values,
        reference: reference_summary,
        rate_fit: fit,
        admissibility,
        potential: info,
        comparison_final: comparison
            .as_ref()
            .and_then(|rows: &Vec<ComparisonRow>| rows.last().cloned()),
        files: file_names,
        warnings,
        wall_time_total: started.elapsed().as_secs_f64(),
        wall_times,
    };
    Ok(ExperimentOutcome {
        summary,
        potential,
        eigen: outcome_eigen,
        source: outcome_source,
        verification,
        source_errors,
        uniform,
        comparison,
        files,
    })
}

fn uniform_csv(rows: &[UniformRow], n_eigs: usize) -> Result<String, ExperimentError> {
    let mut header: Vec<String> = vec!["radius".into(), "dof".into(), "distance".into()];
    header.extend((1..=n_eigs).map(|l| format!("lambda_{l}")));
    header.extend((1..=n_eigs).map(|l| format!("lambda_err_{l}")));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.radius.to_string(),
                r.dof.to_string(),
                fmt_float(r.distance),
            ];
            row.extend(r.eigenvalues.iter().map(|&x| fmt_float(x)));
            row.extend(r.eigenvalue_errors.iter().map(|&x| fmt_float(x)));
            row
        })
        .collect();
    to_csv(&header, &body)
}

fn comparison_csv(rows: &[ComparisonRow]) -> Result<String, ExperimentError> {
    let header: Vec<String> = [
        "n",
        "adaptive_dof",
        "adaptive_error",
        "uniform_radius",
        "uniform_dof",
        "uniform_error",
        "dof_ratio",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.adaptive_dof.to_string(),
                fmt_float(r.adaptive_error),
                r.uniform_radius.map(|x| x.to_string()).unwrap_or_default(),
                r.uniform_dof.map(|x| x.to_string()).unwrap_or_default(),
                fmt_opt(r.uniform_error),
                fmt_opt(r.dof_ratio()),
            ]
        })
        .collect();
    to_csv(&header, &body)
}

fn write_outcome(outcome: &ExperimentOutcome, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, contents) in &outcome.files {
        write_atomic(dir, name, contents)?;
    }
    let mut json = serde_json::to_string_pretty(&outcome.summary).map_err(numerical)?;
    json.push('\n');
    write_atomic(dir, "summary.json", &json)
}

/// Applies overrides, runs, and writes all artifacts to the output directory.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<(RunSummary, PathBuf), ExperimentError> {
    let mut config = config.clone();
    if let Some(mode) = options.mode {
        config.algorithm.mode = mode;
    }
    if let Some(seed) = options.seed {
        config.seed = Some(seed);
    }
    let dir = resolve_out_dir(&config, options);
    config.output.directory = dir.display().to_string();
    let outcome = execute(&config)?;
    write_outcome(&outcome, &dir)?;
    Ok((outcome.summary, dir))
}
