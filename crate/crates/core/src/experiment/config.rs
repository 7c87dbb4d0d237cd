use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::adapt::{AdaptiveConfig, LoopMode};
use crate::frequency::MAX_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    EigenFeasible,
    EigenExact,
    Source,
    Uniform,
    Compare,
}

impl ExperimentMode {
    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned())).ok()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentMode::EigenFeasible => "eigen-feasible",
            ExperimentMode::EigenExact => "eigen-exact",
            ExperimentMode::Source => "source",
            ExperimentMode::Uniform => "uniform",
            ExperimentMode::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: Vec<i32>,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub k: Vec<i32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Explicit coefficients `V̂_K` in the orthonormal planewave basis; both
    /// members of every `±K` pair must be listed.
    Coefficients { coefficients: Vec<Coefficient> },
    /// `V ≡ c`.
    Constant { c: f64 },
    /// `c + Σ a_k cos(k·x)`.
    Trig {
        c: f64,
        #[serde(default)]
        terms: Vec<TrigTerm>,
    },
    /// `|V̂_G| = A (1 + |G|²)^{-p/2}` for `|G| <= r_cut`, seeded random phases.
    RandomDecay {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        p: f64,
        r_cut: u32,
        #[serde(default = "default_min_value")]
        min_value: f64,
    },
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_min_value() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub k0: usize,
    #[serde(default = "default_n_eigs")]
    pub n_eigs: usize,
    /// Right-hand sides for the source loop; defaults to `{e_0}`.
    #[serde(default)]
    pub rhs: Vec<Vec<Coefficient>>,
}

fn default_n_eigs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub mode: ExperimentMode,
    pub theta_tilde: f64,
    pub zeta: f64,
    pub tol: f64,
    pub m0: u32,
    pub max_iter: usize,
    pub max_dof: usize,
    pub initial_truncation: u32,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            mode: ExperimentMode::EigenFeasible,
            theta_tilde: 0.5,
            zeta: 0.1,
            tol: 1e-6,
            m0: 2,
            max_iter: 50,
            max_dof: 20_000,
            initial_truncation: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationConfig {
    /// Reference cutoff; chosen from the run when absent.
    pub m_ref: Option<u32>,
    pub enable_subspace_distance: bool,
    /// Leading iterations dropped from rate fits.
    pub fit_skip: usize,
    /// Ball radii of the uniform sweep. When absent, `m0 ..= m_ref / 2`; in
    /// compare mode the sweep then stops once it matches the final adaptive error.
    pub uniform_radii: Option<Vec<u32>>,
    /// Also solve at `2 m_ref` and report the eigenvalue change.
    pub self_consistency: bool,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            m_ref: None,
            enable_subspace_distance: true,
            fit_skip: 1,
            uniform_radii: None,
            self_consistency: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// `marked_sets.jsonl`.
    Audit,
    /// `plot.gp`.
    Gnuplot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "out".into(),
            formats: vec![OutputFormat::Audit],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn invalid(path: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| invalid("<root>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let p = &self.problem;
        if !(1..=MAX_DIM).contains(&p.dim) {
            return Err(invalid(
                "problem.dim",
                format!("must be 1, 2 or 3, got {}", p.dim),
            ));
        }
        if p.n_eigs < 1 {
            return Err(invalid("problem.n_eigs", "must be at least 1"));
        }
        let check_k = |path: String, k: &[i32]| {
            if k.len() != p.dim {
                Err(invalid(
                    &path,
                    format!("has {} components, expected {}", k.len(), p.dim),
                ))
            } else {
                Ok(())
            }
        };
        match &p.potential {
            PotentialSpec::Coefficients { coefficients } => {
                if coefficients.is_empty() {
                    return Err(invalid(
                        "problem.potential.coefficients",
                        "must not be empty",
                    ));
                }
                for (i, c) in coefficients.iter().enumerate() {
                    check_k(format!("problem.potential.coefficients[{i}].k"), &c.k)?;
                }
            }
            PotentialSpec::Constant { c } => {
                if !(*c > 0.0) {
                    return Err(invalid(
                        "problem.potential.c",
                        format!("must be positive, got {c}"),
                    ));
                }
            }
            PotentialSpec::Trig { terms, .. } => {
                for (i, t) in terms.iter().enumerate() {
                    check_k(format!("problem.potential.terms[{i}].k"), &t.k)?;
                }
            }
            PotentialSpec::RandomDecay {
                amplitude,
                p: decay,
                min_value,
                ..
            } => {
                if self.seed.is_none() {
                    return Err(invalid("seed", "required for the random-decay family"));
                }
                if !(*amplitude >= 0.0) {
                    return Err(invalid(
                        "problem.potential.amplitude",
                        "must be nonnegative",
                    ));
                }
                if !(*decay > 0.0) {
                    return Err(invalid("problem.potential.p", "must be positive"));
                }
                if !(*min_value > 0.0) {
                    return Err(invalid("problem.potential.min_value", "must be positive"));
                }
            }
        }
        for (j, f) in p.rhs.iter().enumerate() {
            for (i, c) in f.iter().enumerate() {
                check_k(format!("problem.rhs[{j}][{i}].k"), &c.k)?;
            }
        }
        let a = &self.algorithm;
        if !(a.theta_tilde > 0.0 && a.theta_tilde < 1.0) {
            return Err(invalid(
                "algorithm.theta_tilde",
                format!("must lie in (0, 1), got {}", a.theta_tilde),
            ));
        }
        if !(a.zeta >= 0.0) {
            return Err(invalid(
                "algorithm.zeta",
                format!("must be nonnegative, got {}", a.zeta),
            ));
        }
        if a.zeta >= a.theta_tilde {
            return Err(invalid(
                "algorithm.zeta, algorithm.theta_tilde",
                format!(
                    "zeta = {} must be below theta_tilde = {}",
                    a.zeta, a.theta_tilde
                ),
            ));
        }
        if !(a.tol >= 0.0) {
            return Err(invalid(
                "algorithm.tol",
                format!("must be nonnegative, got {}", a.tol),
            ));
        }
        if a.m0 < 1 {
            return Err(invalid("algorithm.m0", "must be at least 1"));
        }
        if let Some(m) = self.verification.m_ref {
            if m < a.m0 {
                return Err(invalid(
                    "verification.m_ref",
                    format!("must be at least m0 = {}", a.m0),
                ));
            }
        }
        if let Some(radii) = &self.verification.uniform_radii {
            if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(
                    "verification.uniform_radii",
                    "must be nonempty and strictly ascending",
                ));
            }
        }
        Ok(())
    }

    /// Adaptive-loop parameters for `mode`.
    pub fn adaptive(&self, mode: LoopMode) -> AdaptiveConfig {
        let a = &self.algorithm;
        AdaptiveConfig {
            dim: self.problem.dim,
            theta_tilde: a.theta_tilde,
            zeta: a.zeta,
            tol: a.tol,
            m0: a.m0,
            k0: self.problem.k0,
            n_eigs: self.problem.n_eigs,
            max_iter: a.max_iter,
            max_dof: a.max_dof,
            mode,
            initial_truncation: a.initial_truncation,
            compute_exact: true,
        }
    }
}

/// Reads and validates a JSON config file.
pub fn ingest_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid("<file>", format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}
