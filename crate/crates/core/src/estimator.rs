//! Residuals and a posteriori estimators.
//!
//! For an approximate eigenpair `(λ, u)` the residual is
//! `r = λu + Δu - Vu`, and the estimator restricted to a frequency set `S` is
//! `η(u; S)² = Σ_{G∈S} |r̂_G|² / (1 + |G|²)`, the squared `H⁻¹` norm of the
//! projected residual. Because `V` has finite support, `r` has finite support
//! and `η` over all of `Z^d` is an exact finite sum.
//!
//! The feasible estimator replaces `V` by its projection onto a ball `G^M`.
//! The discarded part is bounded by Young's inequality,
//! `‖(V - Π_M V) u‖_{H⁻¹} <= ‖(V - Π_M V) u‖_{L²} <= (2π)^{-d/2} Σ_{|K|>M} |V̂_K| ‖u‖_{L²}`,
//! which is the certified `truncation_bound` carried by each [`Residual`].

use num_complex::Complex64;
use thiserror::Error;

use crate::frequency::{FreqIndex, IndexSet};
use crate::operator::Potential;
use crate::spectral::{torus_factor, SpectralError, SpectralField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("zeta must lie in [0, 1), got {0}")]
    BadZeta(f64),
    #[error("mismatched cluster: {fields} fields but {lambdas} eigenvalues")]
    ClusterMismatch { fields: usize, lambdas: usize },
    #[error("truncation bound {bound} not certified at full potential support")]
    TruncationNotCertified { bound: f64 },
}

/// A computed residual with its per-frequency `H⁻¹` contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    field: SpectralField,
    truncation_bound: f64,
    contributions: Vec<f64>,
}

impl Residual {
    fn new(field: SpectralField, truncation_bound: f64) -> Self {
        let contributions = field
            .iter()
            .map(|(g, c)| c.norm_sqr() / (1.0 + g.norm2() as f64))
            .collect();
        Residual {
            field,
            truncation_bound,
            contributions,
        }
    }

    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    /// Certified bound on the `H⁻¹` norm of the part dropped by truncation.
    pub fn truncation_bound(&self) -> f64 {
        self.truncation_bound
    }

    /// `|r̂_G|² / (1 + |G|²)` aligned with `field().support()`.
    pub fn contributions(&self) -> &[f64] {
        &self.contributions
    }

    pub fn contribution(&self, g: &FreqIndex) -> f64 {
        self.field
            .support()
            .position(g)
            .map_or(0.0, |i| self.contributions[i])
    }

    /// `max_{G ∈ set} |r̂_G| / max_G |r̂_G|`, or 0 for a zero residual.
    pub fn galerkin_ratio(&self, set: &IndexSet) -> f64 {
        let all = self.field.max_abs();
        if all == 0.0 {
            return 0.0;
        }
        let on_set = self
            .field
            .iter()
            .filter(|(g, _)| set.contains(g))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        on_set / all
    }
}

/// `η(r; subset)`; `None` sums over the whole (finite) residual support.
pub fn eta(r: &Residual, subset: Option<&IndexSet>) -> f64 {
    eta_sq(r, subset).sqrt()
}

fn eta_sq(r: &Residual, subset: Option<&IndexSet>) -> f64 {
    match subset {
        None => r.contributions.iter().sum(),
        Some(set) => r
            .field
            .support()
            .iter()
            .zip(&r.contributions)
            .filter(|(g, _)| set.contains(g))
            .map(|(_, c)| c)
            .sum(),
    }
}

/// Root-sum-square of the member estimators.
pub fn eta_cluster(rs: &[Residual], subset: Option<&IndexSet>) -> f64 {
    rs.iter().map(|r| eta_sq(r, subset)).sum::<f64>().sqrt()
}

fn eigen_residual(
    u: &SpectralField,
    lambda: f64,
    v_hat: &SpectralField,
    bound: f64,
) -> Result<Residual, EstimatorError> {
    let vu = v_hat.multiply(u)?;
    let diag = u.scale(Complex64::new(lambda, 0.0)).combine(
        Complex64::new(1.0, 0.0),
        &u.neg_laplacian(),
        Complex64::new(-1.0, 0.0),
    )?;
    let field = diag.combine(Complex64::new(1.0, 0.0), &vu, Complex64::new(-1.0, 0.0))?;
    Ok(Residual::new(field, bound))
}

/// Exact residual `λu + Δu - Vu` over the Minkowski sum of the supports.
pub fn residual(
    u: &SpectralField,
    lambda: f64,
    potential: &Potential,
) -> Result<Residual, EstimatorError> {
    eigen_residual(u, lambda, potential.field(), 0.0)
}

/// Residual with `V` replaced by `Π_{G^M} V`, carrying the certified bound on
/// the `H⁻¹` norm of the difference to the exact residual.
pub fn truncated_residual(
    u: &SpectralField,
    lambda: f64,
    potential: &Potential,
    radius: u32,
) -> Result<Residual, EstimatorError> {
    let bound = torus_factor(potential.dim()) * potential.tail_l1(radius) * u.l2_norm();
    eigen_residual(u, lambda, &potential.truncated(radius), bound)
}

/// Source-problem residual `f - (-Δ + V) w`.
pub fn source_residual(
    w: &SpectralField,
    f: &SpectralField,
    potential: &Potential,
) -> Result<Residual, EstimatorError> {
    let lw = w.neg_laplacian().combine(
        Complex64::new(1.0, 0.0),
        &potential.field().multiply(w)?,
        Complex64::new(1.0, 0.0),
    )?;
    let field = f.combine(Complex64::new(1.0, 0.0), &lw, Complex64::new(-1.0, 0.0))?;
    Ok(Residual::new(field, 0.0))
}

/// Estimator of a whole cluster relative to the current index set.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorValue {
    /// `η(U)` (or `η̃(U)` for truncated residuals).
    pub total: f64,
    /// Summed contribution of each `±G` pair outside the current set, over
    /// all cluster members, keyed by the pair representative in canonical order.
    pub per_pair: Vec<(FreqIndex, f64)>,
    /// Contribution of frequencies inside the current set (round-off for exact residuals).
    pub on_set: f64,
    /// `rss(truncation bounds) / total`; zero for exact residuals.
    pub zeta_actual: f64,
}

impl EstimatorValue {
    pub fn total_sq(&self) -> f64 {
        self.total * self.total
    }
}

pub fn estimate(rs: &[Residual], current: &IndexSet) -> EstimatorValue {
    let mut pairs: std::collections::BTreeMap<FreqIndex, f64> = std::collections::BTreeMap::new();
    let mut on_set = 0.0;
    let mut total_sq = 0.0;
    for r in rs {
        for (g, c) in r.field.support().iter().zip(&r.contributions) {
            total_sq += c;
            if current.contains(g) {
                on_set += c;
            } else {
                *pairs.entry(g.pair_representative()).or_insert(0.0) += c;
            }
        }
    }
    let total = total_sq.sqrt();
    let bound = aggregated_bound(rs);
    let zeta_actual = if bound == 0.0 {
        0.0
    } else if total == 0.0 {
        f64::INFINITY
    } else {
        bound / total
    };
    EstimatorValue {
        total,
        per_pair: pairs.into_iter().collect(),
        on_set,
        zeta_actual,
    }
}

/// Root-sum-square of the members' truncation bounds.
pub fn aggregated_bound(rs: &[Residual]) -> f64 {
    rs.iter()
        .map(|r| r.truncation_bound * r.truncation_bound)
        .sum::<f64>()
        .sqrt()
}

/// Outcome of the truncation search.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationChoice {
    /// Radius `M` of the potential ball used.
    pub radius: u32,
    pub residuals: Vec<Residual>,
    /// `η̃(U)`.
    pub eta_tilde: f64,
    /// Aggregated certified bound on `‖r̃ - r‖_{H⁻¹}`.
    pub bound: f64,
}

/// Doubles `M` from `start_radius` until the certified truncation error is at
/// most `zeta · η̃(U)`. Terminates at the full support radius of `V`, where
/// the truncated residual is exact.
pub fn choose_truncation(
    fields: &[SpectralField],
    lambdas: &[f64],
    potential: &Potential,
    zeta: f64,
    start_radius: u32,
) -> Result<TruncationChoice, EstimatorError> {
    if !(0.0..1.0).contains(&zeta) {
        return Err(EstimatorError::BadZeta(zeta));
    }
    if fields.len() != lambdas.len() {
        return Err(EstimatorError::ClusterMismatch {
            fields: fields.len(),
            lambdas: lambdas.len(),
        });
    }
    let full = potential.support_radius();
    let mut radius = start_radius.min(full);
    loop {
        let residuals = fields
            .iter()
            .zip(lambdas)
            .map(|(u, &l)| truncated_residual(u, l, potential, radius))
            .collect::<Result<Vec<_>, _>>()?;
        let eta_tilde = eta_cluster(&residuals, None);
        let bound = aggregated_bound(&residuals);
        if bound <= zeta * eta_tilde {
            return Ok(TruncationChoice {
                radius,
                residuals,
                eta_tilde,
                bound,
            });
        }
        if radius >= full {
            return Err(EstimatorError::TruncationNotCertified { bound });
        }
        radius = (2 * radius).max(1).min(full);
    }
}
