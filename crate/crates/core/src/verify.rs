//! Reference solutions, energy-norm eigenspace distances and rate fits.
//!
//! The distance between subspaces `X` and `Y` of equal dimension is
//! `max(d(X,Y), d(Y,X))` with `d(X,Y) = sup_{u∈X, ‖u‖_a=1} inf_{v∈Y} ‖u-v‖_a`.
//! After a-orthonormalizing both bases, `d(X,Y)² = λ_max(W^H H W)` with
//! `W = X - Y (Y^H H X)`, the a-orthogonal defect of `X` against `Y`.
//! This equals `sqrt(1 - σ_min²)` of the cross-Gram matrix but keeps full
//! relative accuracy when the distance is small.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::adapt::IterationRecord;
use crate::frequency::{FrequencyError, IndexSet};
use crate::operator::{assemble, solve_eigen, EigenCluster, Hamiltonian, OperatorError, Potential};
use crate::spectral::SpectralField;

/// Relative gap separating eigenvalue groups inside a cluster.
pub const GROUP_RTOL: f64 = 1e-6;
/// Relative boundary gap below which the cluster assumption is reported violated.
pub const GAP_RTOL: f64 = 1e-8;
/// Largest accepted condition number of a basis Gram matrix.
pub const GRAM_COND_MAX: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
    #[error("basis is numerically rank deficient (Gram condition {cond:e})")]
    RankDeficient { cond: f64 },
    #[error("subspace dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vectors do not match the reference basis length")]
    BadLength,
    #[error("approximation space is not contained in the reference ball")]
    NotContained,
    #[error("need at least {need} data points for a rate fit, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("errors and records have different lengths")]
    LengthMismatch,
}

/// Eigenvalue groups: maximal runs with consecutive relative gaps below `rtol`.
pub fn eigen_groups(values: &[f64], rtol: f64) -> Vec<Range<usize>> {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > rtol * scale {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub radius: u32,
    pub cluster: EigenCluster,
    pub hamiltonian: Hamiltonian,
    /// `λ_{k0+N+1} - λ_{k0+N}`.
    pub tail_gap: Option<f64>,
    /// `λ_{k0+1} - λ_{k0}`.
    pub head_gap: Option<f64>,
    pub groups: Vec<Range<usize>>,
}

/// Dense solve on `ball(m_ref, d)`.
pub fn reference_solve(
    potential: &Potential,
    k0: usize,
    n_eigs: usize,
    m_ref: u32,
) -> Result<ReferenceSolution, VerifyError> {
    let basis = IndexSet::ball(m_ref, potential.dim())?;
    let hamiltonian = assemble(&basis, potential)?;
    let cluster = solve_eigen(&hamiltonian, k0, n_eigs)?;
    let (head_gap, tail_gap) = cluster.boundary_gaps();
    let groups = eigen_groups(&cluster.eigenvalues, GROUP_RTOL);
    let reference = ReferenceSolution {
        radius: m_ref,
        cluster,
        hamiltonian,
        tail_gap,
        head_gap,
        groups,
    };
    if !eigenvalue_gap_check(&reference).ok {
        log::warn!(
            "reference cluster at M_ref = {m_ref} is not separated from the rest of the spectrum"
        );
    }
    Ok(reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCheck {
    pub ok: bool,
    pub head_gap: Option<f64>,
    pub tail_gap: Option<f64>,
}

pub fn eigenvalue_gap_check(reference: &ReferenceSolution) -> GapCheck {
    let scale = reference
        .cluster
        .eigenvalues
        .iter()
        .fold(1.0f64, |m, l| m.max(l.abs()));
    let ok = [reference.head_gap, reference.tail_gap]
        .into_iter()
        .flatten()
        .all(|g| g > GAP_RTOL * scale);
    GapCheck {
        ok,
        head_gap: reference.head_gap,
        tail_gap: reference.tail_gap,
    }
}

/// Per-group and root-sum-square eigenspace distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDistance {
    pub total: f64,
    pub per_group: Vec<f64>,
}

impl ReferenceSolution {
    pub fn basis(&self) -> &IndexSet {
        &self.cluster.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.cluster.eigenvalues
    }

    /// Largest eigenvalue change when the cutoff is doubled.
    pub fn self_consistency(&self, potential: &Potential) -> Result<f64, VerifyError> {
        let wide = reference_solve(
            potential,
            self.cluster.k0,
            self.cluster.len(),
            2 * self.radius,
        )?;
        Ok(self
            .eigenvalues()
            .iter()
            .zip(wide.eigenvalues())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Zero-pads coefficient vectors over `basis` to the reference ball.
    pub fn embed(
        &self,
        basis: &IndexSet,
        vectors: &[Vec<Complex64>],
    ) -> Result<Vec<Vec<Complex64>>, VerifyError> {
        let positions = basis
            .iter()
            .map(|g| self.basis().position(g).ok_or(VerifyError::NotContained))
            .collect::<Result<Vec<_>, _>>()?;
        let n = self.basis().len();
        vectors
            .iter()
            .map(|v| {
                if v.len() != positions.len() {
                    return Err(VerifyError::BadLength);
                }
                let mut out = vec![Complex64::new(0.0, 0.0); n];
                for (&p, &c) in positions.iter().zip(v) {
                    out[p] = c;
                }
                Ok(out)
            })
            .collect()
    }

    pub fn embed_field(&self, u: &SpectralField) -> Result<Vec<Complex64>, VerifyError> {
        Ok(self.embed(u.support(), &[u.coeffs().to_vec()])?.remove(0))
    }

    /// Eigenspace distance of a discrete cluster, group by group.
    pub fn distance(&self, cluster: &EigenCluster) -> Result<ClusterDistance, VerifyError> {
        if cluster.len() != self.cluster.len() {
            return Err(VerifyError::DimensionMismatch {
                left: self.cluster.len(),
                right: cluster.len(),
            });
        }
        let embedded = self.embed(&cluster.basis, &cluster.vectors)?;
        let per_group = self
            .groups
            .iter()
            .map(|r| {
                subspace_distance(
                    &self.hamiltonian,
                    &self.cluster.vectors[r.clone()],
                    &embedded[r.clone()],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ClusterDistance {
            total: per_group.iter().map(|d| d * d).sum::<f64>().sqrt(),
            per_group,
        })
    }

    /// `λ_{G,l} - λ_l` for every cluster member, evaluated through
    /// `λ_w - λ = ‖w - u‖²_a - λ ‖w - u‖²` with `u` the normalized projection of
    /// `w` onto the reference group of `l`. Direct subtraction loses all
    /// digits once the error falls to the level of `ε λ`.
    pub fn eigenvalue_errors(&self, cluster: &EigenCluster) -> Result<Vec<f64>, VerifyError> {
        if cluster.len() != self.cluster.len() {
            return Err(VerifyError::DimensionMismatch {
                left: self.cluster.len(),
                right: cluster.len(),
            });
        }
        let embedded = self.embed(&cluster.basis, &cluster.vectors)?;
        let mut errors = vec![0.0; cluster.len()];
        for group in &self.groups {
            let refs = &self.cluster.vectors[group.clone()];
            for l in group.clone() {
                let w = &embedded[l];
                let mut u = vec![Complex64::new(0.0, 0.0); w.len()];
                for r in refs {
                    let c = dot(r, w);
                    for (ui, ri) in u.iter_mut().zip(r) {
                        *ui += ri * c;
                    }
                }
                let norm = dot(&u, &u).re.sqrt();
                let e: Vec<Complex64> = w.iter().zip(&u).map(|(wi, ui)| wi - ui / norm).collect();
                let lambda = self.cluster.eigenvalues[l];
                errors[l] = self.hamiltonian.energy_inner(&e, &e).re - lambda * dot(&e, &e).re;
            }
        }
        Ok(errors)
    }

    /// `‖u_ref - u‖_a` over the reference ball.
    pub fn energy_error(&self, u_ref: &[Complex64], u: &SpectralField) -> Result<f64, VerifyError> {
        let w = self.embed_field(u)?;
        let e: Vec<Complex64> = u_ref.iter().zip(&w).map(|(a, b)| a - b).collect();
        Ok(self.hamiltonian.energy_inner(&e, &e).re.max(0.0).sqrt())
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn to_matrix(vectors: &[Vec<Complex64>]) -> DMatrix<Complex64> {
    let n = vectors.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, vectors.len(), |i, j| vectors[j][i])
}

/// `X L^{-H}` where `X^H H X = L L^H`.
fn a_orthonormalize(
    h: &DMatrix<Complex64>,
    x: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>, VerifyError> {
    let gram = x.adjoint() * h * x;
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > GRAM_COND_MAX {
        return Err(VerifyError::RankDeficient {
            cond: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    let l = gram
        .cholesky()
        .ok_or(VerifyError::RankDeficient { cond: max / min })?
        .unpack();
    let inv = l
        .adjoint()
        .try_inverse()
        .ok_or(VerifyError::RankDeficient { cond: max / min })?;
    Ok(x * inv)
}

fn directed(h: &DMatrix<Complex64>, x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> f64 {
    let w = x - y * (y.adjoint() * h * x);
    let m = w.adjoint() * h * &w;
    SymmetricEigen::new(m).eigenvalues.max().max(0.0).sqrt()
}

/// Energy-norm distance between `span X` and `span Y`, both given over the
/// basis of `h`. Lies in `[0, 1]` and is symmetric when the dimensions agree.
pub fn subspace_distance(
    h: &Hamiltonian,
    x: &[Vec<Complex64>],
    y: &[Vec<Complex64>],
) -> Result<f64, VerifyError> {
    if x.len() != y.len() {
        return Err(VerifyError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    if x.iter().chain(y).any(|v| v.len() != h.dim()) {
        return Err(VerifyError::BadLength);
    }
    let hm = h.matrix();
    let xa = a_orthonormalize(hm, &to_matrix(x))?;
    let ya = a_orthonormalize(hm, &to_matrix(y))?;
    let d_xy = directed(hm, &xa, &ya);
    let d_yx = directed(hm, &ya, &xa);
    Ok(d_xy.max(d_yx).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares; `r² = 1` when the data have no spread to explain.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    /// `|G_n| - |G_0|`.
    pub dof_delta: usize,
    pub error: f64,
}

pub fn rate_points(
    records: &[IterationRecord],
    errors: &[f64],
) -> Result<Vec<RatePoint>, VerifyError> {
    if records.len() != errors.len() {
        return Err(VerifyError::LengthMismatch);
    }
    Ok(records
        .iter()
        .zip(errors)
        .map(|(r, &error)| RatePoint {
            n: r.n,
            dof_delta: r.dof_delta,
            error,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Per-iteration contraction `exp(slope)` of `log error` against `n`.
    pub alpha_hat: f64,
    pub alpha_r_squared: f64,
    /// Minus the slope of `log error` against `log(|G_n| - |G_0|)`.
    pub s_hat: Option<f64>,
    pub s_r_squared: Option<f64>,
    pub contracting: bool,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateOutcome {
    Fit(RateFit),
    /// Some error is exactly zero: the discrete solution is exact.
    Exact,
}

/// Minimum number of points (after skipping) for a rate fit.
pub const MIN_FIT_POINTS: usize = 4;

/// Least-squares rate fits, ignoring the first `skip` points.
pub fn fit_rates(points: &[RatePoint], skip: usize) -> Result<RateOutcome, VerifyError> {
    let pts = points.get(skip..).unwrap_or(&[]);
    if pts.iter().any(|p| p.error <= 0.0) {
        return Ok(RateOutcome::Exact);
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(VerifyError::TooFewPoints {
            got: pts.len(),
            need: MIN_FIT_POINTS,
        });
    }
    let ns: Vec<f64> = pts.iter().map(|p| p.n as f64).collect();
    let logs: Vec<f64> = pts.iter().map(|p| p.error.ln()).collect();
    let alpha = linear_fit(&ns, &logs).ok_or(VerifyError::TooFewPoints {
        got: pts.len(),
        need: MIN_FIT_POINTS,
    })?;
    let (dx, dy): (Vec<f64>, Vec<f64>) = pts
        .iter()
        .filter(|p| p.dof_delta > 0)
        .map(|p| ((p.dof_delta as f64).ln(), p.error.ln()))
        .unzip();
    let s = linear_fit(&dx, &dy);
    let alpha_hat = alpha.slope.exp();
    Ok(RateOutcome::Fit(RateFit {
        alpha_hat,
        alpha_r_squared: alpha.r_squared,
        s_hat: s.map(|f| -f.slope),
        s_r_squared: s.map(|f| f.r_squared),
        contracting: alpha_hat < 1.0 - 1e-12,
        points: pts.len(),
    }))
}
