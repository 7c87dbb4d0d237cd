//! Galerkin discretization of `L = -Δ + V` on a planewave space `V_G`.
//!
//! The planewave basis is L²-orthonormal, so the mass matrix is the identity
//! and the discrete eigenproblem is a standard Hermitian one.

mod eigen;
mod potential;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::frequency::{FrequencyError, IndexSet};
use crate::spectral::{torus_factor, SpectralError, SpectralField};

pub use eigen::{solve_eigen, EigenCluster};
pub use potential::Potential;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("potential must be real (conjugate-symmetric coefficients)")]
    ComplexPotential,
    #[error("potential must be nonnegative with positive mean (sampled minimum {min})")]
    NonPositivePotential { min: f64 },
    #[error("requested eigenvalues {first}..={last} but the space has dimension {dim}")]
    IndicesOutOfRange {
        first: usize,
        last: usize,
        dim: usize,
    },
    #[error("requested an empty eigenvalue cluster")]
    EmptyCluster,
    #[error("Galerkin matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Matrix of `a(·,·)` in the planewave basis of `basis`:
/// `H[G, G'] = |G|² δ_{GG'} + (2π)^{-d/2} V̂_{G-G'}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    basis: IndexSet,
    matrix: DMatrix<Complex64>,
}

impl Hamiltonian {
    pub fn basis(&self) -> &IndexSet {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `H x` for a coefficient vector over the basis.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.matrix * v).as_slice().to_vec()
    }

    /// `x^H H y`.
    pub fn energy_inner(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let hy = self.apply(y);
        x.iter().zip(&hy).map(|(a, b)| a.conj() * b).sum()
    }
}

pub fn assemble(basis: &IndexSet, potential: &Potential) -> Result<Hamiltonian, OperatorError> {
    if basis.dim() != potential.dim() {
        return Err(FrequencyError::DimensionMismatch {
            left: basis.dim(),
            right: potential.dim(),
        }
        .into());
    }
    let n = basis.len();
    let factor = torus_factor(basis.dim());
    let mut matrix = DMatrix::<Complex64>::zeros(n, n);
    for (j, gp) in basis.iter().enumerate() {
        matrix[(j, j)] += Complex64::new(gp.norm2() as f64, 0.0);
        for (k, vk) in potential.field().iter() {
            if let Some(i) = basis.position(&(*gp + *k)) {
                matrix[(i, j)] += vk * factor;
            }
        }
    }
    Ok(Hamiltonian {
        basis: basis.clone(),
        matrix,
    })
}

/// Galerkin solutions of `a(u, v) = (f, v)` for all `v ∈ V_G`, one per right-hand side.
pub fn solve_source(
    basis: &IndexSet,
    potential: &Potential,
    rhs: &[SpectralField],
) -> Result<Vec<SpectralField>, OperatorError> {
    if basis.is_empty() {
        return Ok(rhs
            .iter()
            .map(|_| SpectralField::zeros(basis.clone()))
            .collect());
    }
    let h = assemble(basis, potential)?;
    let chol = h
        .matrix
        .clone()
        .cholesky()
        .ok_or(OperatorError::NotPositiveDefinite)?;
    rhs.iter()
        .map(|f| {
            let b = f.project(basis)?.embed(basis)?;
            let x = chol
                .solve(&nalgebra::DVector::from_vec(b))
                .as_slice()
                .to_vec();
            // A real right-hand side has a real solution up to round-off.
            let u = match SpectralField::new(basis.clone(), x.clone(), f.is_real()) {
                Ok(u) => u,
                Err(_) => SpectralField::new(basis.clone(), x, false)?,
            };
            Ok(u)
        })
        .collect()
}
