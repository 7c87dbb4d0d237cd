//! Dense eigensolve of the Galerkin matrix.
//!
//! `L` commutes with complex conjugation, so in the real basis
//! `{e_0, (e_G + e_{-G})/√2, -i(e_G - e_{-G})/√2}` its matrix is real
//! symmetric. Solving there gives eigenvectors whose planewave coefficients
//! satisfy `û_{-G} = conj(û_G)` exactly, including inside degenerate groups.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{Hamiltonian, OperatorError};
use crate::frequency::IndexSet;
use crate::spectral::SpectralField;

/// Relative eigenvalue gap below which eigenpairs are treated as one degenerate group.
pub const DEGENERACY_RTOL: f64 = 1e-9;

/// Relative gap below which the cluster boundary is reported as unresolved.
pub const BOUNDARY_GAP_RTOL: f64 = 1e-8;

/// Eigenpairs `k0+1 ..= k0+N` of the discrete problem on one index set.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCluster {
    pub basis: IndexSet,
    pub k0: usize,
    /// Ascending, multiplicities repeated.
    pub eigenvalues: Vec<f64>,
    /// L²-orthonormal coefficient vectors over `basis`.
    pub vectors: Vec<Vec<Complex64>>,
    /// `λ_{k0}` when it exists.
    pub below: Option<f64>,
    /// `λ_{k0+N+1}` when it exists.
    pub above: Option<f64>,
}

impl EigenCluster {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenfunction `l` (0-based within the cluster) as a real field.
    pub fn field(&self, l: usize) -> SpectralField {
        SpectralField::new(self.basis.clone(), self.vectors[l].clone(), true)
            .expect("eigenvectors are conjugate-symmetric by construction")
    }

    pub fn fields(&self) -> Vec<SpectralField> {
        (0..self.len()).map(|l| self.field(l)).collect()
    }

    /// `λ_{k0+N+1} - λ_{k0+N}` and `λ_{k0+1} - λ_{k0}` where defined.
    pub fn boundary_gaps(&self) -> (Option<f64>, Option<f64>) {
        let first = self.eigenvalues.first().copied();
        let last = self.eigenvalues.last().copied();
        (
            self.below.zip(first).map(|(b, f)| f - b),
            self.above.zip(last).map(|(a, l)| a - l),
        )
    }

    /// True when either boundary gap is below `BOUNDARY_GAP_RTOL` relative.
    pub fn boundary_unresolved(&self) -> bool {
        let scale = self.eigenvalues.iter().fold(1.0f64, |m, l| m.max(l.abs()));
        let (lo, hi) = self.boundary_gaps();
        [lo, hi]
            .into_iter()
            .flatten()
            .any(|gap| gap < BOUNDARY_GAP_RTOL * scale)
    }
}

/// Real orthonormal basis functions, each given by its planewave coefficients.
/// Pair columns keep unit coefficients and carry the `1/√2` separately so
/// that products of two normalizations are exactly `1/2`.
struct RealBasis {
    columns: Vec<Vec<(usize, Complex64)>>,
    paired: Vec<bool>,
}

impl RealBasis {
    fn new(basis: &IndexSet) -> Self {
        let mut columns = Vec::with_capacity(basis.len());
        let mut paired = Vec::with_capacity(basis.len());
        for g in basis.pair_representatives() {
            let p = basis.position(&g).expect("representative in basis");
            if g.is_zero() {
                columns.push(vec![(p, Complex64::new(1.0, 0.0))]);
                paired.push(false);
                continue;
            }
            let m = basis.position(&-g).expect("basis is symmetric");
            columns.push(vec![
                (p, Complex64::new(1.0, 0.0)),
                (m, Complex64::new(1.0, 0.0)),
            ]);
            columns.push(vec![
                (p, Complex64::new(0.0, -1.0)),
                (m, Complex64::new(0.0, 1.0)),
            ]);
            paired.extend([true, true]);
        }
        RealBasis { columns, paired }
    }

    fn project(&self, h: &DMatrix<Complex64>) -> DMatrix<f64> {
        let n = self.columns.len();
        DMatrix::from_fn(n, n, |i, j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(a, qa) in &self.columns[i] {
                for &(b, qb) in &self.columns[j] {
                    acc += qa.conj() * h[(a, b)] * qb;
                }
            }
            acc.re
                * match (self.paired[i], self.paired[j]) {
                    (true, true) => 0.5,
                    (false, false) => 1.0,
                    _ => FRAC_1_SQRT_2,
                }
        })
    }

    fn lift(&self, y: &[f64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for ((col, &pair), &yc) in self.columns.iter().zip(&self.paired).zip(y) {
            let w = if pair { FRAC_1_SQRT_2 * yc } else { yc };
            for &(a, q) in col {
                out[a] += q * w;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full dense eigendecomposition; returns eigenpairs `k0+1 ..= k0+n_eigs`.
///
/// Eigenvalues are refined as Rayleigh quotients of the returned vectors, so
/// `λ_l = u_l^H H u_l` holds to round-off. Within numerically degenerate
/// groups vectors are re-orthonormalized; each vector's largest component
/// (first in basis order on ties) is made real positive in the real basis.
pub fn solve_eigen(
    h: &Hamiltonian,
    k0: usize,
    n_eigs: usize,
) -> Result<EigenCluster, OperatorError> {
    let dim = h.dim();
    if n_eigs == 0 {
        return Err(OperatorError::EmptyCluster);
    }
    if k0 + n_eigs > dim {
        return Err(OperatorError::IndicesOutOfRange {
            first: k0 + 1,
            last: k0 + n_eigs,
            dim,
        });
    }
    let real_basis = RealBasis::new(h.basis());
    let a = real_basis.project(h.matrix());
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let mut vecs: Vec<Vec<f64>> = order[k0..k0 + n_eigs]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let cluster_values = &values[k0..k0 + n_eigs];
    let scale = cluster_values.iter().fold(1.0f64, |m, l| m.max(l.abs()));

    // Modified Gram-Schmidt inside each degenerate group.
    let mut start = 0;
    while start < n_eigs {
        let mut end = start + 1;
        while end < n_eigs
            && cluster_values[end] - cluster_values[end - 1] < DEGENERACY_RTOL * scale
        {
            end += 1;
        }
        for i in start..end {
            for j in start..i {
                let (head, tail) = vecs.split_at_mut(i);
                let proj = dot(&head[j], &tail[0]);
                for (t, h) in tail[0].iter_mut().zip(&head[j]) {
                    *t -= proj * h;
                }
            }
            let norm = dot(&vecs[i], &vecs[i]).sqrt();
            vecs[i].iter_mut().for_each(|x| *x /= norm);
        }
        start = end;
    }

    for v in &mut vecs {
        let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, x)| {
            if x.abs() > bv {
                (i, x.abs())
            } else {
                (bi, bv)
            }
        });
        if v[imax] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = vecs
        .into_iter()
        .map(|y| {
            let ay = &a * nalgebra::DVector::from_column_slice(&y);
            (dot(&y, ay.as_slice()), y)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));

    Ok(EigenCluster {
        basis: h.basis().clone(),
        k0,
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        vectors: pairs.iter().map(|p| real_basis.lift(&p.1, dim)).collect(),
        below: k0.checked_sub(1).map(|i| values[i]),
        above: values.get(k0 + n_eigs).copied(),
    })
}
