//! Fourier coefficient fields on the torus `[0, 2π)^d`.
//!
//! Coefficients are stored in the orthonormal basis
//! `e_G(x) = (2π)^{-d/2} exp(i G·x)`, so the L² norm of a field is the plain
//! Euclidean norm of its coefficient vector. Products are exact finite
//! convolutions; the `(2π)^{-d/2}` factor that appears there lives only in
//! [`SpectralField::multiply`].

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::frequency::{FreqIndex, FrequencyError, IndexSet};
use crate::operator::Potential;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
    #[error("expected {expected} coefficients, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field flagged real violates conjugate symmetry at {0}")]
    NotHermitian(FreqIndex),
    #[error("support {0} is not contained in the target basis")]
    NotContained(FreqIndex),
}

/// `(2π)^{-d/2}`.
pub fn torus_factor(dim: usize) -> f64 {
    (2.0 * PI).powf(-(dim as f64) / 2.0)
}

/// Relative tolerance for the conjugate-symmetry check on real fields.
const HERMITIAN_RTOL: f64 = 1e-12;

/// Fourier coefficients of a function over a finite symmetric support.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    support: IndexSet,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl SpectralField {
    pub fn new(
        support: IndexSet,
        coeffs: Vec<Complex64>,
        real: bool,
    ) -> Result<Self, SpectralError> {
        if coeffs.len() != support.len() {
            return Err(SpectralError::LengthMismatch {
                expected: support.len(),
                got: coeffs.len(),
            });
        }
        let field = SpectralField {
            support,
            coeffs,
            real,
        };
        if real {
            field.check_hermitian()?;
        }
        Ok(field)
    }

    /// Builds a field from `(G, û_G)` pairs. Missing negated partners are
    /// filled with zero coefficients; repeated frequencies accumulate.
    pub fn from_coefficients(
        dim: usize,
        items: impl IntoIterator<Item = (FreqIndex, Complex64)>,
        real: bool,
    ) -> Result<Self, SpectralError> {
        let mut map: HashMap<FreqIndex, Complex64> = HashMap::new();
        for (g, c) in items {
            *map.entry(g).or_default() += c;
        }
        let support = IndexSet::from_pairs(dim, map.keys().copied())?;
        let coeffs = support
            .iter()
            .map(|g| map.get(g).copied().unwrap_or_default())
            .collect();
        Self::new(support, coeffs, real)
    }

    pub fn zeros(support: IndexSet) -> Self {
        let n = support.len();
        SpectralField {
            support,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
            real: true,
        }
    }

    /// The single planewave `e_G`.
    pub fn plane_wave(dim: usize, g: FreqIndex) -> Result<Self, SpectralError> {
        Self::from_coefficients(dim, [(g, Complex64::new(1.0, 0.0))], g.is_zero())
    }

    /// Coefficient vector over `support`, which must be listed in canonical order
    /// (as produced by [`IndexSet::entries`]).
    pub fn from_vector(
        support: IndexSet,
        coeffs: &[Complex64],
        real: bool,
    ) -> Result<Self, SpectralError> {
        Self::new(support, coeffs.to_vec(), real)
    }

    fn check_hermitian(&self) -> Result<(), SpectralError> {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (g, c) in self.support.iter().zip(&self.coeffs) {
            let partner = self.coeff(&-*g);
            if (partner - c.conj()).norm() > HERMITIAN_RTOL * scale {
                return Err(SpectralError::NotHermitian(*g));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn support(&self) -> &IndexSet {
        &self.support
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    /// `û_G`, zero off the support.
    pub fn coeff(&self, g: &FreqIndex) -> Complex64 {
        self.support
            .position(g)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FreqIndex, &Complex64)> {
        self.support.iter().zip(&self.coeffs)
    }

    /// `sqrt(Σ (1+|G|²)^s |û_G|²)`.
    pub fn hs_norm(&self, s: f64) -> f64 {
        self.iter()
            .map(|(g, c)| (1.0 + g.norm2() as f64).powf(s) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// L² projection onto the span of `{e_G : G ∈ set}` (coefficient truncation).
    pub fn project(&self, set: &IndexSet) -> Result<SpectralField, SpectralError> {
        let support = self.support.intersection(set)?;
        let coeffs = support.iter().map(|g| self.coeff(g)).collect();
        Ok(SpectralField {
            support,
            coeffs,
            real: self.real,
        })
    }

    /// Re-expresses the field over a superset of its support.
    pub fn embed(&self, basis: &IndexSet) -> Result<Vec<Complex64>, SpectralError> {
        let mut out = vec![Complex64::new(0.0, 0.0); basis.len()];
        for (g, c) in self.iter() {
            match basis.position(g) {
                Some(i) => out[i] = *c,
                None if c.norm() == 0.0 => {}
                None => return Err(SpectralError::NotContained(*g)),
            }
        }
        Ok(out)
    }

    /// Coefficients of the product `V·u` where `self` holds `V̂`:
    /// `(V u)^_G = (2π)^{-d/2} Σ_K V̂_K û_{G-K}` over the Minkowski sum of supports.
    pub fn multiply(&self, u: &SpectralField) -> Result<SpectralField, SpectralError> {
        let support = self.support.minkowski_sum(&u.support)?;
        let factor = torus_factor(self.dim());
        let mut coeffs = vec![Complex64::new(0.0, 0.0); support.len()];
        for (k, vk) in self.iter() {
            if vk.norm_sqr() == 0.0 {
                continue;
            }
            // Scaled first, the same way operator matrix entries are formed.
            let vk = vk * factor;
            for (j, uj) in u.iter() {
                // Every K + J lies in the Minkowski sum by construction.
                let pos = support.position(&(*k + *j)).expect("minkowski sum member");
                coeffs[pos] += vk * uj;
            }
        }
        Ok(SpectralField {
            support,
            coeffs,
            real: self.real && u.real,
        })
    }

    /// `a·self + b·other` over the union of supports.
    pub fn combine(
        &self,
        a: Complex64,
        other: &SpectralField,
        b: Complex64,
    ) -> Result<SpectralField, SpectralError> {
        let support = self.support.union(&other.support)?;
        let coeffs = support
            .iter()
            .map(|g| a * self.coeff(g) + b * other.coeff(g))
            .collect();
        Ok(SpectralField {
            support,
            coeffs,
            real: self.real && other.real && a.im == 0.0 && b.im == 0.0,
        })
    }

    pub fn scale(&self, a: Complex64) -> SpectralField {
        SpectralField {
            support: self.support.clone(),
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
            real: self.real && a.im == 0.0,
        }
    }

    /// Applies `-Δ`, i.e. multiplies each coefficient by `|G|²`.
    pub fn neg_laplacian(&self) -> SpectralField {
        SpectralField {
            support: self.support.clone(),
            coeffs: self.iter().map(|(g, c)| c * g.norm2() as f64).collect(),
            real: self.real,
        }
    }

    /// L² inner product `(self, other) = Σ conj(û_G) v̂_G`.
    pub fn inner(&self, other: &SpectralField) -> Complex64 {
        self.iter().map(|(g, c)| c.conj() * other.coeff(g)).sum()
    }

    /// Point value `Σ û_G e_G(x)`.
    pub fn evaluate_at(&self, x: &[f64]) -> Complex64 {
        let dim = self.dim();
        let factor = torus_factor(dim);
        self.iter()
            .map(|(g, c)| {
                let phase: f64 = g
                    .components(dim)
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| f64::from(gi) * xi)
                    .sum();
                c * Complex64::from_polar(factor, phase)
            })
            .sum()
    }

    /// Direct summation on the uniform grid `x_j = 2π j / n` per axis.
    /// Values are laid out with the first axis varying slowest.
    pub fn evaluate_on_grid(&self, points_per_axis: usize) -> Vec<Complex64> {
        assert!(
            points_per_axis >= 1,
            "grid needs at least one point per axis"
        );
        let dim = self.dim();
        let n = points_per_axis;
        let m = self.support.max_abs_component();
        let width = (2 * m + 1) as usize;
        // phase[j * width + (g + m)] = exp(i g x_j)
        let phase: Vec<Complex64> = (0..n)
            .flat_map(|j| {
                let x = 2.0 * PI * j as f64 / n as f64;
                (-m..=m).map(move |g| Complex64::from_polar(1.0, f64::from(g) * x))
            })
            .collect();
        let factor = torus_factor(dim);
        let total = n.pow(dim as u32);
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut acc = Complex64::new(0.0, 0.0);
            for (g, c) in self.iter() {
                let mut e = *c;
                for (axis, &gi) in g.components(dim).iter().enumerate() {
                    e *= phase[idx[axis] * width + (gi + m) as usize];
                }
                acc += e;
            }
            out.push(acc * factor);
            for axis in (0..dim).rev() {
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
            }
        }
        out
    }
}

/// Energy inner product `a(u, v) = (∇u, ∇v) + (V u, v)`, conjugate-linear in `u`.
pub fn a_inner(
    u: &SpectralField,
    v: &SpectralField,
    potential: &Potential,
) -> Result<Complex64, SpectralError> {
    let grad: Complex64 = u
        .iter()
        .map(|(g, c)| c.conj() * v.coeff(g) * g.norm2() as f64)
        .sum();
    let vu = potential.field().multiply(u)?;
    Ok(grad + vu.inner(v))
}
