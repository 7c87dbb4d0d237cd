use std::f64::consts::PI;

use num_complex::Complex64;

use super::OperatorError;
use crate::frequency::{FreqIndex, IndexSet};
use crate::spectral::SpectralField;

/// Relative safety margin subtracted from the sampled minimum.
const BOUND_MARGIN: f64 = 1e-12;

/// A real, finitely supported, nonnegative potential `V` with positive mean,
/// together with its sampled bounds `ν_* <= V <= ν^*`.
///
/// When `ν_* > 0` the energy-norm equivalence constant is `α_* = min(ν_*, 1)`.
/// A potential that touches zero (for example `1 + cos x`) still gives a
/// coercive operator; `α_*` is then the smallest generalized eigenvalue of
/// `a(v, v) = μ ‖v‖²_{H¹}` on a ball of frequencies well past the support.
#[derive(Debug, Clone)]
pub struct Potential {
    field: SpectralField,
    nu_lower: f64,
    nu_upper: f64,
    alpha_lower: f64,
    l1_total: f64,
    grid_points: usize,
}

impl Potential {
    /// Verifies positivity by sampling on a uniform grid with
    /// `4 (max|K_i| + 1)` points per axis.
    pub fn new(field: SpectralField) -> Result<Self, OperatorError> {
        if !field.is_real() {
            return Err(OperatorError::ComplexPotential);
        }
        if field.support().is_empty() {
            return Err(OperatorError::NonPositivePotential { min: 0.0 });
        }
        let grid_points = 4 * (field.support().max_abs_component() as usize + 1);
        let values = field.evaluate_on_grid(grid_points);
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.re), hi.max(v.re))
            });
        let scale = min.abs().max(max.abs());
        let mean = crate::spectral::torus_factor(field.dim()) * field.coeff(&FreqIndex::ZERO).re;
        if min < -BOUND_MARGIN * scale || !(mean > 0.0) {
            return Err(OperatorError::NonPositivePotential { min });
        }
        let nu_lower = (min - BOUND_MARGIN * scale).max(0.0);
        let nu_upper = max + BOUND_MARGIN * scale;
        let l1_total = field.coeffs().iter().map(|c| c.norm()).sum();
        let mut potential = Potential {
            field,
            nu_lower,
            nu_upper,
            alpha_lower: nu_lower.min(1.0),
            l1_total,
            grid_points,
        };
        if nu_lower == 0.0 {
            potential.alpha_lower = potential.energy_equivalence_lower();
        }
        Ok(potential)
    }

    /// `min a(v,v) / ‖v‖²_{H¹}` over a ball of radius `max(8, 4(R+1))`.
    fn energy_equivalence_lower(&self) -> f64 {
        let radius = (4 * (self.support_radius() + 1)).max(8);
        let dim = self.dim();
        // Keep the dense solve small in higher dimensions.
        let radius = match dim {
            1 => radius,
            2 => radius.min(12),
            _ => radius.min(5),
        };
        let ball = IndexSet::ball(radius, dim).expect("dimension already validated");
        let h = super::assemble(&ball, self).expect("dimensions match");
        let weights: Vec<f64> = ball
            .iter()
            .map(|g| (1.0 + g.norm2() as f64).sqrt().recip())
            .collect();
        let n = ball.len();
        let scaled =
            nalgebra::DMatrix::from_fn(n, n, |i, j| h.matrix()[(i, j)] * weights[i] * weights[j]);
        let eig = nalgebra::SymmetricEigen::new(scaled);
        eig.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .min(1.0)
    }

    /// `V ≡ value` in dimension `dim`.
    pub fn constant(dim: usize, value: f64) -> Result<Self, OperatorError> {
        let v0 = value * (2.0 * PI).powf(dim as f64 / 2.0);
        let field = SpectralField::from_coefficients(
            dim,
            [(FreqIndex::ZERO, Complex64::new(v0, 0.0))],
            true,
        )?;
        Self::new(field)
    }

    /// `V(x) = c + Σ a_k cos(k·x)`.
    pub fn cosine_series(
        dim: usize,
        constant: f64,
        terms: &[(FreqIndex, f64)],
    ) -> Result<Self, OperatorError> {
        let norm = (2.0 * PI).powf(dim as f64 / 2.0);
        let mut items = vec![(FreqIndex::ZERO, Complex64::new(constant * norm, 0.0))];
        for &(k, a) in terms {
            if k.is_zero() {
                items.push((k, Complex64::new(a * norm, 0.0)));
            } else {
                let half = Complex64::new(0.5 * a * norm, 0.0);
                items.push((k, half));
                items.push((-k, half));
            }
        }
        Self::new(SpectralField::from_coefficients(dim, items, true)?)
    }

    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn nu_lower(&self) -> f64 {
        self.nu_lower
    }

    pub fn nu_upper(&self) -> f64 {
        self.nu_upper
    }

    /// Lower energy-norm equivalence constant `α_*`.
    pub fn alpha_lower(&self) -> f64 {
        self.alpha_lower
    }

    /// `α^* = max(ν^*, 1)`.
    pub fn alpha_upper(&self) -> f64 {
        self.nu_upper.max(1.0)
    }

    /// `Σ_K |V̂_K|`.
    pub fn l1_total(&self) -> f64 {
        self.l1_total
    }

    /// Points per axis of the positivity verification grid.
    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    /// Mean value `(2π)^{-d/2} V̂_0`.
    pub fn mean(&self) -> f64 {
        crate::spectral::torus_factor(self.dim()) * self.field.coeff(&FreqIndex::ZERO).re
    }

    /// Smallest integer radius whose ball contains the whole support.
    pub fn support_radius(&self) -> u32 {
        self.field
            .support()
            .iter()
            .map(|k| (k.norm2() as f64).sqrt().ceil() as u32)
            .max()
            .unwrap_or(0)
    }

    /// `Σ_{|K| > radius} |V̂_K|`.
    pub fn tail_l1(&self, radius: u32) -> f64 {
        let r2 = i64::from(radius) * i64::from(radius);
        self.field
            .iter()
            .filter(|(k, _)| k.norm2() > r2)
            .map(|(_, c)| c.norm())
            .sum()
    }

    /// `Π_{G^M} V̂`.
    pub fn truncated(&self, radius: u32) -> SpectralField {
        let ball = IndexSet::ball(radius, self.dim()).expect("dimension already validated");
        self.field.project(&ball).expect("same dimension")
    }
}
