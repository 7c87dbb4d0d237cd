use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{Coefficient, PotentialSpec};
use super::ExperimentError;
use crate::frequency::{FreqIndex, IndexSet};
use crate::operator::Potential;
use crate::spectral::{torus_factor, SpectralField};

/// A potential built from a spec, with what was done to it at ingestion.
#[derive(Debug, Clone)]
pub struct BuiltPotential {
    pub potential: Potential,
    /// Constant added to enforce the minimum value (random-decay only).
    pub shift: f64,
    /// Estimated `Σ_{|G| > r_cut} |V̂_G|` dropped by truncating the family.
    pub tail_l1_estimate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialInfo {
    pub family: &'static str,
    pub support_size: usize,
    pub support_radius: u32,
    pub nu_lower: f64,
    pub nu_upper: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub shift: f64,
    pub tail_l1_estimate: Option<f64>,
}

impl BuiltPotential {
    pub fn info(&self, spec: &PotentialSpec) -> PotentialInfo {
        let v = &self.potential;
        PotentialInfo {
            family: match spec {
                PotentialSpec::Coefficients { .. } => "coefficients",
                PotentialSpec::Constant { .. } => "constant",
                PotentialSpec::Trig { .. } => "trig",
                PotentialSpec::RandomDecay { .. } => "random-decay",
            },
            support_size: v.field().support().len(),
            support_radius: v.support_radius(),
            nu_lower: v.nu_lower(),
            nu_upper: v.nu_upper(),
            alpha_lower: v.alpha_lower(),
            alpha_upper: v.alpha_upper(),
            shift: self.shift,
            tail_l1_estimate: self.tail_l1_estimate,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Numerical(e.to_string())
}

pub(crate) fn coefficient_field(
    dim: usize,
    items: &[Coefficient],
    real: bool,
) -> Result<SpectralField, ExperimentError> {
    let items = items
        .iter()
        .map(|c| (FreqIndex::new(&c.k), Complex64::new(c.re, c.im)))
        .collect::<Vec<_>>();
    SpectralField::from_coefficients(dim, items, real).map_err(|e| ExperimentError::Validation {
        path: "problem.potential".into(),
        message: e.to_string(),
    })
}

pub fn build_potential(
    spec: &PotentialSpec,
    dim: usize,
    seed: Option<u64>,
) -> Result<BuiltPotential, ExperimentError> {
    let plain = |potential: Potential| BuiltPotential {
        potential,
        shift: 0.0,
        tail_l1_estimate: None,
    };
    let reject = |e: crate::operator::OperatorError| ExperimentError::Validation {
        path: "problem.potential".into(),
        message: e.to_string(),
    };
    match spec {
        PotentialSpec::Coefficients { coefficients } => {
            let field = coefficient_field(dim, coefficients, true)?;
            Potential::new(field).map(plain).map_err(reject)
        }
        PotentialSpec::Constant { c } => Potential::constant(dim, *c).map(plain).map_err(reject),
        PotentialSpec::Trig { c, terms } => {
            let terms: Vec<(FreqIndex, f64)> =
                terms.iter().map(|t| (FreqIndex::new(&t.k), t.a)).collect();
            Potential::cosine_series(dim, *c, &terms)
                .map(plain)
                .map_err(reject)
        }
        PotentialSpec::RandomDecay {
            amplitude,
            p,
            r_cut,
            min_value,
        } => {
            let seed = seed.ok_or(ExperimentError::Validation {
                path: "seed".into(),
                message: "required for the random-decay family".into(),
            })?;
            random_decay(dim, *amplitude, *p, *r_cut, *min_value, seed)
        }
    }
}

/// Seeded random-phase potential with algebraically decaying coefficients,
/// shifted by a constant so that its sampled minimum is at least `min_value`.
pub fn random_decay(
    dim: usize,
    amplitude: f64,
    p: f64,
    r_cut: u32,
    min_value: f64,
    seed: u64,
) -> Result<BuiltPotential, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ball = IndexSet::ball(r_cut, dim).map_err(numerical)?;
    let magnitude = |g: &FreqIndex| amplitude * (1.0 + g.norm2() as f64).powf(-p / 2.0);
    let mut items = Vec::with_capacity(ball.len());
    for g in ball.pair_representatives() {
        if g.is_zero() {
            items.push((g, Complex64::new(magnitude(&g), 0.0)));
            continue;
        }
        let c = Complex64::from_polar(magnitude(&g), rng.random_range(0.0..TAU));
        items.push((g, c));
        items.push((-g, c.conj()));
    }
    let field = SpectralField::from_coefficients(dim, items, true).map_err(numerical)?;
    let grid_points = 4 * (field.support().max_abs_component() as usize + 1);
    let min = field
        .evaluate_on_grid(grid_points)
        .iter()
        .map(|v| v.re)
        .fold(f64::INFINITY, f64::min);
    let shift = (min_value - min).max(0.0);
    let shifted = field
        .combine(
            Complex64::new(1.0, 0.0),
            &SpectralField::plane_wave(dim, FreqIndex::ZERO).map_err(numerical)?,
            Complex64::new(shift / torus_factor(dim), 0.0),
        )
        .map_err(numerical)?;
    let potential = Potential::new(shifted).map_err(numerical)?;
    Ok(BuiltPotential {
        potential,
        shift,
        tail_l1_estimate: tail_estimate(dim, amplitude, p, r_cut),
    })
}

/// `∫_{r_cut}^∞ A (1 + r²)^{-p/2} |S^{d-1}| r^{d-1} dr`, or `None` when it diverges.
fn tail_estimate(dim: usize, amplitude: f64, p: f64, r_cut: u32) -> Option<f64> {
    if p <= dim as f64 {
        return None;
    }
    let sphere = match dim {
        1 => 2.0,
        2 => TAU,
        _ => 4.0 * PI,
    };
    let r0 = f64::from(r_cut.max(1));
    // Substitute r = r0 e^t and integrate until the integrand is negligible.
    let f = |t: f64| {
        let r = r0 * t.exp();
        amplitude * (1.0 + r * r).powf(-p / 2.0) * sphere * r.powi(dim as i32)
    };
    let (steps, t_max) = (4000, 40.0 / (p - dim as f64));
    let h = t_max / f64::from(steps);
    let mut acc = 0.5 * (f(0.0) + f(t_max));
    for i in 1..steps {
        acc += f(f64::from(i) * h);
    }
    Some(acc * h)
}
