//! Adaptive planewave approximation of eigenvalue clusters of `-Δ + V` on the
//! periodic torus `[0, 2π)^d`.
//!
//! The building blocks are layered bottom-up:
//!
//! - [`frequency`]: symmetric lattice index sets (the discretization),
//! - [`spectral`]: Fourier coefficient fields, Sobolev norms, exact products,
//! - [`operator`]: potentials, Galerkin assembly, eigen and source solves,
//! - [`estimator`]: residuals and the a posteriori estimators,
//! - [`marking`]: bulk (Dörfler) marking over `±G` pairs,
//! - [`adapt`]: the adaptive loops,
//! - [`verify`]: reference solutions, eigenspace distances, rate fits,
//! - [`experiment`]: configuration, potential families and run artifacts.

pub mod adapt;
pub mod estimator;
pub mod experiment;
pub mod frequency;
pub mod marking;
pub mod operator;
pub mod spectral;
pub mod verify;

pub use frequency::{FreqIndex, IndexSet};
pub use operator::{assemble, solve_eigen, solve_source, EigenCluster, Hamiltonian, Potential};
pub use spectral::SpectralField;
