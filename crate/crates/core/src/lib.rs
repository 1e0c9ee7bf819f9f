//! Numerical laboratory for dispersive Schrödinger evolution on long-range
//! perturbations of the Euclidean metric.
//!
//! The crate is organized around a periodic spectral grid ([`grid`], [`field`])
//! carrying the Laplace–Beltrami operator of a windowed metric ([`metric`],
//! [`operator`]). On top of that sit the semiclassical functional calculus and
//! Littlewood–Paley machinery ([`calculus`]), time evolution including a
//! defocusing NLS integrator ([`propagate`]), Hamiltonian ray geometry and
//! phase-space zones ([`geodesics`]), eikonal phase constructions and
//! oscillatory-integral operators ([`eikonal`]), and the mixed-norm /
//! decay-fit verdict machinery ([`estimates`]).
//!
//! Everything is deterministic: random probes are seeded ([`probes`]) and all
//! reductions have a fixed order, so repeated runs produce identical numbers.

pub mod calculus;
pub mod eikonal;
pub mod error;
pub mod estimates;
pub mod field;
pub mod fit;
pub mod geodesics;
pub mod grid;
pub mod metric;
pub mod operator;
pub mod probes;
pub mod propagate;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
