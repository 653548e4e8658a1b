//! Numerical laboratory for the Perelman entropy λ(g) on desk-scale model
//! geometries: conformal metrics on S² and products of two round spheres.
//!
//! The crate computes
//! - λ(g) by solving the constrained minimizer equation through the
//!   ground-state substitution w = e^{-f/2},
//! - first and second variations of λ with independent finite-difference
//!   oracles,
//! - modal second-variation operators at the round Kähler-Einstein
//!   background (fixed Kähler class and class-varying directions),
//! - the normalized Ricci flow on conformal S² metrics with a
//!   λ-monotonicity audit and Möbius gauge fixing.
//!
//! Two Laplacian conventions coexist and are always selected explicitly:
//! the Riemannian one (Δ₀ Y_l = -l(l+1) Y_l, entropy integrand
//! R + |Df|² + f) and the Kähler one (half the Riemannian Laplacian on
//! functions, integrand R/2 + |Df|²/2 + f). The modal stability values
//! ν²(ν-1)²/(1-2ν) with ν = l(l+1)/2 are second variations of the
//! Kähler-convention functional; λ(round S²) = 8π belongs to the
//! Riemannian one.

pub mod entropy;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod metric;
pub mod mobius;
pub mod tensor;
pub mod variation;

pub use entropy::{EntropyProfile, SolveOptions, VariationDirection};
pub use error::{EntropyError, GeometryError, VariationError};
pub use field::{LaplacianConvention, Representation, ScalarField};
pub use grid::CollocationGrid;
pub use metric::ConformalMetric;
pub use tensor::SymTensorField;
