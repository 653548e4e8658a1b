//! Scalar fields on S² (axisymmetric) and on the product of two spheres.
//!
//! A field is stored nodally: an n×1 column for the sphere, an n×n matrix
//! for the product (rows index the first factor's nodes). Spectral views
//! are Legendre coefficients per factor.

use crate::error::GeometryError;
use crate::grid::CollocationGrid;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Which Laplacian the operator uses. On functions the Kähler (complex)
/// Laplacian is half the Riemannian one; the two are never mixed
/// implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianConvention {
    /// Δ₀ Y_l = -l(l+1) Y_l.
    Riemannian,
    /// Δ Y_l = -l(l+1)/2 Y_l.
    Kahler,
}

impl LaplacianConvention {
    /// Scale factor relative to the Riemannian Laplacian.
    pub fn factor(self) -> f64 {
        match self {
            LaplacianConvention::Riemannian => 1.0,
            LaplacianConvention::Kahler => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Nodal,
    Spectral,
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<CollocationGrid>,
    /// n×1 (sphere) or n×n (product) values; nodal or per-degree spectral
    /// depending on `representation`.
    pub values: DMatrix<f64>,
    pub representation: Representation,
}

impl ScalarField {
    pub fn zeros_sphere(grid: &Arc<CollocationGrid>) -> Self {
        Self {
            grid: grid.clone(),
            values: DMatrix::zeros(grid.n_nodes, 1),
            representation: Representation::Nodal,
        }
    }

    pub fn zeros_product(grid: &Arc<CollocationGrid>) -> Self {
        Self {
            grid: grid.clone(),
            values: DMatrix::zeros(grid.n_nodes, grid.n_nodes),
            representation: Representation::Nodal,
        }
    }

    pub fn constant_sphere(grid: &Arc<CollocationGrid>, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: DMatrix::from_element(grid.n_nodes, 1, c),
            representation: Representation::Nodal,
        }
    }

    pub fn from_nodal(grid: &Arc<CollocationGrid>, v: DVector<f64>) -> Self {
        Self {
            grid: grid.clone(),
            values: DMatrix::from_column_slice(v.len(), 1, v.as_slice()),
            representation: Representation::Nodal,
        }
    }

    pub fn from_nodal_matrix(grid: &Arc<CollocationGrid>, m: DMatrix<f64>) -> Self {
        Self {
            grid: grid.clone(),
            values: m,
            representation: Representation::Nodal,
        }
    }

    /// Zonal mode of degree l, unit L²(dV₀) norm, on the sphere.
    pub fn unit_mode(grid: &Arc<CollocationGrid>, l: usize) -> Self {
        Self::from_nodal(grid, grid.unit_mode(l))
    }

    /// ψ(x₁, x₂) = ψ₁(x₁) + ψ₂(x₂) on the product.
    pub fn factor_sum(psi1: &ScalarField, psi2: &ScalarField) -> Self {
        let g = psi1.grid.clone();
        let n = g.n_nodes;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = psi1.values[(i, 0)] + psi2.values[(j, 0)];
            }
        }
        Self {
            grid: g,
            values: m,
            representation: Representation::Nodal,
        }
    }

    pub fn is_product(&self) -> bool {
        self.values.ncols() > 1
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.values.column(0).as_slice())
    }

    pub fn check_finite(&self, context: &'static str) -> Result<(), GeometryError> {
        if self.values.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(GeometryError::NonFinite { context })
        }
    }

    /// Spectral view (per-factor Legendre coefficients).
    pub fn to_spectral(&self) -> Self {
        assert_eq!(self.representation, Representation::Nodal);
        let n = self.grid.n_nodes;
        let vals = if self.is_product() {
            // coeffs = F * M * F^T
            let f_mat = analysis_matrix(&self.grid);
            &f_mat * &self.values * f_mat.transpose()
        } else {
            let c = self.grid.analyze(&self.as_vector());
            DMatrix::from_column_slice(n, 1, c.as_slice())
        };
        Self {
            grid: self.grid.clone(),
            values: vals,
            representation: Representation::Spectral,
        }
    }

    pub fn to_nodal(&self) -> Self {
        assert_eq!(self.representation, Representation::Spectral);
        let vals = if self.is_product() {
            let f_inv = synthesis_matrix(&self.grid);
            &f_inv * &self.values * f_inv.transpose()
        } else {
            let v = self.grid.synthesize(&self.as_vector());
            DMatrix::from_column_slice(v.len(), 1, v.as_slice())
        };
        Self {
            grid: self.grid.clone(),
            values: vals,
            representation: Representation::Nodal,
        }
    }

    /// Round-metric Laplacian Δ₀ (Riemannian convention); Δ₁ + Δ₂ on the
    /// product.
    pub fn laplace0(&self) -> Self {
        assert_eq!(self.representation, Representation::Nodal);
        let lap = self.grid.laplace0_matrix();
        let vals = if self.is_product() {
            lap * &self.values + &self.values * lap.transpose()
        } else {
            lap * &self.values
        };
        Self {
            grid: self.grid.clone(),
            values: vals,
            representation: Representation::Nodal,
        }
    }

    /// ∫ φ dV₀ over the base (round or round×round) metric.
    pub fn integrate0(&self) -> f64 {
        let w = &self.grid.weights;
        let tau = 2.0 * std::f64::consts::PI;
        if self.is_product() {
            let mut s = 0.0;
            for i in 0..self.grid.n_nodes {
                for j in 0..self.grid.n_nodes {
                    s += w[i] * w[j] * self.values[(i, j)];
                }
            }
            tau * tau * s
        } else {
            tau * w.dot(&self.as_vector())
        }
    }

    /// Truncate to l ≤ l_max per factor.
    pub fn band_limit(&self) -> Self {
        assert_eq!(self.representation, Representation::Nodal);
        let mut sp = self.to_spectral();
        let n = self.grid.n_nodes;
        let lmax = self.grid.l_max;
        if self.is_product() {
            for i in 0..n {
                for j in 0..n {
                    if i > lmax || j > lmax {
                        sp.values[(i, j)] = 0.0;
                    }
                }
            }
        } else {
            for l in (lmax + 1)..n {
                sp.values[(l, 0)] = 0.0;
            }
        }
        sp.to_nodal()
    }

    /// L²(dV₀) energy beyond l_max (aliasing detector).
    pub fn tail_energy(&self) -> f64 {
        let sp = self.to_spectral();
        let n = self.grid.n_nodes;
        let lmax = self.grid.l_max;
        let mut e = 0.0;
        let norm = |l: usize| 4.0 * std::f64::consts::PI / (2 * l + 1) as f64;
        if self.is_product() {
            for i in 0..n {
                for j in 0..n {
                    if i > lmax || j > lmax {
                        let c = sp.values[(i, j)];
                        e += c * c * norm(i) * norm(j) / (4.0 * std::f64::consts::PI);
                    }
                }
            }
        } else {
            for l in (lmax + 1)..n {
                let c = sp.values[(l, 0)];
                e += c * c * norm(l);
            }
        }
        e.sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.map(f),
            representation: self.representation,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: &self.values + &other.values,
            representation: self.representation,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: &self.values - &other.values,
            representation: self.representation,
        }
    }

    pub fn mul_pointwise(&self, other: &Self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.component_mul(&other.values),
            representation: Representation::Nodal,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

pub(crate) fn analysis_matrix(grid: &CollocationGrid) -> DMatrix<f64> {
    let n = grid.n_nodes;
    DMatrix::from_fn(n, n, |l, k| {
        // (2l+1)/2 * w_k * P_l(mu_k)
        (2 * l + 1) as f64 / 2.0 * grid.weights[k] * grid.legendre(l)[k]
    })
}

pub(crate) fn synthesis_matrix(grid: &CollocationGrid) -> DMatrix<f64> {
    let n = grid.n_nodes;
    DMatrix::from_fn(n, n, |k, l| grid.legendre(l)[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn product_integral_of_one() {
        let g = CollocationGrid::build(10, 6).unwrap();
        let one = ScalarField::from_nodal_matrix(&g, DMatrix::from_element(10, 10, 1.0));
        assert_abs_diff_eq!(one.integrate0(), 16.0 * PI * PI, epsilon = 1e-9);
    }

    #[test]
    fn product_laplacian_splits() {
        let g = CollocationGrid::build(12, 8).unwrap();
        let p2 = ScalarField::unit_mode(&g, 2);
        let p3 = ScalarField::unit_mode(&g, 3);
        let psi = ScalarField::factor_sum(&p2, &p3);
        let lap = psi.laplace0();
        // Δ(P̂₂ ⊕ P̂₃) = -6 P̂₂ ⊕ -12 P̂₃
        let expect = ScalarField::factor_sum(&p2.scaled(-6.0), &p3.scaled(-12.0));
        assert_abs_diff_eq!(lap.sub(&expect).max_abs(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn band_limit_round_trip() {
        let g = CollocationGrid::build(16, 6).unwrap();
        let f = ScalarField::unit_mode(&g, 4);
        let trip = f.band_limit();
        assert_abs_diff_eq!(trip.sub(&f).max_abs(), 0.0, epsilon = 1e-11);
        let high = ScalarField::unit_mode(&g, 9);
        assert!(high.tail_energy() > 0.5);
        assert_abs_diff_eq!(high.band_limit().max_abs(), 0.0, epsilon = 1e-10);
    }
}
