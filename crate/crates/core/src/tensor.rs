//! Axisymmetric symmetric 2-tensors on S², stored as orthonormal-frame
//! components against the round metric, and their decomposition into a
//! conformal part and a Lie-derivative part.
//!
//! With e₁ = ∂_θ, e₂ = (1/sin θ)∂_φ the components are a = h(e₁,e₁),
//! c = h(e₁,e₂), b = h(e₂,e₂), all functions of μ = cos θ. The generator
//! Z = η(μ) sin θ ∂_θ gives
//!   (L_Z g₀)(e₁,e₁) = 2μη - 2(1-μ²)η′,  (L_Z g₀)(e₂,e₂) = 2μη,
//! so a tensor with c = 0 splits as h = χ g₀ + L_Z g₀ with
//!   η′ = -(a-b)/(2(1-μ²)),   χ = b - 2μη.
//! The twist component c is always a Lie derivative (of a rotational
//! generator ξ(μ)∂_φ) and never moves λ.

use crate::field::ScalarField;
use crate::grid::CollocationGrid;
use nalgebra::DVector;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SymTensorField {
    pub grid: Arc<CollocationGrid>,
    /// h(e₁,e₁) at the nodes.
    pub a: DVector<f64>,
    /// h(e₁,e₂) at the nodes (twist).
    pub c: DVector<f64>,
    /// h(e₂,e₂) at the nodes.
    pub b: DVector<f64>,
}

impl SymTensorField {
    pub fn zeros(grid: &Arc<CollocationGrid>) -> Self {
        let n = grid.n_nodes;
        Self {
            grid: grid.clone(),
            a: DVector::zeros(n),
            c: DVector::zeros(n),
            b: DVector::zeros(n),
        }
    }

    /// h = χ g₀.
    pub fn conformal(chi: &ScalarField) -> Self {
        let v = chi.as_vector();
        Self {
            grid: chi.grid.clone(),
            a: v.clone(),
            c: DVector::zeros(v.len()),
            b: v,
        }
    }

    /// h = L_Z g₀ for the vertical generator Z = η(μ) sin θ ∂_θ.
    pub fn lie_vertical(grid: &Arc<CollocationGrid>, eta: &DVector<f64>) -> Self {
        let deta = grid.d_dmu(eta);
        let n = grid.n_nodes;
        let mut a = DVector::zeros(n);
        let mut b = DVector::zeros(n);
        for k in 0..n {
            let mu = grid.mu_nodes[k];
            b[k] = 2.0 * mu * eta[k];
            a[k] = b[k] - 2.0 * (1.0 - mu * mu) * deta[k];
        }
        Self {
            grid: grid.clone(),
            a,
            c: DVector::zeros(n),
            b,
        }
    }

    /// h = L_Z g₀ for the rotational generator Z = ξ(μ) ∂_φ; pure twist.
    pub fn lie_rotational(grid: &Arc<CollocationGrid>, xi: &DVector<f64>) -> Self {
        let dxi = grid.d_dmu(xi);
        let n = grid.n_nodes;
        let mut c = DVector::zeros(n);
        for k in 0..n {
            let mu = grid.mu_nodes[k];
            c[k] = -(1.0 - mu * mu) * dxi[k];
        }
        Self {
            grid: grid.clone(),
            a: DVector::zeros(n),
            c,
            b: DVector::zeros(n),
        }
    }

    /// Kähler-potential direction at the round metric: the path of Kähler
    /// forms ω + t·(i/2)∂∂̄ψ varies the metric by h = (½Δ₀ψ) g₀ on S².
    pub fn potential(psi: &ScalarField) -> Self {
        Self::conformal(&psi.laplace0().scaled(0.5))
    }

    /// tr_{g₀} h = a + b.
    pub fn trace(&self) -> ScalarField {
        ScalarField::from_nodal(&self.grid, &self.a + &self.b)
    }

    /// |h|²_{g₀} = a² + 2c² + b² pointwise.
    pub fn norm_sq(&self) -> ScalarField {
        let n = self.grid.n_nodes;
        let v = DVector::from_fn(n, |k, _| {
            self.a[k] * self.a[k] + 2.0 * self.c[k] * self.c[k] + self.b[k] * self.b[k]
        });
        ScalarField::from_nodal(&self.grid, v)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            a: &self.a * s,
            c: &self.c * s,
            b: &self.b * s,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            grid: self.grid.clone(),
            a: &self.a + &other.a,
            c: &self.c + &other.c,
            b: &self.b + &other.b,
        }
    }

    /// Split h = χ g₀ + L_Z g₀ (ignoring the twist, which is pure Lie).
    /// Returns (χ, η) with η normalized to zero constant Legendre mode.
    pub fn decompose(&self) -> (ScalarField, DVector<f64>) {
        let n = self.grid.n_nodes;
        let eta_prime = DVector::from_fn(n, |k, _| {
            let mu = self.grid.mu_nodes[k];
            -(self.a[k] - self.b[k]) / (2.0 * (1.0 - mu * mu))
        });
        let eta = antiderivative(&self.grid, &eta_prime);
        let chi = DVector::from_fn(n, |k, _| {
            self.b[k] - 2.0 * self.grid.mu_nodes[k] * eta[k]
        });
        (ScalarField::from_nodal(&self.grid, chi), eta)
    }
}

/// Spectral antiderivative in μ with zero constant mode:
/// ∫P₀ = P₁, ∫P_l = (P_{l+1} - P_{l-1})/(2l+1) for l ≥ 1.
pub fn antiderivative(grid: &Arc<CollocationGrid>, v: &DVector<f64>) -> DVector<f64> {
    let c = grid.analyze(v);
    let n = grid.n_nodes;
    let mut out = DVector::zeros(n);
    if n > 1 {
        out[1] += c[0];
    }
    for l in 1..n {
        let s = c[l] / (2 * l + 1) as f64;
        if l + 1 < n {
            out[l + 1] += s;
        }
        if l >= 1 {
            out[l - 1] -= s;
        }
    }
    out[0] = 0.0;
    grid.synthesize(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> Arc<CollocationGrid> {
        CollocationGrid::build(40, 24).unwrap()
    }

    #[test]
    fn antiderivative_inverts_derivative() {
        let g = grid();
        // f with zero constant mode so the normalization matches
        let f = g.legendre(2).scale(0.7) + g.legendre(4).scale(-0.2);
        let df = g.d_dmu(&f);
        let back = antiderivative(&g, &df);
        for k in 0..g.n_nodes {
            assert_abs_diff_eq!(back[k], f[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn conformal_decomposes_to_itself() {
        let g = grid();
        let chi = ScalarField::unit_mode(&g, 3);
        let h = SymTensorField::conformal(&chi);
        let (chi_back, eta) = h.decompose();
        assert_abs_diff_eq!(chi_back.sub(&chi).max_abs(), 0.0, epsilon = 1e-11);
        assert_abs_diff_eq!(eta.amax(), 0.0, epsilon = 1e-11);
    }

    #[test]
    fn lie_decomposes_to_zero_conformal_part() {
        let g = grid();
        // generator with zero constant mode, matching the normalization
        let eta = g.legendre(1).scale(0.4) + g.legendre(3).scale(0.25);
        let h = SymTensorField::lie_vertical(&g, &eta);
        let (chi, eta_back) = h.decompose();
        assert_abs_diff_eq!(chi.max_abs(), 0.0, epsilon = 1e-10);
        for k in 0..g.n_nodes {
            assert_abs_diff_eq!(eta_back[k], eta[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn potential_direction_is_conformal_with_trace_laplacian() {
        let g = grid();
        let psi = ScalarField::unit_mode(&g, 2);
        let h = SymTensorField::potential(&psi);
        let tr = h.trace();
        // tr h = Δ₀ψ = -6 ψ for l = 2
        assert_abs_diff_eq!(
            tr.sub(&psi.scaled(-6.0)).max_abs(),
            0.0,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(h.c.amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn twist_norm() {
        let g = grid();
        let xi = g.legendre(2);
        let h = SymTensorField::lie_rotational(&g, &xi);
        assert_abs_diff_eq!(h.trace().max_abs(), 0.0, epsilon = 1e-14);
        assert!(h.norm_sq().integrate0() > 0.0);
    }
}
