//! Conformal metrics e^{2u}g₀ on S² and products e^{2u₁}g₀ ⊕ e^{2u₂}g₀,
//! with curvature, weighted Laplacians, gradients and quadrature.
//!
//! On a surface K = e^{-2u}(1 - Δ₀u) and R = 2K; Δ_g = e^{-2u}Δ₀ on
//! functions; dV_g = e^{2u}dV₀; |Dφ|²_g = e^{-2u}|Dφ|²₀.

use crate::error::GeometryError;
use crate::field::{LaplacianConvention, Representation, ScalarField};
use crate::grid::CollocationGrid;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub enum MetricKind {
    Sphere {
        /// log-conformal factor, n×1.
        u: ScalarField,
    },
    Product {
        /// per-factor log-conformal factors, each a function of its own
        /// factor only (n×1).
        u1: ScalarField,
        u2: ScalarField,
    },
}

#[derive(Debug, Clone)]
pub struct ConformalMetric {
    pub grid: Arc<CollocationGrid>,
    pub kind: MetricKind,
}

pub const DEGENERATE_FACTOR_FLOOR: f64 = 1e-6;

impl ConformalMetric {
    pub fn round(grid: &Arc<CollocationGrid>) -> Self {
        Self {
            grid: grid.clone(),
            kind: MetricKind::Sphere {
                u: ScalarField::zeros_sphere(grid),
            },
        }
    }

    pub fn product_round(grid: &Arc<CollocationGrid>) -> Self {
        Self {
            grid: grid.clone(),
            kind: MetricKind::Product {
                u1: ScalarField::zeros_sphere(grid),
                u2: ScalarField::zeros_sphere(grid),
            },
        }
    }

    /// Sphere metric from a log-conformal factor. The input is truncated
    /// to l_max; in strict mode aliasing beyond l_max is an error.
    pub fn sphere(
        grid: &Arc<CollocationGrid>,
        u: ScalarField,
        strict: bool,
    ) -> Result<Self, GeometryError> {
        u.check_finite("conformal factor u")?;
        let tail = u.tail_energy();
        if strict && tail > 1e-10 {
            return Err(GeometryError::Aliased {
                l_max: grid.l_max,
                tail,
                tol: 1e-10,
            });
        }
        let u = u.band_limit();
        let m = Self {
            grid: grid.clone(),
            kind: MetricKind::Sphere { u },
        };
        m.reject_degenerate()?;
        Ok(m)
    }

    pub fn product(
        grid: &Arc<CollocationGrid>,
        u1: ScalarField,
        u2: ScalarField,
        strict: bool,
    ) -> Result<Self, GeometryError> {
        for u in [&u1, &u2] {
            u.check_finite("conformal factor u_i")?;
            let tail = u.tail_energy();
            if strict && tail > 1e-10 {
                return Err(GeometryError::Aliased {
                    l_max: grid.l_max,
                    tail,
                    tol: 1e-10,
                });
            }
        }
        let m = Self {
            grid: grid.clone(),
            kind: MetricKind::Product {
                u1: u1.band_limit(),
                u2: u2.band_limit(),
            },
        };
        m.reject_degenerate()?;
        Ok(m)
    }

    fn reject_degenerate(&self) -> Result<(), GeometryError> {
        let min_factor = match &self.kind {
            MetricKind::Sphere { u } => u
                .values
                .iter()
                .fold(f64::INFINITY, |m, &x| m.min((2.0 * x).exp())),
            MetricKind::Product { u1, u2 } => {
                let m1 = u1
                    .values
                    .iter()
                    .fold(f64::INFINITY, |m, &x| m.min((2.0 * x).exp()));
                let m2 = u2
                    .values
                    .iter()
                    .fold(f64::INFINITY, |m, &x| m.min((2.0 * x).exp()));
                m1.min(m2)
            }
        };
        if min_factor < DEGENERATE_FACTOR_FLOOR {
            return Err(GeometryError::DegenerateFactor { min_factor });
        }
        Ok(())
    }

    pub fn is_product(&self) -> bool {
        matches!(self.kind, MetricKind::Product { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            MetricKind::Sphere { .. } => "sphere",
            MetricKind::Product { .. } => "product",
        }
    }

    /// u of the sphere metric (panics on product).
    pub fn u_sphere(&self) -> &ScalarField {
        match &self.kind {
            MetricKind::Sphere { u } => u,
            _ => panic!("u_sphere on product metric"),
        }
    }

    pub fn u_factors(&self) -> (&ScalarField, &ScalarField) {
        match &self.kind {
            MetricKind::Product { u1, u2 } => (u1, u2),
            _ => panic!("u_factors on sphere metric"),
        }
    }

    /// Conformal density e^{2u} on the domain (outer product of the
    /// factor densities on the product).
    pub fn sigma(&self) -> ScalarField {
        match &self.kind {
            MetricKind::Sphere { u } => u.map(|x| (2.0 * x).exp()),
            MetricKind::Product { u1, u2 } => {
                let s1 = u1.values.column(0).map(|x| (2.0 * x).exp());
                let s2 = u2.values.column(0).map(|x| (2.0 * x).exp());
                let n = self.grid.n_nodes;
                let m = DMatrix::from_fn(n, n, |i, j| s1[i] * s2[j]);
                ScalarField::from_nodal_matrix(&self.grid, m)
            }
        }
    }

    /// Per-factor densities (sphere: the single density twice the first).
    fn factor_sigmas(&self) -> (DVector<f64>, DVector<f64>) {
        match &self.kind {
            MetricKind::Sphere { u } => {
                let s = u.as_vector().map(|x| (2.0 * x).exp());
                (s.clone(), s)
            }
            MetricKind::Product { u1, u2 } => (
                u1.as_vector().map(|x| (2.0 * x).exp()),
                u2.as_vector().map(|x| (2.0 * x).exp()),
            ),
        }
    }

    pub fn volume(&self) -> f64 {
        self.sigma().integrate0()
    }

    /// Gauss curvature (sphere only): K = e^{-2u}(1 - Δ₀u).
    pub fn gauss_curvature(&self) -> ScalarField {
        match &self.kind {
            MetricKind::Sphere { u } => {
                let lap_u = u.laplace0();
                let mut k = ScalarField::zeros_sphere(&self.grid);
                for i in 0..self.grid.n_nodes {
                    k.values[(i, 0)] =
                        (-2.0 * u.values[(i, 0)]).exp() * (1.0 - lap_u.values[(i, 0)]);
                }
                k
            }
            MetricKind::Product { .. } => panic!("gauss_curvature on product; use scalar_curvature"),
        }
    }

    /// Scalar curvature R (Riemannian convention): 2K on the sphere,
    /// 2K₁ + 2K₂ on the product.
    pub fn scalar_curvature(&self) -> ScalarField {
        match &self.kind {
            MetricKind::Sphere { .. } => self.gauss_curvature().scaled(2.0),
            MetricKind::Product { u1, u2 } => {
                let k1 = factor_curvature(&self.grid, u1);
                let k2 = factor_curvature(&self.grid, u2);
                let n = self.grid.n_nodes;
                let m = DMatrix::from_fn(n, n, |i, j| 2.0 * (k1[i] + k2[j]));
                ScalarField::from_nodal_matrix(&self.grid, m)
            }
        }
    }

    /// R·e^{2u} on the domain; smooth (no division by the density) and
    /// what the entropy solver actually consumes.
    pub fn scalar_curvature_times_sigma(&self) -> ScalarField {
        match &self.kind {
            MetricKind::Sphere { u } => {
                let lap_u = u.laplace0();
                lap_u.map(|x| 2.0 * (1.0 - x))
            }
            MetricKind::Product { u1, u2 } => {
                // R σ₁σ₂ = 2(1-Δ₀u₁)σ₂ + 2(1-Δ₀u₂)σ₁
                let a1 = u1.laplace0().map(|x| 2.0 * (1.0 - x));
                let a2 = u2.laplace0().map(|x| 2.0 * (1.0 - x));
                let (s1, s2) = self.factor_sigmas();
                let n = self.grid.n_nodes;
                let m = DMatrix::from_fn(n, n, |i, j| {
                    a1.values[(i, 0)] * s2[j] + a2.values[(j, 0)] * s1[i]
                });
                ScalarField::from_nodal_matrix(&self.grid, m)
            }
        }
    }

    /// Δ_g φ in the selected convention.
    pub fn laplacian(&self, phi: &ScalarField, conv: LaplacianConvention) -> ScalarField {
        assert_eq!(phi.representation, Representation::Nodal);
        let f = conv.factor();
        match &self.kind {
            MetricKind::Sphere { u } => {
                let lap = phi.laplace0();
                let mut out = lap;
                for i in 0..self.grid.n_nodes {
                    out.values[(i, 0)] *= f * (-2.0 * u.values[(i, 0)]).exp();
                }
                out
            }
            MetricKind::Product { .. } => {
                let (s1, s2) = self.factor_sigmas();
                let lapm = self.grid.laplace0_matrix();
                let a = lapm * &phi.values; // Δ₁ acting on rows
                let b = &phi.values * lapm.transpose(); // Δ₂ acting on cols
                let n = self.grid.n_nodes;
                let m = DMatrix::from_fn(n, n, |i, j| f * (a[(i, j)] / s1[i] + b[(i, j)] / s2[j]));
                ScalarField::from_nodal_matrix(&self.grid, m)
            }
        }
    }

    /// ∫ φ dV_g.
    pub fn integrate(&self, phi: &ScalarField) -> f64 {
        phi.mul_pointwise(&self.sigma()).integrate0()
    }

    /// |Dφ|²_g pointwise.
    pub fn grad_norm_sq(&self, phi: &ScalarField) -> ScalarField {
        let g0 = self.grad_norm_sq_base(phi);
        match &self.kind {
            MetricKind::Sphere { u } => {
                let mut out = g0;
                for i in 0..self.grid.n_nodes {
                    out.values[(i, 0)] *= (-2.0 * u.values[(i, 0)]).exp();
                }
                out
            }
            MetricKind::Product { .. } => g0, // handled per factor below
        }
    }

    /// |Dφ|²₀ on the sphere, or σ-weighted per factor on the product
    /// (i.e. already |Dφ|²_g there).
    fn grad_norm_sq_base(&self, phi: &ScalarField) -> ScalarField {
        let n = self.grid.n_nodes;
        match &self.kind {
            MetricKind::Sphere { .. } => {
                let dmu = self.grid.d_dmu(&phi.as_vector());
                let mut out = ScalarField::zeros_sphere(&self.grid);
                for i in 0..n {
                    let mu = self.grid.mu_nodes[i];
                    out.values[(i, 0)] = (1.0 - mu * mu) * dmu[i] * dmu[i];
                }
                out
            }
            MetricKind::Product { .. } => {
                let (g1, g2) = self.factor_grad_norm_sq(phi);
                g1.add(&g2)
            }
        }
    }

    /// Per-factor pieces of |Dφ|²_g on the product:
    /// σ₁⁻¹|D₁φ|²₀ and σ₂⁻¹|D₂φ|²₀.
    pub fn factor_grad_norm_sq(&self, phi: &ScalarField) -> (ScalarField, ScalarField) {
        assert!(self.is_product());
        let n = self.grid.n_nodes;
        let (s1, s2) = self.factor_sigmas();
        let mut m1 = DMatrix::zeros(n, n);
        let mut m2 = DMatrix::zeros(n, n);
        // d/dμ₁ along columns, d/dμ₂ along rows
        for j in 0..n {
            let col = DVector::from_column_slice(phi.values.column(j).as_slice());
            let d = self.grid.d_dmu(&col);
            for i in 0..n {
                let mu = self.grid.mu_nodes[i];
                m1[(i, j)] = (1.0 - mu * mu) * d[i] * d[i] / s1[i];
            }
        }
        for i in 0..n {
            let row = DVector::from_column_slice(phi.values.row(i).transpose().as_slice());
            let d = self.grid.d_dmu(&row);
            for j in 0..n {
                let mu = self.grid.mu_nodes[j];
                m2[(i, j)] = (1.0 - mu * mu) * d[j] * d[j] / s2[j];
            }
        }
        (
            ScalarField::from_nodal_matrix(&self.grid, m1),
            ScalarField::from_nodal_matrix(&self.grid, m2),
        )
    }

    /// Per-factor scalar curvatures 2K₁(μ₁), 2K₂(μ₂) on the product, as
    /// zonal vectors.
    pub fn factor_scalar_curvatures(&self) -> (DVector<f64>, DVector<f64>) {
        match &self.kind {
            MetricKind::Product { u1, u2 } => (
                factor_curvature(&self.grid, u1).map(|k| 2.0 * k),
                factor_curvature(&self.grid, u2).map(|k| 2.0 * k),
            ),
            _ => panic!("factor_scalar_curvatures on sphere metric"),
        }
    }
}

fn factor_curvature(grid: &Arc<CollocationGrid>, u: &ScalarField) -> DVector<f64> {
    let lap_u = grid.laplace0(&u.as_vector());
    DVector::from_fn(grid.n_nodes, |i, _| {
        (-2.0 * u.values[(i, 0)]).exp() * (1.0 - lap_u[i])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid() -> Arc<CollocationGrid> {
        CollocationGrid::build(48, 32).unwrap()
    }

    #[test]
    fn round_curvature_is_one() {
        let g = grid();
        let m = ConformalMetric::round(&g);
        let k = m.gauss_curvature();
        assert_abs_diff_eq!(k.map(|x| x - 1.0).max_abs(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn constant_rescale_curvature() {
        let g = grid();
        let c = 0.3;
        let u = ScalarField::constant_sphere(&g, c);
        let m = ConformalMetric::sphere(&g, u, true).unwrap();
        let k = m.gauss_curvature();
        let expect = (-2.0 * c).exp();
        assert_abs_diff_eq!(k.map(|x| x - expect).max_abs(), 0.0, epsilon = 1e-11);
    }

    #[test]
    fn gauss_bonnet() {
        let g = grid();
        let u = ScalarField::from_nodal(&g, g.legendre(2) * 0.1);
        let m = ConformalMetric::sphere(&g, u, true).unwrap();
        let k = m.gauss_curvature();
        assert_abs_diff_eq!(m.integrate(&k), 4.0 * PI, epsilon = 1e-10);
    }

    #[test]
    fn laplacian_conventions_and_scaling() {
        let g = grid();
        let p1 = ScalarField::unit_mode(&g, 1);
        let m = ConformalMetric::round(&g);
        let lr = m.laplacian(&p1, LaplacianConvention::Riemannian);
        assert_abs_diff_eq!(lr.add(&p1.scaled(2.0)).max_abs(), 0.0, epsilon = 1e-10);
        let lc = m.laplacian(&p1, LaplacianConvention::Kahler);
        assert_abs_diff_eq!(lc.add(&p1).max_abs(), 0.0, epsilon = 1e-10);

        // Δ_g φ = e^{-2c} Δ₀ φ under constant rescaling
        let c = 0.25;
        let mc = ConformalMetric::sphere(&g, ScalarField::constant_sphere(&g, c), true).unwrap();
        let lrc = mc.laplacian(&p1, LaplacianConvention::Riemannian);
        assert_abs_diff_eq!(
            lrc.sub(&lr.scaled((-2.0 * c).exp())).max_abs(),
            0.0,
            epsilon = 1e-10
        );

        // Δ(const) = 0
        let konst = ScalarField::constant_sphere(&g, 3.7);
        assert_abs_diff_eq!(
            m.laplacian(&konst, LaplacianConvention::Riemannian).max_abs(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn grad_p1_energy() {
        // ∫ |D P₁|²₀ dV₀ = l(l+1)·‖P₁‖² = 2·4π/3 = 8π/3; oracle: both
        // sides by quadrature.
        let g = grid();
        let m = ConformalMetric::round(&g);
        let p1 = ScalarField::from_nodal(&g, g.legendre(1));
        let direct = m.integrate(&m.grad_norm_sq(&p1));
        let by_parts = -m.integrate(&p1.mul_pointwise(&p1.laplace0()));
        assert_abs_diff_eq!(direct, by_parts, epsilon = 1e-10);
        assert_abs_diff_eq!(direct, 8.0 * PI / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn integration_by_parts_on_conformal_metric() {
        let g = grid();
        let u = ScalarField::from_nodal(&g, g.legendre(2) * 0.15 + g.legendre(3) * 0.05);
        let m = ConformalMetric::sphere(&g, u, true).unwrap();
        let phi = ScalarField::unit_mode(&g, 2);
        let psi = ScalarField::unit_mode(&g, 4);
        // ∫ φ Δ_g ψ dV_g = -∫ <Dφ,Dψ>_g dV_g; compare via polarization of
        // grad_norm_sq.
        let lhs = m.integrate(&phi.mul_pointwise(&m.laplacian(&psi, LaplacianConvention::Riemannian)));
        let sum = phi.add(&psi);
        let cross = m.integrate(&m.grad_norm_sq(&sum));
        let a = m.integrate(&m.grad_norm_sq(&phi));
        let b = m.integrate(&m.grad_norm_sq(&psi));
        let inner = 0.5 * (cross - a - b);
        assert_abs_diff_eq!(lhs + inner, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn product_round_volume_and_curvature() {
        let g = CollocationGrid::build(16, 10).unwrap();
        let m = ConformalMetric::product_round(&g);
        assert_abs_diff_eq!(m.volume(), 16.0 * PI * PI, epsilon = 1e-8);
        let r = m.scalar_curvature();
        assert_abs_diff_eq!(r.map(|x| x - 4.0).max_abs(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_factor_rejected() {
        let g = grid();
        let u = ScalarField::constant_sphere(&g, -8.0);
        assert!(matches!(
            ConformalMetric::sphere(&g, u, false),
            Err(GeometryError::DegenerateFactor { .. })
        ));
    }
}
