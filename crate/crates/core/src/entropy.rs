//! The entropy λ(g) and its first variation.
//!
//! λ(g) is the minimum of W(f) = ∫ (kR + k|Df|² + f) e^{-f} dV over the
//! constraint ∫ e^{-f} dV = V(g), where k = 1 for the Riemannian
//! convention and k = ½ for the Kähler one. The ground-state substitution
//! w = e^{-f/2} turns the Euler–Lagrange equation into
//!
//!   -4k Δ_g w + kR w - 2 w ln w = m w,   ∫ w² dV = V,
//!
//! with multiplier m = λ/V, solved by Newton iteration on the bordered
//! system in (w, m). All nodal equations are multiplied through by the
//! conformal density, which keeps every coefficient polynomial in the
//! collocation data.
//!
//! The exact first variation in a conformal direction h = χ g is
//!
//!   dλ(h) = ∫ (-k Δ_g χ + f χ) e^{-f} dV
//!           - (λ/V - 1) (∫ χ e^{-f} dV - ∫ χ dV),
//!
//! which reduces to the critical-point identity dλ = 0 at the round
//! metric and is cross-checked against finite differences in the tests.

use crate::error::EntropyError;
use crate::field::{LaplacianConvention, ScalarField};
use crate::metric::{ConformalMetric, MetricKind};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Nodal warm start for w (e.g. the previous flow step's minimizer).
    pub warm_start: Option<ScalarField>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 60,
            tol: 1e-11,
            warm_start: None,
        }
    }
}

/// Minimizer data for one metric and one Laplacian convention.
#[derive(Debug, Clone)]
pub struct EntropyProfile {
    pub convention: LaplacianConvention,
    pub lambda: f64,
    /// Lagrange multiplier m = λ/V.
    pub multiplier: f64,
    pub volume: f64,
    /// Minimizing potential f = -2 ln w.
    pub f: ScalarField,
    /// Ground state w = e^{-f/2}, positive.
    pub w: ScalarField,
    /// Max-norm residual of the minimizer equation (w-form).
    pub residual: f64,
    pub iterations: usize,
}

/// Flattened (vectorized) geometry data shared by the solver and the
/// variation formulas.
struct Vectorized {
    n_total: usize,
    /// Conformal density e^{2u} (product of factor densities).
    sigma: DVector<f64>,
    /// R e^{2u}.
    r_sigma: DVector<f64>,
    /// Base quadrature weights: ∫ φ dV₀ = q·φ.
    q: DVector<f64>,
}

fn vectorize(metric: &ConformalMetric) -> Vectorized {
    let n = metric.grid.n_nodes;
    let sigma_f = metric.sigma();
    let rsig_f = metric.scalar_curvature_times_sigma();
    let tau = 2.0 * std::f64::consts::PI;
    match metric.kind {
        MetricKind::Sphere { .. } => Vectorized {
            n_total: n,
            sigma: sigma_f.as_vector(),
            r_sigma: rsig_f.as_vector(),
            q: &metric.grid.weights * tau,
        },
        MetricKind::Product { .. } => {
            let nn = n * n;
            let q = DVector::from_fn(nn, |idx, _| {
                let (i, j) = (idx % n, idx / n);
                tau * tau * metric.grid.weights[i] * metric.grid.weights[j]
            });
            Vectorized {
                n_total: nn,
                sigma: DVector::from_column_slice(sigma_f.values.as_slice()),
                r_sigma: DVector::from_column_slice(rsig_f.values.as_slice()),
                q,
            }
        }
    }
}

/// Density-multiplied linear part: A w = -4k Δ₀-part(w) + k (Rσ) w, where
/// the Δ₀-part is e^{2u} Δ_g expressed on the base grid.
fn linear_operator(metric: &ConformalMetric, vz: &Vectorized, k: f64) -> DMatrix<f64> {
    let n = metric.grid.n_nodes;
    let lap = metric.grid.laplace0_matrix();
    let mut a = match &metric.kind {
        MetricKind::Sphere { .. } => lap * (-4.0 * k),
        MetricKind::Product { u1, u2 } => {
            let s1 = u1.as_vector().map(|x| (2.0 * x).exp());
            let s2 = u2.as_vector().map(|x| (2.0 * x).exp());
            let nn = n * n;
            let mut a = DMatrix::zeros(nn, nn);
            // σ₁σ₂ Δ_g w = σ₂ (Δ₁ w) + σ₁ (Δ₂ w); column-major vec index i + n j.
            for j in 0..n {
                for i in 0..n {
                    let row = i + n * j;
                    for ip in 0..n {
                        a[(row, ip + n * j)] += -4.0 * k * s2[j] * lap[(i, ip)];
                    }
                    for jp in 0..n {
                        a[(row, i + n * jp)] += -4.0 * k * s1[i] * lap[(j, jp)];
                    }
                }
            }
            a
        }
    };
    for i in 0..vz.n_total {
        a[(i, i)] += k * vz.r_sigma[i];
    }
    a
}

fn field_from_vec(metric: &ConformalMetric, v: &DVector<f64>) -> ScalarField {
    let n = metric.grid.n_nodes;
    if metric.is_product() {
        ScalarField::from_nodal_matrix(&metric.grid, DMatrix::from_column_slice(n, n, v.as_slice()))
    } else {
        ScalarField::from_nodal(&metric.grid, v.clone())
    }
}

/// Evaluate W(f) = ∫ (kR + k|Df|²_g + f) e^{-f} dV_g after checking the
/// measure constraint ∫ e^{-f} dV = V to within `constraint_tol`.
pub fn w_functional(
    metric: &ConformalMetric,
    f: &ScalarField,
    convention: LaplacianConvention,
    constraint_tol: f64,
) -> Result<f64, EntropyError> {
    f.check_finite("potential f")?;
    let k = convention.factor();
    let e_mf = f.map(|x| (-x).exp());
    let vol = metric.volume();
    let defect = (metric.integrate(&e_mf) - vol).abs();
    if defect > constraint_tol {
        return Err(EntropyError::ConstraintViolated {
            defect,
            tol: constraint_tol,
        });
    }
    let r = metric.scalar_curvature();
    let grad = metric.grad_norm_sq(f);
    let integrand = r
        .scaled(k)
        .add(&grad.scaled(k))
        .add(f)
        .mul_pointwise(&e_mf);
    Ok(metric.integrate(&integrand))
}

/// Solve the constrained minimizer equation and return λ(g) with its
/// ground state.
pub fn solve_minimizer(
    metric: &ConformalMetric,
    convention: LaplacianConvention,
    opts: &SolveOptions,
) -> Result<EntropyProfile, EntropyError> {
    let k = convention.factor();
    let vz = vectorize(metric);
    let nt = vz.n_total;
    let vol = vz.q.dot(&vz.sigma);
    let a = linear_operator(metric, &vz, k);

    let mut w = match &opts.warm_start {
        Some(ws) => {
            if ws.values.len() != nt {
                return Err(EntropyError::DirectionGridMismatch);
            }
            let v = DVector::from_column_slice(ws.values.as_slice());
            if v.iter().any(|&x| x <= 0.0) {
                return Err(EntropyError::PositivityLoss {
                    min_w: v.min(),
                });
            }
            v
        }
        None => DVector::from_element(nt, 1.0),
    };
    // m₀ = k ∫R dV / V, exact at w ≡ 1.
    let mut m = k * vz.q.dot(&vz.r_sigma) / vol;

    let mut trajectory = Vec::with_capacity(opts.max_iter);
    let mut residual = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let aw = &a * &w;
        let fvec = DVector::from_fn(nt, |i, _| {
            aw[i] - vz.sigma[i] * w[i] * (2.0 * w[i].ln() + m)
        });
        let cval = (0..nt)
            .map(|i| vz.q[i] * vz.sigma[i] * w[i] * w[i])
            .sum::<f64>()
            - vol;
        residual = (0..nt)
            .map(|i| (fvec[i] / vz.sigma[i]).abs())
            .fold(cval.abs(), f64::max);
        trajectory.push(residual);
        if residual < opts.tol {
            return Ok(finish(metric, convention, &vz, &a, &w, m, residual, iter));
        }

        let mut j = DMatrix::zeros(nt + 1, nt + 1);
        j.view_mut((0, 0), (nt, nt)).copy_from(&a);
        for i in 0..nt {
            j[(i, i)] -= vz.sigma[i] * (2.0 * (w[i].ln() + 1.0) + m);
            j[(i, nt)] = -vz.sigma[i] * w[i];
            j[(nt, i)] = 2.0 * vz.q[i] * vz.sigma[i] * w[i];
        }
        let mut rhs = DVector::zeros(nt + 1);
        for i in 0..nt {
            rhs[i] = -fvec[i];
        }
        rhs[nt] = -cval;
        let lu = j.lu();
        let delta = lu.solve(&rhs).ok_or(EntropyError::NonConvergence {
            max_iter: opts.max_iter,
            residual,
            trajectory: trajectory.clone(),
        })?;

        // Backtrack just enough to keep the ground state positive.
        let mut t = 1.0;
        let mut ok = false;
        for _ in 0..50 {
            if (0..nt).all(|i| w[i] + t * delta[i] > 0.0) {
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if !ok {
            let min_w = (0..nt).map(|i| w[i] + t * delta[i]).fold(f64::INFINITY, f64::min);
            return Err(EntropyError::PositivityLoss { min_w });
        }
        for i in 0..nt {
            w[i] += t * delta[i];
        }
        m += t * delta[nt];
    }
    Err(EntropyError::NonConvergence {
        max_iter: opts.max_iter,
        residual,
        trajectory,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    metric: &ConformalMetric,
    convention: LaplacianConvention,
    vz: &Vectorized,
    a: &DMatrix<f64>,
    w: &DVector<f64>,
    m: f64,
    residual: f64,
    iterations: usize,
) -> EntropyProfile {
    let nt = vz.n_total;
    let aw = a * w;
    // λ = ∫ (4k|Dw|² + kRw² - 2w² ln w) dV, evaluated through the
    // density-multiplied operator against the base quadrature.
    let lambda = (0..nt)
        .map(|i| vz.q[i] * (w[i] * aw[i] - 2.0 * vz.sigma[i] * w[i] * w[i] * w[i].ln()))
        .sum::<f64>();
    let volume = vz.q.dot(&vz.sigma);
    let w_field = field_from_vec(metric, w);
    let f_field = w_field.map(|x| -2.0 * x.ln());
    EntropyProfile {
        convention,
        lambda,
        multiplier: m,
        volume,
        f: f_field,
        w: w_field,
        residual,
        iterations,
    }
}

/// A variation direction together with the metric path realizing it.
#[derive(Debug, Clone)]
pub enum VariationDirection {
    /// h = χ g on the sphere; path e^{2u_t} = e^{2u} e^{tχ}.
    Conformal(ScalarField),
    /// Kähler-potential direction on the sphere; the path of densities
    /// σ_t = σ + (t/2) Δ₀ψ is exactly volume-preserving.
    Potential(ScalarField),
    /// h = g (uniform scaling).
    Scaling,
    /// Per-factor conformal direction h = χ₁ g₁ ⊕ χ₂ g₂ on the product.
    ProductConformal(ScalarField, ScalarField),
    /// Per-factor Kähler-potential direction on the product.
    ProductPotential(ScalarField, ScalarField),
}

impl VariationDirection {
    /// χ = δσ/σ at t = 0, on the metric's domain.
    pub fn chi(&self, metric: &ConformalMetric) -> Result<ScalarField, EntropyError> {
        let grid = &metric.grid;
        match self {
            VariationDirection::Conformal(chi) => {
                if metric.is_product() || chi.is_product() {
                    return Err(EntropyError::DirectionGridMismatch);
                }
                Ok(chi.clone())
            }
            VariationDirection::Potential(psi) => {
                if metric.is_product() {
                    return Err(EntropyError::DirectionGridMismatch);
                }
                let half_lap = psi.laplace0().scaled(0.5);
                let sigma = metric.sigma();
                Ok(ScalarField::from_nodal(
                    grid,
                    DVector::from_fn(grid.n_nodes, |i, _| {
                        half_lap.values[(i, 0)] / sigma.values[(i, 0)]
                    }),
                ))
            }
            // χ = δσ/σ = tr_g h / 2: 1 on the surface, 2 on the product.
            VariationDirection::Scaling => Ok(if metric.is_product() {
                ScalarField::from_nodal_matrix(
                    grid,
                    DMatrix::from_element(grid.n_nodes, grid.n_nodes, 2.0),
                )
            } else {
                ScalarField::constant_sphere(grid, 1.0)
            }),
            VariationDirection::ProductConformal(c1, c2) => {
                if !metric.is_product() {
                    return Err(EntropyError::DirectionGridMismatch);
                }
                Ok(ScalarField::factor_sum(c1, c2))
            }
            VariationDirection::ProductPotential(p1, p2) => {
                if !metric.is_product() {
                    return Err(EntropyError::DirectionGridMismatch);
                }
                let (u1, u2) = metric.u_factors();
                let chi_factor = |psi: &ScalarField, u: &ScalarField| {
                    let half_lap = psi.laplace0().scaled(0.5);
                    ScalarField::from_nodal(
                        grid,
                        DVector::from_fn(grid.n_nodes, |i, _| {
                            half_lap.values[(i, 0)] * (-2.0 * u.values[(i, 0)]).exp()
                        }),
                    )
                };
                Ok(ScalarField::factor_sum(
                    &chi_factor(p1, u1),
                    &chi_factor(p2, u2),
                ))
            }
        }
    }

    /// Per-factor zonal χ_i on the product, where h = χ₁g₁ ⊕ χ₂g₂.
    /// None for sphere-only directions.
    pub fn factor_chis(
        &self,
        metric: &ConformalMetric,
    ) -> Option<(ScalarField, ScalarField)> {
        if !metric.is_product() {
            return None;
        }
        let grid = &metric.grid;
        match self {
            VariationDirection::Scaling => Some((
                ScalarField::constant_sphere(grid, 1.0),
                ScalarField::constant_sphere(grid, 1.0),
            )),
            VariationDirection::ProductConformal(c1, c2) => Some((c1.clone(), c2.clone())),
            VariationDirection::ProductPotential(p1, p2) => {
                let (u1, u2) = metric.u_factors();
                let chi_factor = |psi: &ScalarField, u: &ScalarField| {
                    let half_lap = psi.laplace0().scaled(0.5);
                    ScalarField::from_nodal(
                        grid,
                        DVector::from_fn(grid.n_nodes, |i, _| {
                            half_lap.values[(i, 0)] * (-2.0 * u.values[(i, 0)]).exp()
                        }),
                    )
                };
                Some((chi_factor(p1, u1), chi_factor(p2, u2)))
            }
            _ => None,
        }
    }

    /// The metric at parameter t along this direction's path.
    pub fn metric_at(
        &self,
        metric: &ConformalMetric,
        t: f64,
    ) -> Result<ConformalMetric, EntropyError> {
        let grid = &metric.grid;
        // Exponential path e^{2u_t} = e^{2u} e^{tχ}: tangent h = χg, stays
        // in the metric class for every t, and second derivatives along it
        // match the closed forms used by the product scaling oracle.
        let conformal_path = |u: &ScalarField, chi: &ScalarField| -> Result<ScalarField, EntropyError> {
            let mut out = u.clone();
            for (o, c) in out.values.iter_mut().zip(chi.values.iter()) {
                *o += 0.5 * t * c;
            }
            Ok(out)
        };
        let potential_path = |u: &ScalarField, psi: &ScalarField| -> Result<ScalarField, EntropyError> {
            let half_lap = psi.laplace0().scaled(0.5);
            let mut out = u.clone();
            for i in 0..u.values.len() {
                let sigma_t = (2.0 * u.values[i]).exp() + t * half_lap.values[i];
                if sigma_t <= 0.0 {
                    return Err(EntropyError::StencilOutOfClass { t });
                }
                out.values[i] = 0.5 * sigma_t.ln();
            }
            Ok(out)
        };
        match self {
            VariationDirection::Conformal(chi) => {
                let u = conformal_path(metric.u_sphere(), chi)?;
                Ok(ConformalMetric::sphere(grid, u, false)?)
            }
            VariationDirection::Potential(psi) => {
                let u = potential_path(metric.u_sphere(), psi)?;
                Ok(ConformalMetric::sphere(grid, u, false)?)
            }
            VariationDirection::Scaling => {
                let shift = 0.5 * (1.0 + t).ln();
                if metric.is_product() {
                    let (u1, u2) = metric.u_factors();
                    Ok(ConformalMetric::product(
                        grid,
                        u1.map(|x| x + shift),
                        u2.map(|x| x + shift),
                        false,
                    )?)
                } else {
                    Ok(ConformalMetric::sphere(
                        grid,
                        metric.u_sphere().map(|x| x + shift),
                        false,
                    )?)
                }
            }
            VariationDirection::ProductConformal(c1, c2) => {
                let (u1, u2) = metric.u_factors();
                Ok(ConformalMetric::product(
                    grid,
                    conformal_path(u1, c1)?,
                    conformal_path(u2, c2)?,
                    false,
                )?)
            }
            VariationDirection::ProductPotential(p1, p2) => {
                let (u1, u2) = metric.u_factors();
                Ok(ConformalMetric::product(
                    grid,
                    potential_path(u1, p1)?,
                    potential_path(u2, p2)?,
                    false,
                )?)
            }
        }
    }
}

/// Exact first variation dλ(h), using the solved profile. For the sphere
/// (h = χ g) the curvature and gradient terms cancel pointwise; on the
/// product the per-factor direction h = χ₁g₁ ⊕ χ₂g₂ leaves the cross
/// terms χ₂(R₁ + |D₁f|²) + χ₁(R₂ + |D₂f|²). The Lagrange multiplier of
/// the ∫e^{-f}dV = V(g) constraint is λ/V - 1.
pub fn first_variation(
    metric: &ConformalMetric,
    profile: &EntropyProfile,
    direction: &VariationDirection,
) -> Result<f64, EntropyError> {
    let k = profile.convention.factor();
    let chi = direction.chi(metric)?;
    let lap_chi = metric.laplacian(&chi, LaplacianConvention::Riemannian);
    let e_mf = profile.w.mul_pointwise(&profile.w);
    let mut integrand = lap_chi.scaled(-k).add(&profile.f.mul_pointwise(&chi));
    if metric.is_product() {
        let (c1, c2) = direction
            .factor_chis(metric)
            .ok_or(EntropyError::DirectionGridMismatch)?;
        let (r1, r2) = metric.factor_scalar_curvatures();
        let (g1, g2) = metric.factor_grad_norm_sq(&profile.f);
        let n = metric.grid.n_nodes;
        let cross = DMatrix::from_fn(n, n, |i, j| {
            c2.values[(j, 0)] * (r1[i] + g1.values[(i, j)])
                + c1.values[(i, 0)] * (r2[j] + g2.values[(i, j)])
        });
        integrand = integrand.add(&ScalarField::from_nodal_matrix(&metric.grid, cross).scaled(k));
    }
    let t_main = metric.integrate(&integrand.mul_pointwise(&e_mf));
    let t_defect = metric.integrate(&chi.mul_pointwise(&e_mf)) - metric.integrate(&chi);
    Ok(t_main - (profile.multiplier - 1.0) * t_defect)
}

/// Central finite-difference derivative of λ along a direction's path,
/// Richardson-extrapolated from step sizes {eps, eps/2}. Returns the
/// extrapolated value and an error estimate. `order` is 1 for dλ/dt and
/// 2 for d²λ/dt².
pub fn fd_lambda_derivative(
    metric: &ConformalMetric,
    direction: &VariationDirection,
    convention: LaplacianConvention,
    eps: f64,
    order: usize,
    opts: &SolveOptions,
) -> Result<(f64, f64), EntropyError> {
    assert!(order == 1 || order == 2, "order must be 1 or 2");
    let lam_at = |t: f64| -> Result<f64, EntropyError> {
        let m = direction.metric_at(metric, t)?;
        Ok(solve_minimizer(&m, convention, opts)?.lambda)
    };
    let lam0 = if order == 2 { lam_at(0.0)? } else { 0.0 };
    let stencil = |h: f64| -> Result<f64, EntropyError> {
        let lp = lam_at(h)?;
        let lm = lam_at(-h)?;
        Ok(if order == 1 {
            (lp - lm) / (2.0 * h)
        } else {
            (lp - 2.0 * lam0 + lm) / (h * h)
        })
    };
    let d1 = stencil(eps)?;
    let d2 = stencil(0.5 * eps)?;
    let extrap = (4.0 * d2 - d1) / 3.0;
    Ok((extrap, (d2 - d1).abs() / 3.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CollocationGrid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid() -> Arc<CollocationGrid> {
        CollocationGrid::build(32, 20).unwrap()
    }

    fn bumpy_metric(g: &Arc<CollocationGrid>) -> ConformalMetric {
        let u = ScalarField::from_nodal(
            g,
            g.legendre(2).scale(0.12) + g.legendre(3).scale(-0.07) + g.legendre(1).scale(0.05),
        );
        ConformalMetric::sphere(g, u, true).unwrap()
    }

    #[test]
    fn round_sphere_lambda_both_conventions() {
        let g = grid();
        let m = ConformalMetric::round(&g);
        let opts = SolveOptions::default();
        let pr = solve_minimizer(&m, LaplacianConvention::Riemannian, &opts).unwrap();
        assert_abs_diff_eq!(pr.lambda, 8.0 * PI, epsilon = 1e-9);
        assert_abs_diff_eq!(pr.multiplier, 2.0, epsilon = 1e-10);
        assert!(pr.f.max_abs() < 1e-9);
        let pc = solve_minimizer(&m, LaplacianConvention::Kahler, &opts).unwrap();
        assert_abs_diff_eq!(pc.lambda, 4.0 * PI, epsilon = 1e-9);
    }

    #[test]
    fn round_product_lambda() {
        let g = CollocationGrid::build(12, 8).unwrap();
        let m = ConformalMetric::product_round(&g);
        let p = solve_minimizer(&m, LaplacianConvention::Riemannian, &SolveOptions::default())
            .unwrap();
        // λ = ∫ R dV = 4 · 16π² at the round product (f ≡ 0).
        assert_abs_diff_eq!(p.lambda, 64.0 * PI * PI, epsilon = 1e-6);
        assert!(p.f.max_abs() < 1e-8);
    }

    #[test]
    fn minimizer_residual_and_constraint() {
        let g = grid();
        let m = bumpy_metric(&g);
        let p = solve_minimizer(&m, LaplacianConvention::Riemannian, &SolveOptions::default())
            .unwrap();
        assert!(p.residual < 1e-11, "residual = {:.3e}", p.residual);
        let e_mf = p.f.map(|x| (-x).exp());
        assert_abs_diff_eq!(m.integrate(&e_mf), m.volume(), epsilon = 1e-9);
        // multiplier = λ/V at the solution
        assert_abs_diff_eq!(p.multiplier, p.lambda / p.volume, epsilon = 1e-9);
    }

    #[test]
    fn w_functional_at_minimizer_equals_lambda() {
        let g = grid();
        let m = bumpy_metric(&g);
        let p = solve_minimizer(&m, LaplacianConvention::Kahler, &SolveOptions::default())
            .unwrap();
        let w = w_functional(&m, &p.f, LaplacianConvention::Kahler, 1e-8).unwrap();
        assert_abs_diff_eq!(w, p.lambda, epsilon = 1e-8);
    }

    #[test]
    fn w_functional_rejects_unnormalized_f() {
        let g = grid();
        let m = ConformalMetric::round(&g);
        let f = ScalarField::constant_sphere(&g, 0.5);
        assert!(matches!(
            w_functional(&m, &f, LaplacianConvention::Riemannian, 1e-8),
            Err(EntropyError::ConstraintViolated { .. })
        ));
    }

    #[test]
    fn minimizer_beats_competitors() {
        // λ is a minimum: any constraint-satisfying competitor gives a
        // larger W.
        let g = grid();
        let m = bumpy_metric(&g);
        let p = solve_minimizer(&m, LaplacianConvention::Riemannian, &SolveOptions::default())
            .unwrap();
        // competitor: perturb f, then restore the constraint by a shift
        let pert = p.f.add(&ScalarField::unit_mode(&g, 2).scaled(0.1));
        let e_mf = pert.map(|x| (-x).exp());
        let shift = (m.integrate(&e_mf) / m.volume()).ln();
        let comp = pert.map(|x| x + shift);
        let w = w_functional(&m, &comp, LaplacianConvention::Riemannian, 1e-8).unwrap();
        assert!(w > p.lambda + 1e-6, "W = {w}, λ = {}", p.lambda);
    }

    #[test]
    fn first_variation_matches_finite_differences() {
        let g = grid();
        let m = bumpy_metric(&g);
        let opts = SolveOptions::default();
        for conv in [LaplacianConvention::Riemannian, LaplacianConvention::Kahler] {
            let p = solve_minimizer(&m, conv, &opts).unwrap();
            let dir = VariationDirection::Conformal(ScalarField::from_nodal(
                &g,
                g.legendre(2).scale(0.3) + g.legendre(4).scale(0.15),
            ));
            let exact = first_variation(&m, &p, &dir).unwrap();
            let (fd, err) = fd_lambda_derivative(&m, &dir, conv, 1e-4, 1, &opts).unwrap();
            assert_abs_diff_eq!(exact, fd, epsilon = (1e-7_f64).max(20.0 * err));
        }
    }

    #[test]
    fn first_variation_vanishes_at_round() {
        let g = grid();
        let m = ConformalMetric::round(&g);
        let p = solve_minimizer(&m, LaplacianConvention::Riemannian, &SolveOptions::default())
            .unwrap();
        let dir = VariationDirection::Potential(ScalarField::unit_mode(&g, 3));
        let d = first_variation(&m, &p, &dir).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn scaling_direction_derivative() {
        // λ_r(c g) = λ_r(g) + (1 - c) ∫R dV·(...): oracle by FD only.
        let g = grid();
        let m = bumpy_metric(&g);
        let p = solve_minimizer(&m, LaplacianConvention::Riemannian, &SolveOptions::default())
            .unwrap();
        let exact = first_variation(&m, &p, &VariationDirection::Scaling).unwrap();
        let (fd, err) = fd_lambda_derivative(
            &m,
            &VariationDirection::Scaling,
            LaplacianConvention::Riemannian,
            1e-4,
            1,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(exact, fd, epsilon = (1e-6_f64).max(20.0 * err));
        let _ = p;
    }

    #[test]
    fn warm_start_converges_faster() {
        let g = grid();
        let m = bumpy_metric(&g);
        let cold = solve_minimizer(&m, LaplacianConvention::Riemannian, &SolveOptions::default())
            .unwrap();
        let warm = solve_minimizer(
            &m,
            LaplacianConvention::Riemannian,
            &SolveOptions {
                warm_start: Some(cold.w.clone()),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(warm.iterations <= 1);
        assert_abs_diff_eq!(warm.lambda, cold.lambda, epsilon = 1e-10);
    }

    #[test]
    fn product_first_variation_matches_fd() {
        let g = CollocationGrid::build(12, 8).unwrap();
        let u1 = ScalarField::from_nodal(&g, g.legendre(2).scale(0.1));
        let u2 = ScalarField::from_nodal(&g, g.legendre(2).scale(-0.06));
        let m = ConformalMetric::product(&g, u1, u2, true).unwrap();
        let opts = SolveOptions::default();
        let p = solve_minimizer(&m, LaplacianConvention::Riemannian, &opts).unwrap();
        let dir = VariationDirection::ProductConformal(
            ScalarField::constant_sphere(&g, 1.0),
            ScalarField::constant_sphere(&g, -1.0),
        );
        let exact = first_variation(&m, &p, &dir).unwrap();
        let (fd, err) = fd_lambda_derivative(&m, &dir, LaplacianConvention::Riemannian, 1e-4, 1, &opts)
            .unwrap();
        assert_abs_diff_eq!(exact, fd, epsilon = (1e-5_f64).max(20.0 * err));
    }
}
