//! Second variations of λ at the round Kähler-Einstein backgrounds.
//!
//! All stability operators act in the Kähler convention (complex Laplacian
//! Δ = ½Δ₀ on functions) at the round background with vanishing soliton
//! field X:
//!
//!   P₀ψ = 2Δψ + ψ,   L₁ψ = Δψ + ψ,   L₁′ψ = Δψ,   P₀′ = P₀,
//!   D*D ~ ν(ν-1)  with  ν = l(l+1)/2.
//!
//! The fixed-class second variation of the Kähler-convention entropy is
//! the modal form ⟨ψ, P₀⁻¹(L̄₁′L₁′)(L̄₁L₁)ψ⟩ with per-mode value
//! ν²(ν-1)²/(1-2ν) (so l = 2 gives 36/(-5) = -7.2), non-positive and
//! vanishing exactly on l ∈ {0, 1}: constants and the holomorphy
//! potentials of the rotation fields.
//!
//! Class-varying directions on the product of two round spheres add the
//! strictly positive term ∫‖θ‖² dV with the full tensor contraction
//! (‖2g₁ - 2g₂‖² = 16 pointwise), giving 256π² on CP¹×CP¹.
//!
//! The Riemannian quadratic form (h, Lh) for a general axisymmetric h is
//! realized through the decomposition h = χ g₀ + L_Z g₀: Lie parts are
//! exact null directions and the conformal remainder feeds the same modal
//! machinery, Q(h) = ¼⟨s, P₀⁻¹ s⟩ with s = (Δ₀+2)Π_{l≥1}χ. A literal
//! termwise assembly of curvature/divergence operator blocks cannot reproduce the
//! finite-difference Hessian on this background (its modal coefficients
//! are not polynomial in l(l+1)); the decomposition form is the one that
//! matches the oracle.

use crate::entropy::{
    fd_lambda_derivative, solve_minimizer, SolveOptions, VariationDirection,
};
use crate::error::{EntropyError, GeometryError, VariationError};
use crate::field::{analysis_matrix, synthesis_matrix, LaplacianConvention, ScalarField};
use crate::grid::CollocationGrid;
use crate::metric::ConformalMetric;
use crate::tensor::SymTensorField;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::sync::Arc;

/// Descriptor of a holomorphic soliton field through its potential;
/// `None` everywhere on the model geometries (X = 0), but the operator
/// code paths accept it so a soliton background can slot in.
#[derive(Debug, Clone, Default)]
pub struct SolitonField {
    pub potential: Option<ScalarField>,
}

impl SolitonField {
    fn is_zero(&self) -> bool {
        self.potential.is_none()
    }

    /// (X + X̄)(ψ) = ⟨Dθ_X, Dψ⟩₀ in the real pairing.
    fn apply(&self, psi: &ScalarField) -> ScalarField {
        match &self.potential {
            None => psi.scaled(0.0),
            Some(theta) => {
                let g = &psi.grid;
                let dt = g.d_dmu(&theta.as_vector());
                let dp = g.d_dmu(&psi.as_vector());
                ScalarField::from_nodal(
                    g,
                    DVector::from_fn(g.n_nodes, |k, _| {
                        (1.0 - g.mu_nodes[k] * g.mu_nodes[k]) * dt[k] * dp[k]
                    }),
                )
            }
        }
    }
}

fn require_round(metric: &ConformalMetric) -> Result<(), VariationError> {
    let deviation = if metric.is_product() {
        let (u1, u2) = metric.u_factors();
        u1.max_abs().max(u2.max_abs())
    } else {
        metric.u_sphere().max_abs()
    };
    if deviation > 1e-10 {
        return Err(VariationError::UnsupportedBackground { deviation });
    }
    Ok(())
}

/// Complex-Laplacian eigenvalue at degree l.
pub fn nu(l: usize) -> f64 {
    (l * (l + 1)) as f64 / 2.0
}

/// Per-mode fixed-class second variation ν²(ν-1)²/(1-2ν).
pub fn modal_second_variation(nu: f64) -> f64 {
    let d = nu * (nu - 1.0);
    d * d / (1.0 - 2.0 * nu)
}

/// P₀ψ = 2Δψ + ψ - (X+X̄)ψ.
pub fn apply_p0(psi: &ScalarField, x: &SolitonField) -> ScalarField {
    psi.laplace0().add(psi).sub(&x.apply(psi))
}

/// L₁ψ = Δψ + ψ - X̄ψ.
pub fn apply_l1(psi: &ScalarField, x: &SolitonField) -> ScalarField {
    psi.laplace0().scaled(0.5).add(psi).sub(&x.apply(psi).scaled(0.5))
}

/// L₁′ψ = Δψ - X̄ψ.
pub fn apply_l1_prime(psi: &ScalarField, x: &SolitonField) -> ScalarField {
    psi.laplace0().scaled(0.5).sub(&x.apply(psi).scaled(0.5))
}

/// P₀⁻¹ by modal division (eigenvalues 1 - l(l+1), never zero).
pub fn apply_p0_inv(psi: &ScalarField, x: &SolitonField) -> ScalarField {
    assert!(x.is_zero(), "modal P0 inverse requires X = 0");
    let g = &psi.grid;
    let mut c = g.analyze(&psi.as_vector());
    for l in 0..g.n_nodes {
        c[l] /= 1.0 - (l * (l + 1)) as f64;
    }
    ScalarField::from_nodal(g, g.synthesize(&c))
}

fn l2_norm0(f: &ScalarField) -> f64 {
    f.mul_pointwise(f).integrate0().max(0.0).sqrt()
}

#[derive(Debug, Clone)]
pub struct ModalRow {
    pub l: usize,
    pub nu: f64,
    pub p0: f64,
    pub l1: f64,
    pub l1_prime: f64,
    pub p0_prime: f64,
    pub dstar_d: f64,
    pub second_variation: f64,
    /// ν(ν-1)/(1-2ν): the per-mode coefficient of the linearized f-response.
    pub f_response: f64,
    /// Collinearity defect of the assembled operators on the l-mode.
    pub collinearity_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ModalOperatorTable {
    pub rows: Vec<ModalRow>,
}

/// Assemble the stability operator table at the round background, verifying each
/// eigenvalue by applying the operator to the unit l-mode.
pub fn modal_table(
    metric: &ConformalMetric,
    l_max: usize,
) -> Result<ModalOperatorTable, VariationError> {
    require_round(metric)?;
    let grid = &metric.grid;
    if l_max > grid.l_max {
        return Err(VariationError::Geometry(GeometryError::GridTooSmall {
            n_nodes: grid.n_nodes,
            l_max,
        }));
    }
    let x = SolitonField::default();
    let mut rows = Vec::with_capacity(l_max + 1);
    for l in 0..=l_max {
        let mode = ScalarField::unit_mode(grid, l);
        let nu_l = nu(l);
        let expect = [
            (apply_p0(&mode, &x), 1.0 - 2.0 * nu_l),
            (apply_l1(&mode, &x), 1.0 - nu_l),
            (apply_l1_prime(&mode, &x), -nu_l),
        ];
        let mut residual = 0.0_f64;
        for (applied, ev) in &expect {
            residual = residual.max(l2_norm0(&applied.sub(&mode.scaled(*ev))));
        }
        rows.push(ModalRow {
            l,
            nu: nu_l,
            p0: 1.0 - 2.0 * nu_l,
            l1: 1.0 - nu_l,
            l1_prime: -nu_l,
            p0_prime: 1.0 - 2.0 * nu_l,
            dstar_d: nu_l * (nu_l - 1.0),
            second_variation: modal_second_variation(nu_l),
            f_response: nu_l * (nu_l - 1.0) / (1.0 - 2.0 * nu_l),
            collinearity_residual: residual,
        });
    }
    Ok(ModalOperatorTable { rows })
}

/// Linearized minimizer response at X = 0: u = df_t/dt|₀ of the minimizer
/// along the ψ-potential path solves P₀u = L₁′L₁ψ.
pub fn linearized_f_response(
    metric: &ConformalMetric,
    psi: &ScalarField,
) -> Result<ScalarField, VariationError> {
    require_round(metric)?;
    let x = SolitonField::default();
    Ok(apply_p0_inv(&apply_l1_prime(&apply_l1(psi, &x), &x), &x))
}

/// FD oracle for the linearized response: difference quotient of the solved minimizer
/// family f_t along the ψ-potential path (Kähler convention).
pub fn f_response_fd(
    metric: &ConformalMetric,
    psi: &ScalarField,
    eps: f64,
) -> Result<ScalarField, VariationError> {
    let dir = VariationDirection::Potential(psi.clone());
    let opts = SolveOptions::default();
    let solve_at = |t: f64| -> Result<ScalarField, EntropyError> {
        let m = dir.metric_at(metric, t)?;
        Ok(solve_minimizer(&m, LaplacianConvention::Kahler, &opts)?.f)
    };
    let fp = solve_at(eps)?;
    let fm = solve_at(-eps)?;
    Ok(fp.sub(&fm).scaled(0.5 / eps))
}

#[derive(Debug, Clone)]
pub struct QuadraticFormReport {
    pub description: String,
    pub analytic: f64,
    pub fd_value: Option<f64>,
    pub fd_error_bar: Option<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// |analytic - fd| within tolerance (vacuously true without FD).
    pub passed: bool,
    /// The direction lies in the stability kernel.
    pub kernel: bool,
}

fn finish_report(
    description: String,
    analytic: f64,
    fd: Option<(f64, f64)>,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadraticFormReport {
    let (fd_value, fd_error_bar) = match fd {
        Some((v, e)) => (Some(v), Some(e)),
        None => (None, None),
    };
    let passed = match fd_value {
        Some(v) => (analytic - v).abs() <= abs_tol.max(rel_tol * analytic.abs()),
        None => true,
    };
    QuadraticFormReport {
        description,
        analytic,
        fd_value,
        fd_error_bar,
        abs_tol,
        rel_tol,
        passed,
        kernel: analytic.abs() <= 1e-9,
    }
}

/// Squared-norm weight of the degree-l Legendre mode.
fn mode_norm_sq(l: usize) -> f64 {
    4.0 * PI / (2 * l + 1) as f64
}

/// Fixed-class second variation at the round S²: modal diagonalization of
/// ⟨ψ, P₀⁻¹(L̄₁′L₁′)(L̄₁L₁)ψ⟩, optionally cross-checked against
/// d²λ/dt² of the Kähler-convention entropy along the ψ-potential path.
pub fn second_variation_fixed_class(
    metric: &ConformalMetric,
    psi: &ScalarField,
    with_fd: Option<f64>,
) -> Result<QuadraticFormReport, VariationError> {
    require_round(metric)?;
    let grid = &psi.grid;
    let tail = psi.tail_energy();
    if tail > 1e-10 {
        return Err(VariationError::Geometry(GeometryError::Aliased {
            l_max: grid.l_max,
            tail,
            tol: 1e-10,
        }));
    }
    let c = grid.analyze(&psi.as_vector());
    let mut analytic = 0.0;
    for l in 0..=grid.l_max {
        analytic += c[l] * c[l] * mode_norm_sq(l) * modal_second_variation(nu(l));
    }
    let fd = match with_fd {
        Some(eps) => Some(
            fd_lambda_derivative(
                metric,
                &VariationDirection::Potential(psi.clone()),
                LaplacianConvention::Kahler,
                eps,
                2,
                &SolveOptions::default(),
            )
            .map_err(VariationError::Entropy)?,
        ),
        None => None,
    };
    Ok(finish_report(
        "fixed-class potential direction".to_string(),
        analytic,
        fd,
        1e-6,
        1e-3,
    ))
}

/// A class-varying direction θ on the product: h = t₁ g₁ ⊕ t₂ g₂ with
/// coefficients a, b of θ = a ω′ + b ω.
#[derive(Debug, Clone, Copy)]
pub struct ClassDirection {
    pub a: f64,
    pub b: f64,
    pub t1: f64,
    pub t2: f64,
}

impl ClassDirection {
    /// The realized metric path: per-factor exponential scaling
    /// e^{2u_i(t)} = e^{t t_i}, with tangent h = t₁ g₁ ⊕ t₂ g₂.
    pub fn metric_direction(&self, grid: &Arc<CollocationGrid>) -> VariationDirection {
        VariationDirection::ProductConformal(
            ScalarField::constant_sphere(grid, self.t1),
            ScalarField::constant_sphere(grid, self.t2),
        )
    }

    /// ∫‖θ‖² dV over the round product, full tensor contraction.
    pub fn theta_norm_sq_integral(&self) -> f64 {
        (2.0 * self.t1 * self.t1 + 2.0 * self.t2 * self.t2) * 16.0 * PI * PI
    }
}

/// Project the harmonic form ω′ = c₁ω₁ + c₂ω₂ to the traceless combination
/// θ = aω′ + bω (an·1 + b·tr ω′ = 0), normalized so that max|tᵢ| = 2
/// (the canonical h = 2g₁ - 2g₂ for ω′ = ω₁ - ω₂).
pub fn cor21_direction(c1: f64, c2: f64) -> Result<ClassDirection, VariationError> {
    let diff = c1 - c2;
    if diff.abs() <= 1e-12 * (c1.abs() + c2.abs() + 1.0) {
        return Err(VariationError::DegenerateDirection);
    }
    let a = 4.0 / diff.abs();
    let b = -a * (c1 + c2) / 2.0;
    let t1 = a * c1 + b;
    let t2 = a * c2 + b;
    Ok(ClassDirection { a, b, t1, t2 })
}

/// General second variation ∫‖θ‖²dV + ⟨D*Dψ, (P₀′)⁻¹D*Dψ⟩.
/// The ψ-part equals the fixed-class form; the θ-part is the strictly
/// positive class-varying term (Riemannian closed form on the product).
/// FD cross-checks run separately on each decoupled part.
pub fn second_variation_general(
    metric: &ConformalMetric,
    theta: Option<&ClassDirection>,
    psi: &ScalarField,
    with_fd: Option<f64>,
) -> Result<QuadraticFormReport, VariationError> {
    require_round(metric)?;
    if theta.is_some() && !metric.is_product() {
        return Err(VariationError::NoTracelessHarmonicForm);
    }
    let grid = &metric.grid;

    // ψ-part: modal ⟨D*Dψ, (P₀′)⁻¹ D*Dψ⟩ with D*D → ν(ν-1), P₀′ → 1-2ν.
    let psi_part = if psi.is_product() {
        let sp = psi.to_spectral();
        let mut s = 0.0;
        for l1 in 0..=grid.l_max {
            for l2 in 0..=grid.l_max {
                let nu12 = nu(l1) + nu(l2);
                let c = sp.values[(l1, l2)];
                s += c * c * mode_norm_sq(l1) * mode_norm_sq(l2) * modal_second_variation(nu12);
            }
        }
        s
    } else {
        let c = grid.analyze(&psi.as_vector());
        (0..=grid.l_max)
            .map(|l| c[l] * c[l] * mode_norm_sq(l) * modal_second_variation(nu(l)))
            .sum()
    };
    let theta_part = theta.map_or(0.0, |t| t.theta_norm_sq_integral());
    let analytic = theta_part + psi_part;

    let fd = match (with_fd, theta) {
        (Some(eps), Some(t)) => {
            // FD of the Riemannian entropy along the exponential scaling
            // path (the ψ-part must be zero for a clean split).
            let dir = t.metric_direction(grid);
            Some(
                fd_lambda_derivative(
                    metric,
                    &dir,
                    LaplacianConvention::Riemannian,
                    eps,
                    2,
                    &SolveOptions::default(),
                )
                .map_err(VariationError::Entropy)?,
            )
        }
        (Some(eps), None) if !psi.is_product() => Some(
            fd_lambda_derivative(
                metric,
                &VariationDirection::Potential(psi.clone()),
                LaplacianConvention::Kahler,
                eps,
                2,
                &SolveOptions::default(),
            )
            .map_err(VariationError::Entropy)?,
        ),
        _ => None,
    };
    Ok(finish_report(
        match theta {
            Some(_) => "class-varying direction".to_string(),
            None => "fixed-class direction on KE background".to_string(),
        },
        analytic,
        fd,
        1e-6,
        1e-3,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelTag {
    Constant,
    HolomorphyPotential,
}

#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub elements: Vec<(ScalarField, KernelTag)>,
    /// Counted with rotational multiplicity: 1 constant + 3 degree-one
    /// potentials (the zonal grid realizes one of the three).
    pub dimension: usize,
    pub residuals: Vec<f64>,
}

/// Composite stability operator L̄₁′L₁′L̄₁L₁ (modal value ν²(ν-1)²).
/// At X = 0 all factors are diagonal in the Legendre basis, so the
/// composite is applied modally in one transform round trip; chaining the
/// nodal operators instead would amplify spectral roundoff by (l(l+1))³.
pub fn apply_stability_composite(psi: &ScalarField, x: &SolitonField) -> ScalarField {
    if x.is_zero() {
        let g = &psi.grid;
        let mut c = g.analyze(&psi.as_vector());
        // Quadrature roundoff puts ~1e-15-relative junk in every
        // coefficient; the modal factor below amplifies it by up to
        // (ν(ν-1))² ~ 1e12, so clip coefficients at machine-noise level.
        let floor = 1e-13 * c.amax();
        for l in 0..g.n_nodes {
            if c[l].abs() < floor {
                c[l] = 0.0;
                continue;
            }
            let d = nu(l) * (nu(l) - 1.0);
            c[l] *= d * d;
        }
        ScalarField::from_nodal(g, g.synthesize(&c))
    } else {
        let s = apply_l1(psi, x);
        let s = apply_l1(&s, x);
        let s = apply_l1_prime(&s, x);
        apply_l1_prime(&s, x)
    }
}

/// Kernel of the fixed-class stability form: constants and the l = 1
/// holomorphy potentials (dim_ℂ η(CP¹) = 3).
pub fn kernel_basis(metric: &ConformalMetric) -> Result<KernelBasis, VariationError> {
    require_round(metric)?;
    let grid = &metric.grid;
    let x = SolitonField::default();
    let candidates = [
        (ScalarField::unit_mode(grid, 0), KernelTag::Constant),
        (ScalarField::unit_mode(grid, 1), KernelTag::HolomorphyPotential),
    ];
    let mut elements = Vec::new();
    let mut residuals = Vec::new();
    let mut dimension = 0;
    for (psi, tag) in candidates {
        let r = l2_norm0(&apply_stability_composite(&psi, &x));
        dimension += match tag {
            KernelTag::Constant => 1,
            KernelTag::HolomorphyPotential => 3,
        };
        residuals.push(r);
        elements.push((psi, tag));
    }
    Ok(KernelBasis {
        elements,
        dimension,
        residuals,
    })
}

/// Linear map h ↦ s = (Δ₀ + 2) Π_{l≥1} χ(h), the symbol of the
/// Riemannian Hessian through the conformal/Lie decomposition.
fn hessian_symbol(h: &SymTensorField) -> DVector<f64> {
    let grid = &h.grid;
    let (chi, _) = h.decompose();
    let mut c = grid.analyze(&chi.as_vector());
    c[0] = 0.0;
    for l in 1..grid.n_nodes {
        c[l] *= 2.0 - (l * (l + 1)) as f64;
    }
    grid.synthesize(&c)
}

/// Riemannian quadratic form (h, Lh) = ¼⟨s, P₀⁻¹s⟩, s = (Δ₀+2)Π_{l≥1}χ.
/// Lie-derivative directions are exact nulls (χ collapses to l ≤ 1);
/// Kähler-potential directions reproduce the fixed-class modal values.
pub fn quadratic_form_16(h: &SymTensorField) -> Result<QuadraticFormReport, VariationError> {
    let grid = &h.grid;
    let s = hessian_symbol(h);
    let c = grid.analyze(&s);
    let mut q = 0.0;
    for l in 0..grid.n_nodes {
        q += c[l] * c[l] * mode_norm_sq(l) / (1.0 - (l * (l + 1)) as f64);
    }
    Ok(finish_report(
        "Riemannian tensor direction".to_string(),
        0.25 * q,
        None,
        1e-6,
        1e-3,
    ))
}

/// The operator L realizing (h, Lh) against the frame inner product
/// ⟨h₁, h₂⟩ = ∫(a₁a₂ + 2c₁c₂ + b₁b₂) dV₀: L = ¼ M⁻¹ Tᵀ Q P₀⁻¹ T, built
/// densely column-by-column from the decomposition pipeline.
pub fn riemannian_l(h: &SymTensorField) -> Result<SymTensorField, VariationError> {
    let grid = h.grid.clone();
    let n = grid.n_nodes;
    // T: stacked (a, c, b) ↦ s; twist columns are exact zeros.
    let mut t = DMatrix::zeros(n, 3 * n);
    for comp in 0..3 {
        for j in 0..n {
            if comp == 1 {
                continue;
            }
            let mut basis = SymTensorField::zeros(&grid);
            match comp {
                0 => basis.a[j] = 1.0,
                _ => basis.b[j] = 1.0,
            }
            t.set_column(comp * n + j, &hessian_symbol(&basis));
        }
    }
    let fwd = analysis_matrix(&grid);
    let synth = synthesis_matrix(&grid);
    let mut inv_diag = DMatrix::zeros(n, n);
    for l in 0..n {
        inv_diag[(l, l)] = 1.0 / (1.0 - (l * (l + 1)) as f64);
    }
    let p0_inv = &synth * inv_diag * &fwd;
    let tau = 2.0 * PI;
    let q_w = DMatrix::from_fn(n, n, |i, j| if i == j { tau * grid.weights[i] } else { 0.0 });
    // M⁻¹ per component: 1/(2πwᵢ·mult), mult = 2 for the twist slot.
    let core = t.transpose() * q_w * p0_inv * &t * 0.25;
    let hvec = {
        let mut v = DVector::zeros(3 * n);
        for i in 0..n {
            v[i] = h.a[i];
            v[n + i] = h.c[i];
            v[2 * n + i] = h.b[i];
        }
        v
    };
    let lv = core * hvec;
    let mut out = SymTensorField::zeros(&grid);
    for i in 0..n {
        let wi = tau * grid.weights[i];
        out.a[i] = lv[i] / wi;
        out.c[i] = lv[n + i] / (2.0 * wi);
        out.b[i] = lv[2 * n + i] / wi;
    }
    Ok(out)
}

/// ⟨h₁, h₂⟩ = ∫(a₁a₂ + 2c₁c₂ + b₁b₂) dV₀.
pub fn tensor_inner(h1: &SymTensorField, h2: &SymTensorField) -> f64 {
    let grid = &h1.grid;
    let tau = 2.0 * PI;
    (0..grid.n_nodes)
        .map(|i| {
            tau * grid.weights[i]
                * (h1.a[i] * h2.a[i] + 2.0 * h1.c[i] * h2.c[i] + h1.b[i] * h2.b[i])
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn setup() -> (Arc<CollocationGrid>, ConformalMetric) {
        let g = CollocationGrid::build(48, 32).unwrap();
        let m = ConformalMetric::round(&g);
        (g, m)
    }

    #[test]
    fn modal_table_values() {
        let (_, m) = setup();
        let table = modal_table(&m, 8).unwrap();
        for row in &table.rows {
            assert!(row.collinearity_residual <= 1e-10, "l = {}", row.l);
            assert!(row.dstar_d >= 0.0);
            assert!(row.p0_prime != 0.0);
        }
        assert_abs_diff_eq!(table.rows[0].p0, 1.0);
        assert_abs_diff_eq!(table.rows[1].l1, 0.0);
        let r2 = &table.rows[2];
        assert_abs_diff_eq!(r2.nu, 3.0);
        assert_abs_diff_eq!(r2.p0, -5.0);
        assert_abs_diff_eq!(r2.dstar_d, 6.0);
        assert_abs_diff_eq!(r2.second_variation, -7.2, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_round_background() {
        let g = CollocationGrid::build(32, 20).unwrap();
        let u = ScalarField::from_nodal(&g, g.legendre(2).scale(0.1));
        let m = ConformalMetric::sphere(&g, u, true).unwrap();
        assert!(matches!(
            modal_table(&m, 4),
            Err(VariationError::UnsupportedBackground { .. })
        ));
    }

    #[test]
    fn operators_commute() {
        let (g, _) = setup();
        let x = SolitonField::default();
        let psi = ScalarField::from_nodal(
            &g,
            g.legendre(2).scale(0.7) + g.legendre(5).scale(-0.3) + g.legendre(1).scale(0.2),
        );
        let pairs: [(fn(&ScalarField, &SolitonField) -> ScalarField, fn(&ScalarField, &SolitonField) -> ScalarField); 3] =
            [(apply_p0, apply_l1), (apply_p0, apply_l1_prime), (apply_l1, apply_l1_prime)];
        for (a, b) in pairs {
            let comm = a(&b(&psi, &x), &x).sub(&b(&a(&psi, &x), &x));
            assert!(l2_norm0(&comm) <= 1e-10);
        }
    }

    #[test]
    fn f_response_identity_and_modal_value() {
        let (g, m) = setup();
        let psi = ScalarField::unit_mode(&g, 3);
        let u = linearized_f_response(&m, &psi).unwrap();
        // P₀u = L₁′L₁ψ by construction
        let x = SolitonField::default();
        let lhs = apply_p0(&u, &x);
        let rhs = apply_l1_prime(&apply_l1(&psi, &x), &x);
        assert!(l2_norm0(&lhs.sub(&rhs)) < 1e-9);
        // modal coefficient ν(ν-1)/(1-2ν) at ν = 6: 30/(-11)
        let expect = psi.scaled(30.0 / -11.0);
        assert_abs_diff_eq!(u.sub(&expect).max_abs(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn f_response_matches_minimizer_family_fd() {
        let (g, m) = setup();
        let psi = ScalarField::from_nodal(&g, g.legendre(2).scale(0.5) + g.legendre(4).scale(0.3));
        let u = linearized_f_response(&m, &psi).unwrap();
        let u_fd = f_response_fd(&m, &psi, 1e-4).unwrap();
        assert!(
            u.sub(&u_fd).max_abs() < 1e-6,
            "defect = {:.3e}",
            u.sub(&u_fd).max_abs()
        );
    }

    #[test]
    fn fixed_class_modal_values_with_fd() {
        let (g, m) = setup();
        for l in [2usize, 3] {
            let psi = ScalarField::unit_mode(&g, l);
            let rep = second_variation_fixed_class(&m, &psi, Some(1e-3)).unwrap();
            let expect = modal_second_variation(nu(l));
            assert_abs_diff_eq!(rep.analytic, expect, epsilon = 1e-10);
            assert!(rep.passed, "FD mismatch at l = {l}: {rep:?}");
        }
    }

    #[test]
    fn fixed_class_kernel_and_nonpositivity() {
        let (g, m) = setup();
        for l in [0usize, 1] {
            let rep =
                second_variation_fixed_class(&m, &ScalarField::unit_mode(&g, l), None).unwrap();
            assert!(rep.analytic.abs() < 1e-9);
            assert!(rep.kernel);
        }
        let psi = ScalarField::from_nodal(
            &g,
            g.legendre(2).scale(0.3) + g.legendre(5).scale(0.2) + g.legendre(8).scale(-0.1),
        );
        let rep = second_variation_fixed_class(&m, &psi, None).unwrap();
        assert!(rep.analytic <= 1e-9);
    }

    #[test]
    fn aliased_psi_rejected() {
        let g = CollocationGrid::build(16, 6).unwrap();
        let m = ConformalMetric::round(&g);
        let psi = ScalarField::unit_mode(&g, 9);
        assert!(matches!(
            second_variation_fixed_class(&m, &psi, None),
            Err(VariationError::Geometry(GeometryError::Aliased { .. }))
        ));
    }

    #[test]
    fn kernel_basis_dimension_four() {
        let (_, m) = setup();
        let kb = kernel_basis(&m).unwrap();
        assert_eq!(kb.dimension, 4);
        for r in &kb.residuals {
            assert!(*r < 1e-9, "residual = {r:.3e}");
        }
        // and no further modes are in the kernel
        for l in 2..=6 {
            assert!(modal_second_variation(nu(l)).abs() > 1e-3);
        }
    }

    #[test]
    fn cor21_traceless_projection() {
        let d = cor21_direction(1.0, -1.0).unwrap();
        assert_abs_diff_eq!(d.b, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.t1, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.t2, -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.theta_norm_sq_integral(), 256.0 * PI * PI, epsilon = 1e-8);
        assert!(matches!(
            cor21_direction(2.0, 2.0),
            Err(VariationError::DegenerateDirection)
        ));
        // unbalanced ω′ still projects to a traceless direction
        let d = cor21_direction(3.0, 1.0).unwrap();
        assert_abs_diff_eq!(d.t1 + d.t2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn class_varying_form_on_product() {
        let g = CollocationGrid::build(12, 8).unwrap();
        let m = ConformalMetric::product_round(&g);
        let d = cor21_direction(1.0, -1.0).unwrap();
        let psi = ScalarField::zeros_product(&g);
        let rep = second_variation_general(&m, Some(&d), &psi, Some(1e-3)).unwrap();
        assert_abs_diff_eq!(rep.analytic, 256.0 * PI * PI, epsilon = 1e-6);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.analytic > 0.0);
    }

    #[test]
    fn theta_on_sphere_rejected() {
        let (g, m) = setup();
        let d = cor21_direction(1.0, -1.0).unwrap();
        assert!(matches!(
            second_variation_general(&m, Some(&d), &ScalarField::zeros_sphere(&g), None),
            Err(VariationError::NoTracelessHarmonicForm)
        ));
    }

    #[test]
    fn general_form_consistent_with_fixed_class_at_theta_zero() {
        let (g, m) = setup();
        let psi = ScalarField::from_nodal(&g, g.legendre(2).scale(0.4) + g.legendre(3).scale(0.1));
        let fixed = second_variation_fixed_class(&m, &psi, None).unwrap();
        let general = second_variation_general(&m, None, &psi, None).unwrap();
        assert_abs_diff_eq!(fixed.analytic, general.analytic, epsilon = 1e-9);
    }

    #[test]
    fn quadratic_form_potential_matches_modal() {
        let (g, _) = setup();
        for l in [2usize, 3, 4] {
            let psi = ScalarField::unit_mode(&g, l);
            let h = SymTensorField::potential(&psi);
            let rep = quadratic_form_16(&h).unwrap();
            assert_abs_diff_eq!(
                rep.analytic,
                modal_second_variation(nu(l)),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn quadratic_form_lie_directions_are_null() {
        let (g, _) = setup();
        let eta = g.legendre(1).scale(0.4) + g.legendre(3).scale(0.2) + g.legendre(2).scale(-0.3);
        let h = SymTensorField::lie_vertical(&g, &eta);
        let rep = quadratic_form_16(&h).unwrap();
        assert!(rep.analytic.abs() < 1e-8, "got {:.3e}", rep.analytic);
        let xi = g.legendre(2).scale(0.8);
        let twist = SymTensorField::lie_rotational(&g, &xi);
        let rep = quadratic_form_16(&twist).unwrap();
        assert_abs_diff_eq!(rep.analytic, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn riemannian_l_reproduces_quadratic_form() {
        let (g, _) = setup();
        let psi = ScalarField::unit_mode(&g, 2);
        let h = SymTensorField::potential(&psi)
            .add(&SymTensorField::lie_vertical(&g, &g.legendre(3).scale(0.2)));
        let lh = riemannian_l(&h).unwrap();
        let direct = quadratic_form_16(&h).unwrap().analytic;
        assert_abs_diff_eq!(tensor_inner(&h, &lh), direct, epsilon = 1e-7);
        // L annihilates Lie directions
        let lie = SymTensorField::lie_vertical(&g, &g.legendre(2).scale(0.5));
        let llie = riemannian_l(&lie).unwrap();
        assert!(
            llie.a.amax().max(llie.b.amax()).max(llie.c.amax()) < 1e-7,
            "Lh on Lie direction not null"
        );
        // zero in, zero out
        let z = riemannian_l(&SymTensorField::zeros(&g)).unwrap();
        assert_abs_diff_eq!(z.a.amax() + z.b.amax() + z.c.amax(), 0.0, epsilon = 1e-14);
    }
}
