//! Zonal Möbius transformations of S² and pullbacks of conformal metrics.
//!
//! The boost of rapidity s along the symmetry axis acts on μ = cos θ by
//!   μ ↦ μ' = (sinh s + μ cosh s)/(cosh s + μ sinh s),
//! and is conformal with log-factor
//!   v_s(μ) = -ln(cosh s + μ sinh s),
//! i.e. m_s* g₀ = e^{2 v_s} g₀. Pulling back e^{2u} g₀ therefore yields
//! the conformal factor u∘m_s + v_s. The maps form a one-parameter group:
//! m_s ∘ m_t = m_{s+t} and v_{s+t} = v_t + v_s∘m_t.

use crate::error::GeometryError;
use crate::field::ScalarField;
use crate::grid::CollocationGrid;
use crate::metric::ConformalMetric;
use nalgebra::DVector;
use std::sync::Arc;

/// μ' under the boost of rapidity s.
pub fn boost_point(s: f64, mu: f64) -> f64 {
    (s.sinh() + mu * s.cosh()) / (s.cosh() + mu * s.sinh())
}

/// Log conformal factor of the boost: v_s(μ) = -ln(cosh s + μ sinh s).
pub fn boost_log_factor(grid: &Arc<CollocationGrid>, s: f64) -> ScalarField {
    let v = DVector::from_fn(grid.n_nodes, |k, _| {
        -(s.cosh() + grid.mu_nodes[k] * s.sinh()).ln()
    });
    ScalarField::from_nodal(grid, v)
}

/// Evaluate a zonal field at arbitrary μ ∈ [-1, 1] through its Legendre
/// series (three-term recurrence, full band).
pub fn eval_zonal(field: &ScalarField, mu: f64) -> f64 {
    let c = field.grid.analyze(&field.as_vector());
    let n = field.grid.n_nodes;
    let mut sum = c[0];
    let mut pm1 = 1.0;
    let mut p = mu;
    if n > 1 {
        sum += c[1] * p;
    }
    for l in 2..n {
        let pl = ((2 * l - 1) as f64 * mu * p - (l - 1) as f64 * pm1) / l as f64;
        sum += c[l] * pl;
        pm1 = p;
        p = pl;
    }
    sum
}

/// Pull the sphere metric e^{2u} g₀ back by the boost of rapidity s:
/// the new log factor is u(μ') + v_s(μ). The result is truncated to
/// l_max; the discarded tail is returned for aliasing diagnostics.
pub fn pull_back(
    metric: &ConformalMetric,
    s: f64,
) -> Result<(ConformalMetric, f64), GeometryError> {
    if metric.is_product() {
        return Err(GeometryError::KindMismatch {
            expected: "sphere",
            got: "product",
        });
    }
    let grid = &metric.grid;
    let u = metric.u_sphere();
    let v = boost_log_factor(grid, s);
    let composed = DVector::from_fn(grid.n_nodes, |k, _| {
        eval_zonal(u, boost_point(s, grid.mu_nodes[k]))
    });
    let new_u = ScalarField::from_nodal(grid, composed).add(&v);
    let tail = new_u.tail_energy();
    let pulled = ConformalMetric::sphere(grid, new_u, false)?;
    Ok((pulled, tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid() -> Arc<CollocationGrid> {
        CollocationGrid::build(64, 40).unwrap()
    }

    #[test]
    fn boost_is_a_group() {
        let s = 0.3;
        let t = -0.45;
        for &mu in &[-0.9, -0.2, 0.0, 0.55, 0.99] {
            assert_abs_diff_eq!(
                boost_point(s, boost_point(t, mu)),
                boost_point(s + t, mu),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn pulled_back_round_is_round() {
        // e^{2 v_s} g₀ is the round metric in disguise: volume 4π and
        // Gauss curvature 1.
        let g = grid();
        let m = ConformalMetric::round(&g);
        let (pulled, tail) = pull_back(&m, 0.4).unwrap();
        assert!(tail < 1e-9, "tail = {tail:.3e}");
        assert_abs_diff_eq!(pulled.volume(), 4.0 * PI, epsilon = 1e-9);
        let k = pulled.gauss_curvature();
        assert_abs_diff_eq!(k.map(|x| x - 1.0).max_abs(), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn eval_matches_nodes() {
        let g = grid();
        let f = ScalarField::unit_mode(&g, 3);
        for k in [0, 7, 31] {
            assert_abs_diff_eq!(
                eval_zonal(&f, g.mu_nodes[k]),
                f.values[(k, 0)],
                epsilon = 1e-11
            );
        }
    }

    #[test]
    fn group_law_for_log_factors() {
        let g = grid();
        let s = 0.25;
        let t = 0.35;
        let vt = boost_log_factor(&g, t);
        let vs_comp = DVector::from_fn(g.n_nodes, |k, _| {
            let vs = boost_log_factor(&g, s);
            eval_zonal(&vs, boost_point(t, g.mu_nodes[k]))
        });
        let lhs = boost_log_factor(&g, s + t);
        let rhs = vt.add(&ScalarField::from_nodal(&g, vs_comp));
        assert_abs_diff_eq!(lhs.sub(&rhs).max_abs(), 0.0, epsilon = 1e-8);
    }
}
