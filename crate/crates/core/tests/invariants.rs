//! Property tests for the spectral machinery: quadrature exactness,
//! transform round trips, and integration by parts, over randomized
//! band-limited inputs.

use entropy_lab::field::ScalarField;
use entropy_lab::grid::CollocationGrid;
use entropy_lab::metric::ConformalMetric;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn grid() -> Arc<CollocationGrid> {
    CollocationGrid::build(24, 16).unwrap()
}

fn band_limited(coeffs: &[f64]) -> ScalarField {
    let g = grid();
    let mut f = ScalarField::zeros_sphere(&g);
    for (l, c) in coeffs.iter().enumerate() {
        f = f.add(&ScalarField::unit_mode(&g, l).scaled(*c));
    }
    f
}

fn coeff_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transform_round_trip(coeffs in coeff_vec()) {
        let f = band_limited(&coeffs);
        let g = &f.grid;
        let back = g.synthesize(&g.analyze(&f.as_vector()));
        let err = (&back - f.as_vector()).amax();
        prop_assert!(err < 1e-12, "round trip error {err:.3e}");
    }

    #[test]
    fn quadrature_integrates_modes_exactly(coeffs in coeff_vec()) {
        // ∫ P_l dV₀ = 0 for l ≥ 1, so only the l=0 coefficient survives.
        let f = band_limited(&coeffs);
        let expected = coeffs[0] * (4.0 * PI).sqrt();
        let err = (f.integrate0() - expected).abs();
        prop_assert!(err < 1e-12, "integral error {err:.3e}");
    }

    #[test]
    fn laplacian_integrates_to_zero(coeffs in coeff_vec()) {
        let f = band_limited(&coeffs);
        prop_assert!(f.laplace0().integrate0().abs() < 1e-10);
    }

    #[test]
    fn integration_by_parts(a in coeff_vec(), b in coeff_vec()) {
        // ∫ φ Δ₀ψ = ∫ ψ Δ₀φ for band-limited zonal fields.
        let phi = band_limited(&a);
        let psi = band_limited(&b);
        let lhs = phi.mul_pointwise(&psi.laplace0()).integrate0();
        let rhs = psi.mul_pointwise(&phi.laplace0()).integrate0();
        prop_assert!((lhs - rhs).abs() < 1e-9, "asymmetry {:.3e}", lhs - rhs);
    }

    #[test]
    fn gauss_bonnet_for_random_conformal_factors(coeffs in prop::collection::vec(-0.15f64..0.15, 1..6)) {
        let u = band_limited(&coeffs);
        let m = ConformalMetric::sphere(&u.grid.clone(), u, false).unwrap();
        let total = m.integrate(&m.gauss_curvature());
        prop_assert!((total - 4.0 * PI).abs() < 1e-8, "total curvature {total}");
    }
}
