//! Gauss–Legendre collocation in μ = cos θ.
//!
//! Axisymmetric (zonal) fields on S² are sampled at the Gauss–Legendre
//! abscissae; the associated quadrature integrates polynomials of degree
//! ≤ 2n-1 exactly, which makes the full nodal↔Legendre transform pair an
//! exact inverse pair in exact arithmetic. The spectral truncation degree
//! `l_max` governs band-limit enforcement of *inputs*; differential
//! operators act on the full nodal polynomial space.

use crate::error::GeometryError;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::sync::Arc;

/// Gauss–Legendre nodes, weights and Legendre transform tables.
#[derive(Debug, Clone)]
pub struct CollocationGrid {
    pub n_nodes: usize,
    pub l_max: usize,
    /// Abscissae in (-1, 1), strictly increasing.
    pub mu_nodes: DVector<f64>,
    /// Quadrature weights, all positive, summing to 2.
    pub weights: DVector<f64>,
    /// P_l(μ_k) for 0 ≤ l ≤ n-1.
    p_table: DMatrix<f64>,
    /// Forward Legendre analysis: coeffs = fwd * nodal.
    fwd: DMatrix<f64>,
    /// Nodal Laplace–Beltrami Δ₀ (full band).
    lap: DMatrix<f64>,
    /// Nodal d/dμ (full band).
    dmu: DMatrix<f64>,
}

impl CollocationGrid {
    /// Build a grid with `n_nodes` Gauss–Legendre nodes and truncation
    /// degree `l_max`. Deterministic for fixed inputs.
    pub fn build(n_nodes: usize, l_max: usize) -> Result<Arc<Self>, GeometryError> {
        if n_nodes < l_max + 1 || l_max < 1 {
            return Err(GeometryError::GridTooSmall { n_nodes, l_max });
        }
        let (mu, w) = gauss_legendre(n_nodes);
        let n = n_nodes;

        // P_l at the nodes via the three-term recurrence.
        let mut p_table = DMatrix::zeros(n, n);
        for k in 0..n {
            let x = mu[k];
            let mut pm1 = 1.0;
            let mut p0 = x;
            p_table[(0, k)] = 1.0;
            if n > 1 {
                p_table[(1, k)] = x;
            }
            for l in 2..n {
                let pl = ((2 * l - 1) as f64 * x * p0 - (l - 1) as f64 * pm1) / l as f64;
                p_table[(l, k)] = pl;
                pm1 = p0;
                p0 = pl;
            }
        }

        // Forward analysis: c_l = (2l+1)/2 Σ_k w_k f_k P_l(μ_k).
        let mut fwd = DMatrix::zeros(n, n);
        for l in 0..n {
            let s = (2 * l + 1) as f64 / 2.0;
            for k in 0..n {
                fwd[(l, k)] = s * w[k] * p_table[(l, k)];
            }
        }

        // Δ₀ = synth ∘ diag(-l(l+1)) ∘ analyze.
        let synth = p_table.transpose();
        let mut lam = DMatrix::zeros(n, n);
        for l in 0..n {
            lam[(l, l)] = -((l * (l + 1)) as f64);
        }
        let lap = &synth * lam * &fwd;

        // d/dμ through the coefficient relation P_l' = Σ_{k<l, l-k odd} (2k+1) P_k.
        let mut dcoef = DMatrix::zeros(n, n);
        for l in 1..n {
            let mut k = l - 1;
            loop {
                dcoef[(k, l)] = (2 * k + 1) as f64;
                if k < 2 {
                    break;
                }
                k -= 2;
            }
        }
        let dmu = &synth * dcoef * &fwd;

        Ok(Arc::new(Self {
            n_nodes,
            l_max,
            mu_nodes: mu,
            weights: w,
            p_table,
            fwd,
            lap,
            dmu,
        }))
    }

    /// Legendre coefficients (degrees 0..n-1) of a nodal vector.
    pub fn analyze(&self, nodal: &DVector<f64>) -> DVector<f64> {
        &self.fwd * nodal
    }

    /// Nodal values of a Legendre series.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.p_table.transpose() * coeffs
    }

    /// Apply Δ₀ (round-sphere Laplace–Beltrami, real convention) to nodal values.
    pub fn laplace0(&self, nodal: &DVector<f64>) -> DVector<f64> {
        &self.lap * nodal
    }

    pub fn laplace0_matrix(&self) -> &DMatrix<f64> {
        &self.lap
    }

    /// Apply d/dμ to nodal values.
    pub fn d_dmu(&self, nodal: &DVector<f64>) -> DVector<f64> {
        &self.dmu * nodal
    }

    /// ∫_{S²} f dV₀ = 2π Σ_k w_k f_k for the round metric of area 4π.
    pub fn integrate_round(&self, nodal: &DVector<f64>) -> f64 {
        2.0 * PI * self.weights.dot(nodal)
    }

    /// Nodal values of P_l.
    pub fn legendre(&self, l: usize) -> DVector<f64> {
        self.p_table.row(l).transpose()
    }

    /// Zonal mode of degree l with unit L²(dV₀) norm:
    /// P_l · sqrt((2l+1)/(4π)).
    pub fn unit_mode(&self, l: usize) -> DVector<f64> {
        self.legendre(l) * ((2 * l + 1) as f64 / (4.0 * PI)).sqrt()
    }

    /// Zero all coefficients with l > l_max.
    pub fn truncate(&self, nodal: &DVector<f64>) -> DVector<f64> {
        let mut c = self.analyze(nodal);
        for l in (self.l_max + 1)..self.n_nodes {
            c[l] = 0.0;
        }
        self.synthesize(&c)
    }

    /// L²(dV₀) energy of the spectral tail beyond l_max.
    pub fn tail_energy(&self, nodal: &DVector<f64>) -> f64 {
        let c = self.analyze(nodal);
        let mut e = 0.0;
        for l in (self.l_max + 1)..self.n_nodes {
            e += c[l] * c[l] * 4.0 * PI / (2 * l + 1) as f64;
        }
        e.sqrt()
    }
}

/// Gauss–Legendre nodes and weights by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> (DVector<f64>, DVector<f64>) {
    let mut mu = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    for i in 0..n {
        // Tricomi-style initial guess, then Newton.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        mu[n - 1 - i] = x;
        w[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (mu, w)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut pm1 = 1.0;
    let mut p = x;
    for l in 2..=n {
        let pl = ((2 * l - 1) as f64 * x * p - (l - 1) as f64 * pm1) / l as f64;
        pm1 = p;
        p = pl;
    }
    let dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
    (p, dp)
}
