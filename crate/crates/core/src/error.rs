use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("n_nodes = {n_nodes} is too small for l_max = {l_max} (need n_nodes >= l_max + 1 >= 2)")]
    GridTooSmall { n_nodes: usize, l_max: usize },
    #[error("field is aliased beyond l_max = {l_max}: tail energy {tail:.3e} exceeds {tol:.3e}")]
    Aliased { l_max: usize, tail: f64, tol: f64 },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("fields live on different grids ({left} vs {right} nodes)")]
    GridMismatch { left: usize, right: usize },
    #[error("operation requires a {expected} metric, got {got}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("conformal factor is nearly degenerate: min e^{{2u}} = {min_factor:.3e} < 1e-6")]
    DegenerateFactor { min_factor: f64 },
}

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("measure constraint violated: |∫e^(-f) dV - V| = {defect:.3e} exceeds {tol:.3e}")]
    ConstraintViolated { defect: f64, tol: f64 },
    #[error("minimizer solve did not converge in {max_iter} iterations (last residual {residual:.3e})")]
    NonConvergence {
        max_iter: usize,
        residual: f64,
        trajectory: Vec<f64>,
    },
    #[error("ground state lost positivity during the solve (min w = {min_w:.3e})")]
    PositivityLoss { min_w: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("direction lives on a different grid than the metric")]
    DirectionGridMismatch,
    #[error("finite-difference stencil point left the admissible metric class at t = {t}")]
    StencilOutOfClass { t: f64 },
}

#[derive(Debug, Error)]
pub enum VariationError {
    #[error("operation requires the round Kähler-Einstein background (|u|_max = {deviation:.3e})")]
    UnsupportedBackground { deviation: f64 },
    #[error("no traceless harmonic (1,1)-form exists on a single CP¹ (h^(1,1) = 1)")]
    NoTracelessHarmonicForm,
    #[error("ω' is proportional to ω: degenerate class-varying direction")]
    DegenerateDirection,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("step rejected {rejections} times in a row; smallest dt tried was {dt:.3e}")]
    StepRejected { rejections: usize, dt: f64 },
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
