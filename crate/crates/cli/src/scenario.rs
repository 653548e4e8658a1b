//! Scenario configuration: a TOML file fully determines an experiment.
//!
//! Schema validation happens before any computation; unknown keys are a
//! hard error so that a typo cannot silently disable a check. The seed
//! fixes all randomness, so a (config, seed) pair pins the artifacts
//! byte for byte.

use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Lambda,
    Spectrum,
    VariationFixedClass,
    VariationGeneral,
    #[serde(rename = "riemannian_L")]
    RiemannianL,
    Flow,
    BasinSweep,
    ExtremumAudit,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Lambda => "lambda",
            Kind::Spectrum => "spectrum",
            Kind::VariationFixedClass => "variation_fixed_class",
            Kind::VariationGeneral => "variation_general",
            Kind::RiemannianL => "riemannian_L",
            Kind::Flow => "flow",
            Kind::BasinSweep => "basin_sweep",
            Kind::ExtremumAudit => "extremum_audit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Sphere,
    Product,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_n_nodes")]
    pub n_nodes: usize,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
}

fn default_n_nodes() -> usize {
    48
}
fn default_l_max() -> usize {
    32
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_nodes: default_n_nodes(),
            l_max: default_l_max(),
        }
    }
}

/// Kind-specific knobs; unused fields are simply ignored by a kind.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub seed: u64,
    /// Legendre degrees of perturbation / test modes.
    pub modes: Vec<usize>,
    /// Perturbation amplitudes paired or crossed with `modes`.
    pub amplitudes: Vec<f64>,
    /// Random (metric, direction) derivative cross-checks.
    pub fd_pairs: usize,
    /// Random samples (non-positivity batch, metric population).
    pub samples: usize,
    /// Degrees listed in the operator table.
    pub table_l_max: usize,
    /// Compute the stability-composite kernel.
    pub kernel: bool,
    /// Random potentials for the linearized-response identity.
    pub f_response_samples: usize,
    pub t_end: f64,
    pub dt0: f64,
    pub dt_max: f64,
    /// Reject (rather than truncate) aliased conformal factors.
    pub strict_aliasing: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            seed: 0,
            modes: Vec::new(),
            amplitudes: Vec::new(),
            fd_pairs: 0,
            samples: 0,
            table_l_max: 8,
            kernel: false,
            f_response_samples: 0,
            t_end: 50.0,
            dt0: 0.02,
            dt_max: 0.25,
            strict_aliasing: false,
        }
    }
}

/// Every tolerance a check can be judged against, overridable from the
/// command line (`--tol-overrides key=value,...`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative error of λ against its closed-form round value.
    pub rel_lambda: f64,
    /// Absolute error of the Lagrange multiplier against 2.
    pub abs_multiplier: f64,
    /// Absolute bound on the minimizing potential at the round metric.
    pub abs_f: f64,
    /// Relative analytic-vs-FD error for first variations.
    pub rel_fd: f64,
    /// Absolute floor under `rel_fd` for near-zero derivatives.
    pub abs_fd_floor: f64,
    /// |δλ| for potential directions at the round metric.
    pub abs_round_variation: f64,
    /// Relative error of modal second variations vs closed form.
    pub rel_modal: f64,
    /// Relative error of modal second variations vs FD of λ.
    pub rel_modal_fd: f64,
    /// Upper bound certifying non-positivity of the fixed-class form.
    pub abs_nonpositive: f64,
    /// Operator residual for kernel basis elements.
    pub kernel_residual: f64,
    /// Collinearity residual for operator-table eigenvalues.
    pub table_residual: f64,
    /// Relative error for the traceless class direction value.
    pub rel_class: f64,
    /// Absolute error between the tensor-Hessian and potential pipelines.
    pub abs_form: f64,
    /// ‖P₀u - L₁′L₁ψ‖ for the linearized response.
    pub identity_residual: f64,
    /// Max-norm gap between linearized response and minimizer-family FD.
    pub abs_f_response: f64,
    /// Per-step λ-loss budget along the flow.
    pub monotonicity_budget: f64,
    /// Gauge-fixed distance to round declaring convergence.
    pub dist: f64,
    /// Soliton residual required at flow termination.
    pub residual: f64,
    /// |area - 4π| bound along the flow.
    pub abs_area: f64,
    /// λ-equality window in the extremum audit.
    pub eq: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel_lambda: 1e-8,
            abs_multiplier: 1e-9,
            abs_f: 1e-8,
            rel_fd: 1e-6,
            abs_fd_floor: 1e-7,
            abs_round_variation: 1e-9,
            rel_modal: 1e-4,
            rel_modal_fd: 1e-3,
            abs_nonpositive: 1e-9,
            kernel_residual: 1e-9,
            table_residual: 1e-10,
            rel_class: 1e-3,
            abs_form: 1e-6,
            identity_residual: 1e-9,
            abs_f_response: 1e-6,
            monotonicity_budget: 1e-10,
            dist: 1e-6,
            residual: 1e-8,
            abs_area: 1e-9,
            eq: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), String> {
        let slot = match key {
            "rel_lambda" => &mut self.rel_lambda,
            "abs_multiplier" => &mut self.abs_multiplier,
            "abs_f" => &mut self.abs_f,
            "rel_fd" => &mut self.rel_fd,
            "abs_fd_floor" => &mut self.abs_fd_floor,
            "abs_round_variation" => &mut self.abs_round_variation,
            "rel_modal" => &mut self.rel_modal,
            "rel_modal_fd" => &mut self.rel_modal_fd,
            "abs_nonpositive" => &mut self.abs_nonpositive,
            "kernel_residual" => &mut self.kernel_residual,
            "table_residual" => &mut self.table_residual,
            "rel_class" => &mut self.rel_class,
            "abs_form" => &mut self.abs_form,
            "identity_residual" => &mut self.identity_residual,
            "abs_f_response" => &mut self.abs_f_response,
            "monotonicity_budget" => &mut self.monotonicity_budget,
            "dist" => &mut self.dist,
            "residual" => &mut self.residual,
            "abs_area" => &mut self.abs_area,
            "eq" => &mut self.eq,
            other => return Err(format!("unknown tolerance `{other}`")),
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(format!("tolerance `{key}` must be finite and positive"));
        }
        *slot = value;
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    #[serde(default = "default_geometry")]
    pub geometry: Geometry,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_geometry() -> Geometry {
    Geometry::Sphere
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let sc: Scenario =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if sc.name.is_empty() || !sc.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(format!(
                "{}: scenario name must be a nonempty [A-Za-z0-9_-]+ token",
                path.display()
            ));
        }
        Ok(sc)
    }

    /// Apply command-line overrides on top of the file.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        strict_aliasing: bool,
        tol_overrides: Option<&str>,
    ) -> Result<(), String> {
        if let Some(s) = seed {
            self.params.seed = s;
        }
        if strict_aliasing {
            self.params.strict_aliasing = true;
        }
        if let Some(spec) = tol_overrides {
            for item in spec.split(',').filter(|s| !s.is_empty()) {
                let (key, value) = item
                    .split_once('=')
                    .ok_or_else(|| format!("tolerance override `{item}` is not key=value"))?;
                let v: f64 = value
                    .parse()
                    .map_err(|_| format!("tolerance override `{item}`: bad number"))?;
                self.tolerances.set(key.trim(), v)?;
            }
        }
        Ok(())
    }
}

/// Parallelism cap from ENTROPY_LAB_THREADS (default: all cores).
pub fn thread_cap() -> Result<usize, String> {
    match std::env::var("ENTROPY_LAB_THREADS") {
        Ok(s) => {
            let n: usize = s
                .parse()
                .map_err(|_| format!("ENTROPY_LAB_THREADS=`{s}` is not a positive integer"))?;
            if n == 0 {
                return Err("ENTROPY_LAB_THREADS must be >= 1".into());
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}
