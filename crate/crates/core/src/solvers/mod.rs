//! Sparse estimators: independent baselines and the OT-coupled multi-task models.

mod dirty;
mod group_lasso;
mod lasso;
mod mne;
mod mwe;

use crate::error::{Error, Result};
use crate::model::{GroundMetric, SignedVector};
use crate::ot::{default_gamma, OtParams};

pub use dirty::{solve_dirty, DirtyResult};
pub use group_lasso::{group_lambda_max, solve_group_lasso};
pub use lasso::{
    lasso_objective, reweighting_weights, solve_concomitant_lasso, solve_lasso, solve_lasso_warm,
    solve_reweighted_lasso, ConcomitantResult, ReweightedResult,
};
pub use mne::solve_mne;
pub use mwe::{
    mwe_coordinate_update, solve_mwe05, solve_mwe1, solve_mwe1_weighted, subject_lambdas, update_sigma,
    CoordinatePenalty,
};

/// Stopping rule shared by the coordinate descent loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    /// Stop once the largest coordinate move of a sweep is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// How the relative regularization maps to an absolute one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaScale {
    /// Each subject uses its own `λmax`.
    #[default]
    PerSubject,
    /// All subjects share the largest `λmax`.
    Global,
}

/// Entropic transport settings before they are resolved against a metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtConfig {
    pub epsilon_rel: f64,
    /// Marginal relaxation; `None` applies [`default_gamma`].
    pub gamma: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            epsilon_rel: crate::ot::DEFAULT_EPSILON_REL,
            gamma: None,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

impl OtConfig {
    pub fn resolve(&self, metric: &GroundMetric) -> Result<OtParams> {
        let median = metric
            .median_off_diagonal()
            .filter(|m| *m > 0.0)
            .ok_or_else(|| Error::DegenerateMetric("median ground cost is zero".into()))?;
        let gamma = match self.gamma {
            Some(g) => g,
            None => default_gamma(metric)?,
        };
        Ok(OtParams::new(self.epsilon_rel * median, gamma)?
            .with_max_iter(self.max_iter)
            .with_tol(self.tol))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda_rel: f64,
    pub mu: f64,
    pub ot: OtConfig,
    /// Noise floor; `None` uses `sigma_alpha * min_s ‖y_s‖ / sqrt(n)`.
    pub sigma0: Option<f64>,
    pub sigma_alpha: f64,
    pub eta: f64,
    pub cd: CdOptions,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_reweight: usize,
    pub depth_exponent: f64,
    pub lambda_scale: LambdaScale,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_rel: 0.3,
            mu: 1e-4,
            ot: OtConfig::default(),
            sigma0: None,
            sigma_alpha: 0.01,
            eta: 1e-6,
            cd: CdOptions {
                tol: 1e-6,
                max_iter: 200,
            },
            outer_tol: 1e-5,
            max_outer: 200,
            max_reweight: 5,
            depth_exponent: 0.9,
            lambda_scale: LambdaScale::PerSubject,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_rel) {
            return Err(Error::InvalidParameter(format!("lambda_rel must lie in [0, 1], got {}", self.lambda_rel)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be nonnegative, got {}", self.mu)));
        }
        if !(self.eta > 0.0 && self.cd.tol > 0.0 && self.outer_tol > 0.0 && self.sigma_alpha > 0.0) {
            return Err(Error::InvalidParameter("tolerances, eta and sigma_alpha must be positive".into()));
        }
        if let Some(s) = self.sigma0 {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!("sigma0 must be positive, got {s}")));
            }
        }
        if self.max_outer == 0 || self.max_reweight == 0 || self.cd.max_iter == 0 {
            return Err(Error::InvalidParameter("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Output of the multi-task solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Per-subject coefficients in solver (depth-weighted) scale.
    pub coefficients: Vec<SignedVector>,
    pub sigmas: Vec<f64>,
    pub barycenter: SignedVector,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// False when some Sinkhorn call hit its iteration cap.
    pub sinkhorn_converged: bool,
    /// Absolute ℓ1 weight `λ_s` applied to each subject before the `σ` factor.
    pub lambdas: Vec<f64>,
}
