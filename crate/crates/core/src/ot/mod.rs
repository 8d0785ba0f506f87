//! Entropy-regularized unbalanced optimal transport.
//!
//! Costs live in the ground metric units (millimeters). A kernel is built
//! once per entropy level and shared by the distance and barycenter
//! routines. Scalings are updated with the generalized Sinkhorn iterations
//! `u <- (a / Kv)^psi`, `v <- (b / K'u)^psi`, with `psi = gamma / (gamma + epsilon)`.
//!
//! Division by an exactly zero kernel product yields a zero scaling: such a
//! row or column cannot carry any plan mass.

mod barycenter;
mod emd;
mod scaling;
mod unbalanced;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::GroundMetric;

pub use barycenter::{barycenter, barycenter_warm, BarycenterState};
pub use emd::exact_emd;
pub use unbalanced::{objective_terms, signed_distance, unbalanced_distance, CostTerms, UnbalancedResult};

/// Default relative entropy level, as a fraction of the median ground cost.
pub const DEFAULT_EPSILON_REL: f64 = 0.002;

/// Scalings outside `[1e-50, 1e50]` are absorbed into log-domain offsets.
pub(crate) const ABSORB_THRESHOLD: f64 = 1e50;

/// Kernel entries below this are dropped. With scalings bounded by
/// [`ABSORB_THRESHOLD`] a dropped entry carries at most `1e-100` of plan
/// mass, and no product of a kernel entry with scalings can go subnormal.
pub(crate) const KERNEL_FLOOR: f64 = 1e-200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl OtParams {
    pub fn new(epsilon: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            epsilon,
            gamma,
            max_iter: 1000,
            tol: 1e-6,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters matching `kernel`'s entropy level.
    pub fn for_kernel(kernel: &OtKernel, gamma: f64) -> Result<Self> {
        Self::new(kernel.epsilon(), gamma)
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn psi(&self) -> f64 {
        self.gamma / (self.gamma + self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("max_iter and tol must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn check_kernel(&self, kernel: &OtKernel) -> Result<()> {
        self.validate()?;
        if (self.epsilon - kernel.epsilon()).abs() > 1e-12 * kernel.epsilon() {
            return Err(Error::InvalidParameter(format!(
                "params epsilon {} does not match kernel epsilon {}",
                self.epsilon,
                kernel.epsilon()
            )));
        }
        Ok(())
    }
}

pub(crate) fn flush(x: f64) -> f64 {
    if x < KERNEL_FLOOR {
        0.0
    } else {
        x
    }
}

/// Gibbs kernel `exp(-M / epsilon)` together with the metric it came from.
#[derive(Debug, Clone)]
pub struct OtKernel {
    kernel: DMatrix<f64>,
    metric: GroundMetric,
    epsilon: f64,
}

impl OtKernel {
    pub fn new(metric: &GroundMetric, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        let kernel = metric.costs().map(|c| flush((-c / epsilon).exp()));
        Ok(Self {
            kernel,
            metric: metric.clone(),
            epsilon,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn metric(&self) -> &GroundMetric {
        &self.metric
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.nrows() == 0
    }
}

/// Builds the kernel with `epsilon = epsilon_rel * median(off-diagonal costs)`.
pub fn build_kernel(metric: &GroundMetric, epsilon_rel: f64) -> Result<OtKernel> {
    if !(epsilon_rel > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon_rel must be positive, got {epsilon_rel}")));
    }
    let median = metric
        .median_off_diagonal()
        .ok_or_else(|| Error::DegenerateMetric("metric has no off-diagonal entries".into()))?;
    if !(median > 0.0) {
        return Err(Error::DegenerateMetric("median ground cost is zero".into()));
    }
    OtKernel::new(metric, epsilon_rel * median)
}

/// Marginal relaxation `-max(M) / (2 ln 0.8)`: at the largest ground cost a
/// unit dirac still transports 80% of its mass.
pub fn default_gamma(metric: &GroundMetric) -> Result<f64> {
    let max = metric.max();
    if !(max > 0.0) {
        return Err(Error::DegenerateMetric("ground metric is identically zero".into()));
    }
    Ok(-max / (2.0 * 0.8f64.ln()))
}
