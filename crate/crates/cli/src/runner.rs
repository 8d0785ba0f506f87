//! Maps a solver name and its settings onto the estimators of `mwe_core`.
//!
//! Regularization is always relative:
//!
//! * `lasso` is the concomitant Lasso with `λ_s = λ_rel λmax_s / σ_s`, the
//!   same scaling MWE uses, so `mwe1` at `mu = 0` reproduces it;
//! * `rw-lasso` uses `λ_s = λ_rel λmax_s`;
//! * `group-lasso` uses `λ_rel` times the group `λmax`;
//! * `dirty` uses `λ_rel max_s λmax_s` on the specific part and
//!   `mu` times the group `λmax` on the common part;
//! * `mne` uses the ridge weight `λ_rel` times the mean squared column norm
//!   divided by `n`.

use mwe_core::model::lambda_max;
use mwe_core::solvers::{
    group_lambda_max, solve_concomitant_lasso, solve_dirty, solve_group_lasso, solve_mne, solve_mwe05, solve_mwe1,
    solve_reweighted_lasso, subject_lambdas, SolverConfig,
};
use mwe_core::{ProblemInstance, SignedVector};
use nalgebra::DVector;

use crate::config::SolverName;
use crate::error::CliError;

/// What every solver reports, in solver (depth-weighted) scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub estimates: Vec<DVector<f64>>,
    pub sigmas: Vec<f64>,
    pub barycenter: Option<SignedVector>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub sinkhorn_converged: Option<bool>,
    /// Absolute regularization actually applied, per subject.
    pub lambdas: Vec<f64>,
}

impl RunOutput {
    fn plain(estimates: Vec<DVector<f64>>, lambdas: Vec<f64>, trace: Vec<f64>, converged: bool, iterations: usize) -> Self {
        Self {
            sigmas: Vec::new(),
            barycenter: None,
            objective_trace: trace,
            converged,
            iterations,
            sinkhorn_converged: None,
            lambdas,
            estimates,
        }
    }

    /// Estimates mapped back to amplitudes.
    pub fn amplitudes(&self, instance: &ProblemInstance) -> Vec<DVector<f64>> {
        self.estimates
            .iter()
            .zip(instance.subjects())
            .map(|(x, s)| s.to_amplitudes(x))
            .collect()
    }
}

/// Sums per-subject traces entry by entry, holding each at its last value.
fn combined_trace(traces: &[Vec<f64>]) -> Vec<f64> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|k| traces.iter().filter_map(|t| t.get(k).or(t.last())).sum())
        .collect()
}

pub fn run_solver(name: SolverName, instance: &ProblemInstance, config: &SolverConfig) -> Result<RunOutput, CliError> {
    crate::config::validate_for(name, config).map_err(CliError::Validation)?;
    let subjects = instance.subjects();
    let n = instance.n_sensors() as f64;
    let out = match name {
        SolverName::Mne => {
            let q: f64 = subjects.iter().map(|s| s.design.norm_squared()).sum::<f64>()
                / (subjects.len() as f64 * instance.n_sources() as f64 * n);
            let lambda = config.lambda_rel * q;
            RunOutput::plain(solve_mne(instance, lambda)?, vec![lambda; subjects.len()], Vec::new(), true, 1)
        }
        SolverName::Lasso => {
            let (lambdas, sigma0) = subject_lambdas(instance, config)?;
            let mut estimates = Vec::new();
            let mut sigmas = Vec::new();
            let mut traces = Vec::new();
            let mut converged = true;
            let mut iterations = 0;
            for (sub, &lambda) in subjects.iter().zip(&lambdas) {
                let r = solve_concomitant_lasso(&sub.design, &sub.measurement, lambda, sigma0, None, config.cd, config.max_outer);
                let resid = (&sub.measurement - &sub.design * &r.x).norm_squared();
                traces.push(vec![resid / (2.0 * n * r.sigma) + r.sigma / 2.0 + lambda * r.x.lp_norm(1)]);
                converged &= r.iterations < config.max_outer;
                iterations = iterations.max(r.iterations);
                estimates.push(r.x);
                sigmas.push(r.sigma);
            }
            RunOutput {
                sigmas,
                ..RunOutput::plain(estimates, lambdas, combined_trace(&traces), converged, iterations)
            }
        }
        SolverName::RwLasso => {
            let lambdas: Vec<f64> = lambda_max(instance).iter().map(|l| config.lambda_rel * l).collect();
            let mut estimates = Vec::new();
            let mut traces = Vec::new();
            let mut iterations = 0;
            for (sub, &lambda) in subjects.iter().zip(&lambdas) {
                let r = solve_reweighted_lasso(
                    &sub.design,
                    &sub.measurement,
                    lambda,
                    config.eta,
                    config.max_reweight,
                    sub.depth.as_ref(),
                    config.cd,
                );
                iterations = iterations.max(r.iterations);
                traces.push(r.objective_trace);
                estimates.push(r.x);
            }
            let converged = iterations < config.max_reweight;
            RunOutput::plain(estimates, lambdas, combined_trace(&traces), converged, iterations)
        }
        SolverName::GroupLasso => {
            let lambda = config.lambda_rel * group_lambda_max(instance);
            let estimates = solve_group_lasso(instance, lambda, config.cd);
            let fit: f64 = subjects
                .iter()
                .zip(&estimates)
                .map(|(s, x)| (&s.measurement - &s.design * x).norm_squared())
                .sum::<f64>()
                / (2.0 * n);
            let l21: f64 = (0..instance.n_sources())
                .map(|j| estimates.iter().map(|x| x[j] * x[j]).sum::<f64>().sqrt())
                .sum();
            RunOutput::plain(estimates, vec![lambda; subjects.len()], vec![fit + lambda * l21], true, 1)
        }
        SolverName::Dirty => {
            let lambda = config.lambda_rel * lambda_max(instance).into_iter().fold(0.0, f64::max);
            let mu = config.mu * group_lambda_max(instance);
            let r = solve_dirty(instance, lambda, mu, config.cd);
            let converged = r.iterations < config.cd.max_iter;
            RunOutput::plain(r.estimates(), vec![lambda; subjects.len()], r.objective_trace, converged, r.iterations)
        }
        SolverName::Mwe1 | SolverName::Mwe05 => {
            let r = if name == SolverName::Mwe1 {
                solve_mwe1(instance, config)?
            } else {
                solve_mwe05(instance, config)?
            };
            RunOutput {
                estimates: r.coefficients.iter().map(SignedVector::values).collect(),
                sigmas: r.sigmas,
                barycenter: Some(r.barycenter),
                objective_trace: r.objective_trace,
                converged: r.converged,
                iterations: r.iterations,
                sinkhorn_converged: Some(r.sinkhorn_converged),
                lambdas: r.lambdas,
            }
        }
    };
    Ok(out)
}
