use nalgebra::DVector;

use super::group_lasso::{group_sweep, l21, residual_of};
use super::CdOptions;
use crate::model::ProblemInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct DirtyResult {
    /// Row-sparse part shared across subjects (ℓ21 penalty, weight `mu`).
    pub common: Vec<DVector<f64>>,
    /// Subject-specific part (ℓ1 penalty, weight `lambda`).
    pub specific: Vec<DVector<f64>>,
    /// Objective after each half-step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl DirtyResult {
    pub fn estimates(&self) -> Vec<DVector<f64>> {
        self.common.iter().zip(&self.specific).map(|(c, s)| c + s).collect()
    }
}

fn objective(instance: &ProblemInstance, residuals: &[DVector<f64>], common: &[DVector<f64>], specific: &[DVector<f64>], lambda: f64, mu: f64) -> f64 {
    let n = instance.n_sensors() as f64;
    let fit: f64 = residuals.iter().map(|r| r.norm_squared()).sum::<f64>() / (2.0 * n);
    let l1: f64 = specific.iter().map(|x| x.lp_norm(1)).sum();
    fit + mu * l21(common) + lambda * l1
}

/// Dirty model: alternates a group-lasso sweep on the common part with a
/// Lasso sweep on the specific parts, sharing one residual per subject.
pub fn solve_dirty(instance: &ProblemInstance, lambda: f64, mu: f64, opts: CdOptions) -> DirtyResult {
    let subjects = instance.subjects();
    let p = instance.n_sources();
    let n = instance.n_sensors() as f64;
    let mut common = vec![DVector::zeros(p); subjects.len()];
    let mut specific = vec![DVector::zeros(p); subjects.len()];
    let mut residuals: Vec<DVector<f64>> = subjects.iter().map(|s| s.measurement.clone()).collect();
    let norms: Vec<Vec<f64>> = subjects
        .iter()
        .map(|s| s.design.column_iter().map(|c| c.norm_squared() / n).collect())
        .collect();
    let mut trace = vec![objective(instance, &residuals, &common, &specific, lambda, mu)];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_move = group_sweep(instance, mu, &mut common, &mut residuals);
        trace.push(objective(instance, &residuals, &common, &specific, lambda, mu));

        for (s, sub) in subjects.iter().enumerate() {
            for (j, col) in sub.design.column_iter().enumerate() {
                let q = norms[s][j];
                if q == 0.0 {
                    continue;
                }
                let old = specific[s][j];
                let c = col.dot(&residuals[s]) / n + q * old;
                let new = if c > lambda {
                    (c - lambda) / q
                } else if c < -lambda {
                    (c + lambda) / q
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    residuals[s].axpy(-delta, &col, 1.0);
                    specific[s][j] = new;
                    max_move = max_move.max(delta.abs());
                }
            }
        }
        trace.push(objective(instance, &residuals, &common, &specific, lambda, mu));
        if max_move < opts.tol {
            break;
        }
    }
    // Refresh residuals from scratch so the final trace entry is exact.
    for (s, sub) in subjects.iter().enumerate() {
        residuals[s] = residual_of(&sub.design, &sub.measurement, &(&common[s] + &specific[s]));
    }
    if let Some(last) = trace.last_mut() {
        *last = objective(instance, &residuals, &common, &specific, lambda, mu);
    }
    DirtyResult {
        common,
        specific,
        objective_trace: trace,
        iterations,
    }
}
