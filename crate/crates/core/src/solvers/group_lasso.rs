use nalgebra::{DMatrix, DVector};

use super::CdOptions;
use crate::model::ProblemInstance;

/// `max_j ‖(L_jᵀ y_s / n)_s‖₂`, above which every row is zero.
pub fn group_lambda_max(instance: &ProblemInstance) -> f64 {
    let n = instance.n_sensors() as f64;
    let corr: Vec<DVector<f64>> = instance
        .subjects()
        .iter()
        .map(|s| s.design.tr_mul(&s.measurement) / n)
        .collect();
    (0..instance.n_sources())
        .map(|j| corr.iter().map(|c| c[j] * c[j]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Exact minimizer of `Σ_s (q_s/2) z_s² - g_s z_s + λ‖z‖₂`.
///
/// The nonzero solution is `z_s = g_s ρ / (q_s ρ + λ)` where `ρ = ‖z‖` solves
/// `Σ_s g_s² / (q_s ρ + λ)² = 1`; the left side is convex and decreasing in
/// `ρ`, so Newton's method from `ρ = 0` increases monotonically to the root.
pub(crate) fn block_minimizer(q: &[f64], g: &[f64], lambda: f64, out: &mut [f64]) {
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gnorm <= lambda || q.iter().all(|&v| v == 0.0) {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    if lambda == 0.0 {
        for ((o, &qs), &gs) in out.iter_mut().zip(q).zip(g) {
            *o = if qs > 0.0 { gs / qs } else { 0.0 };
        }
        return;
    }
    let mut rho = 0.0f64;
    for _ in 0..200 {
        let mut h = -1.0;
        let mut dh = 0.0;
        for (&qs, &gs) in q.iter().zip(g) {
            let d = qs * rho + lambda;
            h += gs * gs / (d * d);
            dh -= 2.0 * gs * gs * qs / (d * d * d);
        }
        if h <= 0.0 || dh == 0.0 {
            break;
        }
        let step = h / dh;
        rho -= step;
        if -step <= 1e-15 * rho.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    for ((o, &qs), &gs) in out.iter_mut().zip(q).zip(g) {
        *o = gs * rho / (qs * rho + lambda);
    }
}

/// Group Lasso `(1/2n) Σ_s ‖y_s - L_s x_s‖² + λ Σ_j ‖(x_s,j)_s‖₂` by exact
/// block coordinate descent over source rows. Returns one vector per subject.
pub fn solve_group_lasso(instance: &ProblemInstance, lambda: f64, opts: CdOptions) -> Vec<DVector<f64>> {
    let subjects = instance.subjects();
    let s_count = subjects.len();
    let p = instance.n_sources();
    let mut coefs = vec![DVector::zeros(p); s_count];
    let mut residuals: Vec<DVector<f64>> = subjects.iter().map(|s| s.measurement.clone()).collect();
    group_sweeps(instance, lambda, opts, &mut coefs, &mut residuals);
    coefs
}

/// Runs group coordinate sweeps on `coefs`, keeping `residuals` consistent.
pub(crate) fn group_sweeps(
    instance: &ProblemInstance,
    lambda: f64,
    opts: CdOptions,
    coefs: &mut [DVector<f64>],
    residuals: &mut [DVector<f64>],
) -> usize {
    for sweep in 1..=opts.max_iter {
        let max_move = group_sweep(instance, lambda, coefs, residuals);
        if max_move < opts.tol {
            return sweep;
        }
    }
    opts.max_iter
}

pub(crate) fn group_sweep(
    instance: &ProblemInstance,
    lambda: f64,
    coefs: &mut [DVector<f64>],
    residuals: &mut [DVector<f64>],
) -> f64 {
    let subjects = instance.subjects();
    let n = instance.n_sensors() as f64;
    let s_count = subjects.len();
    let mut q = vec![0.0; s_count];
    let mut g = vec![0.0; s_count];
    let mut z = vec![0.0; s_count];
    let mut max_move = 0.0f64;
    for j in 0..instance.n_sources() {
        for (s, sub) in subjects.iter().enumerate() {
            let col = sub.design.column(j);
            q[s] = col.norm_squared() / n;
            g[s] = col.dot(&residuals[s]) / n + q[s] * coefs[s][j];
        }
        block_minimizer(&q, &g, lambda, &mut z);
        for (s, sub) in subjects.iter().enumerate() {
            let delta = z[s] - coefs[s][j];
            if delta != 0.0 {
                residuals[s].axpy(-delta, &sub.design.column(j), 1.0);
                coefs[s][j] = z[s];
                max_move = max_move.max(delta.abs());
            }
        }
    }
    max_move
}

/// ℓ21 norm of the stacked coefficients.
pub(crate) fn l21(coefs: &[DVector<f64>]) -> f64 {
    let p = coefs.first().map_or(0, |c| c.len());
    (0..p)
        .map(|j| coefs.iter().map(|c| c[j] * c[j]).sum::<f64>().sqrt())
        .sum()
}

pub(crate) fn residual_of(design: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    y - design * x
}
