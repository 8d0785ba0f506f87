use nalgebra::{DMatrix, DVector};

use super::mwe::update_sigma;
use super::CdOptions;

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `(1/2n)‖y - Lx‖² + λ‖w ⊙ x‖₁`.
pub fn lasso_objective(design: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>, lambda: f64, weights: Option<&DVector<f64>>) -> f64 {
    let n = design.nrows() as f64;
    let r = y - design * x;
    let penalty: f64 = match weights {
        Some(w) => w.iter().zip(x.iter()).map(|(w, x)| w * x.abs()).sum(),
        None => x.lp_norm(1),
    };
    r.norm_squared() / (2.0 * n) + lambda * penalty
}

/// Weighted Lasso by cyclic coordinate descent, `weights = None` for plain ℓ1.
pub fn solve_lasso(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    weights: Option<&DVector<f64>>,
    nonneg: bool,
    opts: CdOptions,
) -> DVector<f64> {
    let mut x = DVector::zeros(design.ncols());
    solve_lasso_warm(design, y, lambda, weights, nonneg, opts, &mut x);
    x
}

/// Coordinate descent from the starting point in `x`. Returns the sweep count.
pub fn solve_lasso_warm(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    weights: Option<&DVector<f64>>,
    nonneg: bool,
    opts: CdOptions,
    x: &mut DVector<f64>,
) -> usize {
    let n = design.nrows() as f64;
    let norms: Vec<f64> = design.column_iter().map(|c| c.norm_squared() / n).collect();
    let mut residual = y - &*design * &*x;
    for sweep in 1..=opts.max_iter {
        let mut max_move = 0.0f64;
        for (j, col) in design.column_iter().enumerate() {
            let q = norms[j];
            if q == 0.0 {
                x[j] = 0.0;
                continue;
            }
            let old = x[j];
            let c = col.dot(&residual) / n + q * old;
            let thresh = lambda * weights.map_or(1.0, |w| w[j]);
            let new = if nonneg {
                (c - thresh).max(0.0) / q
            } else {
                soft_threshold(c, thresh) / q
            };
            let delta = new - old;
            if delta != 0.0 {
                residual.axpy(-delta, &col, 1.0);
                x[j] = new;
                max_move = max_move.max(delta.abs());
            }
        }
        if max_move < opts.tol {
            return sweep;
        }
    }
    opts.max_iter
}

/// `w_j = 1 / (2 sqrt(|x_j| + η))`, the majorizing weights of `sqrt(|x| + η)`.
pub fn reweighting_weights(x: &DVector<f64>, eta: f64) -> DVector<f64> {
    x.map(|v| 0.5 / (v.abs() + eta).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReweightedResult {
    pub x: DVector<f64>,
    pub weights: DVector<f64>,
    /// `(1/2n)‖y - Lx‖² + λ Σ sqrt(|x_j| + η)` after every weighted solve.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

pub(crate) fn support(x: &DVector<f64>, scale: Option<&DVector<f64>>) -> Vec<bool> {
    x.iter()
        .enumerate()
        .map(|(j, v)| v.abs() / scale.map_or(1.0, |d| d[j]) > 1e-8)
        .collect()
}

/// Adaptive Lasso with the square-root penalty, solved as a sequence of
/// weighted Lasso problems. Stops when the support repeats or after
/// `max_reweight` solves. `depth` maps coefficients back to amplitudes
/// for the support test.
pub fn solve_reweighted_lasso(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    eta: f64,
    max_reweight: usize,
    depth: Option<&DVector<f64>>,
    opts: CdOptions,
) -> ReweightedResult {
    let p = design.ncols();
    let n = design.nrows() as f64;
    let mut x = DVector::zeros(p);
    let mut weights = DVector::from_element(p, 1.0);
    let mut trace = Vec::new();
    let mut previous: Option<Vec<bool>> = None;
    let mut iterations = 0;
    for _ in 0..max_reweight {
        iterations += 1;
        solve_lasso_warm(design, y, lambda, Some(&weights), false, opts, &mut x);
        let r = y - design * &x;
        let penalty: f64 = x.iter().map(|v| (v.abs() + eta).sqrt()).sum();
        trace.push(r.norm_squared() / (2.0 * n) + lambda * penalty);
        weights = reweighting_weights(&x, eta);
        let current = support(&x, depth);
        if previous.as_ref() == Some(&current) {
            break;
        }
        previous = Some(current);
    }
    ReweightedResult {
        x,
        weights,
        objective_trace: trace,
        iterations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcomitantResult {
    pub x: DVector<f64>,
    pub sigma: f64,
    pub iterations: usize,
}

/// Jointly estimates coefficients and noise level for
/// `(1/2nσ)‖y - Lx‖² + σ/2 + λ‖w ⊙ x‖₁` with `σ >= sigma0`,
/// alternating Lasso solves at penalty `λσ` and closed-form `σ` updates.
pub fn solve_concomitant_lasso(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    sigma0: f64,
    weights: Option<&DVector<f64>>,
    opts: CdOptions,
    max_outer: usize,
) -> ConcomitantResult {
    let n = design.nrows();
    let mut x = DVector::zeros(design.ncols());
    let mut sigma = update_sigma(y.norm(), n, sigma0);
    let mut iterations = 0;
    for _ in 0..max_outer {
        iterations += 1;
        let before = x.clone();
        solve_lasso_warm(design, y, lambda * sigma, weights, false, opts, &mut x);
        let next = update_sigma((y - design * &x).norm(), n, sigma0);
        let moved = (&x - before).amax().max((next - sigma).abs());
        sigma = next;
        if moved < opts.tol {
            break;
        }
    }
    ConcomitantResult { x, sigma, iterations }
}
