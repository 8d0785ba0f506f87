use nalgebra::{DMatrix, DVector};

use super::scaling::{relative_change, ScalingPair};
use super::{OtKernel, OtParams};
use crate::error::{Error, Result};
use crate::model::{GroundMetric, SignedVector};

/// Decomposition of the unbalanced objective at a given plan.
///
/// `transport + entropy` equals `<P, M> - eps H(P)` with
/// `H(P) = -sum P (log P - 1)`, so the empty plan costs exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub transport: f64,
    pub entropy: f64,
    pub marginal_penalty: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.transport + self.entropy + self.marginal_penalty
    }
}

#[derive(Debug, Clone)]
pub struct UnbalancedResult {
    pub cost: f64,
    pub terms: CostTerms,
    pub plan: DMatrix<f64>,
    pub row_marginal: DVector<f64>,
    pub col_marginal: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `KL(x | y) = <x, log(x / y)> - <x, 1> + <y, 1>`, `+inf` when `x > 0 = y`.
pub(crate) fn kl(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            if a > 0.0 {
                if b > 0.0 {
                    a * (a / b).ln() - a + b
                } else {
                    f64::INFINITY
                }
            } else {
                b
            }
        })
        .sum()
}

/// Evaluates the unbalanced objective terms of `plan` against targets `a`, `b`.
pub fn objective_terms(
    plan: &DMatrix<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    metric: &GroundMetric,
    epsilon: f64,
    gamma: f64,
) -> CostTerms {
    let mut transport = 0.0;
    let mut entropy = 0.0;
    for (pij, mij) in plan.iter().zip(metric.costs().iter()) {
        if *pij > 0.0 {
            transport += pij * mij;
            entropy += pij * (pij.ln() - 1.0);
        }
    }
    let rows: Vec<f64> = plan.row_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = plan.column_iter().map(|c| c.sum()).collect();
    CostTerms {
        transport,
        entropy: epsilon * entropy,
        marginal_penalty: gamma * (kl(&rows, a.as_slice()) + kl(&cols, b.as_slice())),
    }
}

/// Entropic unbalanced transport between two nonnegative vectors.
///
/// Iterates the scalings until the plan's row and column sums move by less
/// than `tol` (relative max-norm) between sweeps.
pub fn unbalanced_distance(
    a: &DVector<f64>,
    b: &DVector<f64>,
    kernel: &OtKernel,
    params: &OtParams,
) -> Result<UnbalancedResult> {
    params.check_kernel(kernel)?;
    let p = kernel.len();
    if a.len() != p || b.len() != p {
        return Err(Error::Shape(format!(
            "histograms of length {} and {} for a kernel of size {p}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidParameter("histograms must be finite and nonnegative".into()));
    }
    let psi = params.psi();
    let mut pair = ScalingPair::new(p);
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let rows = pair.update_u(kernel, a.as_slice(), psi);
        let ktu = pair.column_products(kernel);
        pair.update_v(kernel, &ktu, b.as_slice(), psi);
        let cols: Vec<f64> = ktu.iter().zip(&pair.v).map(|(k, v)| k * v).collect();
        if !pair.is_finite() {
            return Err(Error::NumericalBlowup { iterations });
        }
        pair.absorb_if_needed(kernel);
        let change = match &prev {
            Some((r, c)) => relative_change(&rows, r).max(relative_change(&cols, c)),
            None => f64::INFINITY,
        };
        prev = Some((rows, cols));
        if change < params.tol {
            converged = true;
            break;
        }
    }
    let plan = pair.plan(kernel);
    if plan.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalBlowup { iterations });
    }
    let terms = objective_terms(&plan, a, b, kernel.metric(), kernel.epsilon(), params.gamma);
    let row_marginal = DVector::from_iterator(p, plan.row_iter().map(|r| r.sum()));
    let col_marginal = DVector::from_iterator(p, plan.column_iter().map(|c| c.sum()));
    Ok(UnbalancedResult {
        cost: terms.total(),
        terms,
        plan,
        row_marginal,
        col_marginal,
        iterations,
        converged,
    })
}

/// Signed extension: positive and negative parts are transported separately.
pub fn signed_distance(
    a: &SignedVector,
    b: &SignedVector,
    kernel: &OtKernel,
    params: &OtParams,
) -> Result<f64> {
    let pos = unbalanced_distance(&a.pos, &b.pos, kernel, params)?;
    let neg = unbalanced_distance(&a.neg, &b.neg, kernel, params)?;
    Ok(pos.cost + neg.cost)
}
