use nalgebra::DVector;

use super::scaling::{relative_change, ScalingPair};
use super::unbalanced::kl;
use super::{OtKernel, OtParams};
use crate::error::{Error, Result};

/// Output of the generalized Sinkhorn barycenter iterations.
#[derive(Debug, Clone)]
pub struct BarycenterState {
    pub barycenter: DVector<f64>,
    /// Row sums `u ⊙ K v` of each input's plan.
    pub left_marginals: Vec<DVector<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative barycenter change at the last sweep.
    pub residual: f64,
    pairs: Vec<ScalingPair>,
}

impl BarycenterState {
    pub fn n_inputs(&self) -> usize {
        self.pairs.len()
    }

    /// Full scaling `U` of input `s`; may overflow to `inf` for tiny epsilon.
    pub fn u(&self, s: usize, kernel: &OtKernel) -> DVector<f64> {
        DVector::from_iterator(self.pairs[s].u.len(), self.pairs[s].log_u(kernel.epsilon()).into_iter().map(f64::exp))
    }

    pub fn v(&self, s: usize, kernel: &OtKernel) -> DVector<f64> {
        DVector::from_iterator(self.pairs[s].v.len(), self.pairs[s].log_v(kernel.epsilon()).into_iter().map(f64::exp))
    }

    /// Part of the unbalanced objective of input `s` that does not involve
    /// the input itself: `<P, M> + eps sum P (log P - 1) + gamma KL(P'1 | barycenter)`.
    /// Also returns the plan's row sums.
    pub fn plan_terms(&self, s: usize, kernel: &OtKernel, gamma: f64) -> (f64, DVector<f64>) {
        let (value, rows, cols) = self.pairs[s].plan_summary(kernel);
        let penalty = gamma * kl(&cols, self.barycenter.as_slice());
        (value + penalty, DVector::from_vec(rows))
    }

    /// Largest log-discrepancy between the stored scalings and one more
    /// application of the `u` and `v` updates. Zero scalings must stay zero.
    pub fn fixed_point_residual(&self, inputs: &[DVector<f64>], kernel: &OtKernel, params: &OtParams) -> f64 {
        let psi = params.psi();
        let eps = kernel.epsilon();
        let mut worst = 0.0f64;
        let mut compare = |old: &[f64], new: &[f64]| {
            for (a, b) in old.iter().zip(new) {
                let d = match (*a == f64::NEG_INFINITY, *b == f64::NEG_INFINITY) {
                    (true, true) => 0.0,
                    (false, false) => (a - b).abs(),
                    _ => f64::INFINITY,
                };
                worst = worst.max(d);
            }
        };
        for (pair, x) in self.pairs.iter().zip(inputs) {
            let mut probe = pair.clone();
            probe.update_u(kernel, x.as_slice(), psi);
            compare(&pair.log_u(eps), &probe.log_u(eps));
            let mut probe = pair.clone();
            let ktu = probe.column_products(kernel);
            probe.update_v(kernel, &ktu, self.barycenter.as_slice(), psi);
            compare(&pair.log_v(eps), &probe.log_v(eps));
        }
        worst
    }
}

/// Power mean `(mean_s a_s^t)^(1/t)` of the columns, evaluated in the log domain.
fn power_mean(columns: &[Vec<f64>], t: f64) -> Vec<f64> {
    let p = columns[0].len();
    let s = columns.len() as f64;
    let mut out = vec![0.0; p];
    let mut logs = Vec::with_capacity(columns.len());
    for (j, o) in out.iter_mut().enumerate() {
        logs.clear();
        logs.extend(columns.iter().filter(|c| c[j] > 0.0).map(|c| t * c[j].ln()));
        if logs.is_empty() {
            continue;
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        *o = ((max + sum.ln() - s.ln()) / t).exp();
    }
    out
}

/// Unbalanced Wasserstein barycenter of nonnegative inputs with uniform weights.
pub fn barycenter(inputs: &[DVector<f64>], kernel: &OtKernel, params: &OtParams) -> Result<BarycenterState> {
    barycenter_warm(inputs, kernel, params, None)
}

/// Same as [`barycenter`], starting from the scalings of a previous state.
///
/// Iterates until the barycenter moves by less than `tol` relative to its
/// max-norm. The barycenter and left marginals are invariant to the
/// rescaling `(c u, v / c)`, which the scalings themselves only settle
/// along at rate `psi^2`.
pub fn barycenter_warm(
    inputs: &[DVector<f64>],
    kernel: &OtKernel,
    params: &OtParams,
    warm: Option<BarycenterState>,
) -> Result<BarycenterState> {
    params.check_kernel(kernel)?;
    let p = kernel.len();
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("barycenter needs at least one input".into()));
    }
    for (s, x) in inputs.iter().enumerate() {
        if x.len() != p {
            return Err(Error::Shape(format!("input {s} has length {}, expected {p}", x.len())));
        }
        if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("input {s} must be finite and nonnegative")));
        }
    }
    let psi = params.psi();
    let (mut pairs, mut previous) = match warm {
        Some(state) if state.pairs.len() == inputs.len() && state.barycenter.len() == p => {
            (state.pairs, Some(state.barycenter.as_slice().to_vec()))
        }
        _ => ((0..inputs.len()).map(|_| ScalingPair::new(p)).collect(), None),
    };

    let mut bar = vec![0.0; p];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut ktus: Vec<Vec<f64>> = vec![Vec::new(); inputs.len()];
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); inputs.len()];
    while iterations < params.max_iter {
        iterations += 1;
        for (s, (pair, x)) in pairs.iter_mut().zip(inputs).enumerate() {
            pair.update_u(kernel, x.as_slice(), psi);
            let ktu = pair.column_products(kernel);
            cols[s] = ktu.iter().zip(&pair.v).map(|(k, v)| k * v).collect();
            ktus[s] = ktu;
        }
        bar = power_mean(&cols, 1.0 - psi);
        for (pair, ktu) in pairs.iter_mut().zip(&ktus) {
            pair.update_v(kernel, ktu, &bar, psi);
            if !pair.is_finite() || bar.iter().any(|b| !b.is_finite()) {
                return Err(Error::NumericalBlowup { iterations });
            }
            pair.absorb_if_needed(kernel);
        }
        residual = match &previous {
            Some(prev) => relative_change(&bar, prev),
            None => f64::INFINITY,
        };
        previous = Some(bar.clone());
        if residual < params.tol {
            converged = true;
            break;
        }
    }
    let left_marginals = pairs
        .iter()
        .map(|pair| DVector::from_vec(pair.row_marginal(kernel)))
        .collect();
    Ok(BarycenterState {
        barycenter: DVector::from_vec(bar),
        left_marginals,
        iterations,
        converged,
        residual,
        pairs,
    })
}
