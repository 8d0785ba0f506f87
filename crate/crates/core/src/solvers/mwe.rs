use nalgebra::{DMatrix, DVector};

use super::lasso::{reweighting_weights, support};
use super::{LambdaScale, SolveResult, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{lambda_max, sigma_floor, ProblemInstance, SignedVector};
use crate::ot::{barycenter_warm, BarycenterState, OtKernel, OtParams};

/// Concomitant noise update: the minimizer of `r²/(2nσ) + σ/2` over `σ >= sigma0`.
pub fn update_sigma(residual_norm: f64, n: usize, sigma0: f64) -> f64 {
    (residual_norm / (n as f64).sqrt()).max(sigma0)
}

/// Per-coordinate penalty of the nonnegative subproblem
/// `(1/2n)‖y - Lx‖² + t (<x, 1> - <log x, m>) + l ‖w ⊙ x‖₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatePenalty {
    /// `t`, the weight of the transport term.
    pub ot_weight: f64,
    /// `l`, the ℓ1 weight.
    pub l1: f64,
    pub weights: Option<DVector<f64>>,
}

impl CoordinatePenalty {
    fn threshold(&self, j: usize) -> f64 {
        self.l1 * self.weights.as_ref().map_or(1.0, |w| w[j])
    }
}

/// Nonnegative minimizer of `q x²/2 - c x + t (x - m log x) + l x`, i.e. the
/// nonnegative root of `q x² + (t + l - c) x - t m = 0`.
pub(crate) fn positive_root(q: f64, c: f64, t: f64, l: f64, m: f64, j: usize) -> Result<f64> {
    let b = t + l - c;
    let tm = t * m;
    if tm <= 0.0 {
        return if q > 0.0 {
            Ok((-b / q).max(0.0))
        } else if b >= 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Unbounded(j))
        };
    }
    let root = if q > 0.0 {
        let disc = (b * b + 4.0 * q * tm).sqrt();
        if b >= 0.0 {
            2.0 * tm / (b + disc)
        } else {
            (disc - b) / (2.0 * q)
        }
    } else if b > 0.0 {
        tm / b
    } else {
        return Err(Error::Unbounded(j));
    };
    // Keep the log term finite when the root underflows.
    Ok(root.max(f64::MIN_POSITIVE))
}

/// Runs coordinate sweeps on `x` for the design `sign * L`, updating
/// `residual = y - L (x_pos - x_neg)` in place. Returns the sweep count.
#[allow(clippy::too_many_arguments)]
fn signed_sweeps(
    design: &DMatrix<f64>,
    norms: &[f64],
    sign: f64,
    marginal: &DVector<f64>,
    penalty: &CoordinatePenalty,
    x: &mut DVector<f64>,
    residual: &mut DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = design.nrows() as f64;
    let t = penalty.ot_weight;
    for sweep in 1..=max_iter {
        let mut max_move = 0.0f64;
        for (j, col) in design.column_iter().enumerate() {
            let q = norms[j];
            let old = x[j];
            let c = sign * col.dot(residual) / n + q * old;
            let new = positive_root(q, c, t, penalty.threshold(j), marginal[j], j)?;
            let delta = new - old;
            if delta != 0.0 {
                residual.axpy(-sign * delta, &col, 1.0);
                x[j] = new;
                max_move = max_move.max(delta.abs());
            }
        }
        if max_move < tol {
            return Ok(sweep);
        }
    }
    Ok(max_iter)
}

/// Coordinate descent on the nonnegative subproblem for one subject, starting
/// from `x` and stopping when no coordinate moves by more than `tol`.
pub fn mwe_coordinate_update(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    marginal: &DVector<f64>,
    penalty: &CoordinatePenalty,
    x: &mut DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let p = design.ncols();
    if y.len() != design.nrows() || marginal.len() != p || x.len() != p {
        return Err(Error::Shape("design, measurement, marginal and x disagree".into()));
    }
    if x.iter().chain(marginal.iter()).any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter("x and marginal must be nonnegative".into()));
    }
    let n = design.nrows() as f64;
    let norms: Vec<f64> = design.column_iter().map(|c| c.norm_squared() / n).collect();
    let mut residual = y - design * &*x;
    signed_sweeps(design, &norms, 1.0, marginal, penalty, x, &mut residual, tol, max_iter)
}

/// Entries this far below the largest one are handed to the transport
/// step as zeros, so their plan rows and marginals vanish.
pub const PRUNE_REL: f64 = 1e-6;

fn prune(x: &DVector<f64>) -> DVector<f64> {
    let cut = x.amax() * PRUNE_REL;
    x.map(|v| if v > cut { v } else { 0.0 })
}

/// Signed state of one transport side (positive or negative parts).
struct Side {
    coefs: Vec<DVector<f64>>,
    marginals: Vec<DVector<f64>>,
    /// Transport terms not involving the subject's own coefficients.
    plan_terms: Vec<f64>,
    barycenter: DVector<f64>,
    state: Option<BarycenterState>,
}

struct Plans {
    marginals: Vec<DVector<f64>>,
    plan_terms: Vec<f64>,
    barycenter: DVector<f64>,
}

impl Side {
    /// Starts from `u = v = 1`, i.e. every plan equal to the kernel, whose
    /// row sums seed the marginals. The matching barycenter is the common
    /// column sum, so the plan terms reduce to `-eps sum K`.
    fn new(s: usize, p: usize, kernel: Option<&OtKernel>) -> Self {
        let (marginal, terms) = match kernel {
            Some(k) => {
                let rows = k.matrix().column_sum();
                let total = rows.sum();
                (rows, -k.epsilon() * total)
            }
            None => (DVector::zeros(p), 0.0),
        };
        Self {
            coefs: vec![DVector::zeros(p); s],
            barycenter: marginal.clone(),
            marginals: vec![marginal; s],
            plan_terms: vec![terms; s],
            state: None,
        }
    }

    /// Runs the warm-started barycenter solve and adopts its plans. Returns
    /// the previous plans so the caller can roll back, plus the Sinkhorn
    /// convergence flag.
    fn refresh(&mut self, kernel: &OtKernel, params: &OtParams) -> Result<(Plans, bool)> {
        let inputs: Vec<DVector<f64>> = self.coefs.iter().map(prune).collect();
        let state = barycenter_warm(&inputs, kernel, params, self.state.take())?;
        let previous = Plans {
            marginals: self.marginals.clone(),
            plan_terms: self.plan_terms.clone(),
            barycenter: self.barycenter.clone(),
        };
        for s in 0..self.coefs.len() {
            let (terms, rows) = state.plan_terms(s, kernel, params.gamma);
            self.plan_terms[s] = terms;
            self.marginals[s] = rows;
        }
        self.barycenter = state.barycenter.clone();
        let converged = state.converged;
        self.state = Some(state);
        Ok((previous, converged))
    }

    /// Reinstates earlier plans. The Sinkhorn scalings are kept so the next
    /// solve still starts from the most recent iterate.
    fn restore(&mut self, plans: Plans) {
        self.marginals = plans.marginals;
        self.plan_terms = plans.plan_terms;
        self.barycenter = plans.barycenter;
    }

    /// `gamma KL(m | x)` plus the cached plan terms for subject `s`.
    fn cost(&self, s: usize, gamma: f64) -> f64 {
        let kl: f64 = self.coefs[s]
            .iter()
            .zip(self.marginals[s].iter())
            .map(|(&x, &m)| match (m > 0.0, x > 0.0) {
                (true, true) => m * (m / x).ln() - m + x,
                (true, false) => f64::INFINITY,
                (false, _) => x,
            })
            .sum();
        self.plan_terms[s] + gamma * kl
    }
}

/// Absolute ℓ1 weights `λ_s` and the noise floor `σ₀` used by the
/// concomitant solvers. `λmax` is expressed in units of the initial noise
/// estimate, so `λ_rel = 1` leaves the first penalized step at zero.
pub fn subject_lambdas(instance: &ProblemInstance, config: &SolverConfig) -> Result<(Vec<f64>, f64)> {
    let n = instance.n_sensors();
    let sigma0 = match config.sigma0 {
        Some(s) => s,
        None => sigma_floor(instance, config.sigma_alpha),
    };
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidParameter(
            "sigma0 is zero (all measurements vanish); pass an explicit positive sigma0".into(),
        ));
    }
    let ratios: Vec<f64> = lambda_max(instance)
        .iter()
        .zip(instance.subjects())
        .map(|(lm, sub)| lm / update_sigma(sub.measurement.norm(), n, sigma0))
        .collect();
    let lambdas = match config.lambda_scale {
        LambdaScale::PerSubject => ratios.iter().map(|r| config.lambda_rel * r).collect(),
        LambdaScale::Global => {
            let top = ratios.iter().cloned().fold(0.0, f64::max);
            vec![config.lambda_rel * top; ratios.len()]
        }
    };
    Ok((lambdas, sigma0))
}

struct Problem<'a> {
    instance: &'a ProblemInstance,
    config: &'a SolverConfig,
    kernel: Option<OtKernel>,
    params: Option<OtParams>,
    lambdas: Vec<f64>,
    sigma0: f64,
    norms: Vec<Vec<f64>>,
}

impl<'a> Problem<'a> {
    fn new(instance: &'a ProblemInstance, config: &'a SolverConfig) -> Result<Self> {
        config.validate()?;
        let n = instance.n_sensors();
        let (lambdas, sigma0) = subject_lambdas(instance, config)?;
        let (kernel, params) = if config.mu > 0.0 {
            let params = config.ot.resolve(instance.metric())?;
            (Some(OtKernel::new(instance.metric(), params.epsilon)?), Some(params))
        } else {
            (None, None)
        };
        let norms = instance
            .subjects()
            .iter()
            .map(|s| s.design.column_iter().map(|c| c.norm_squared() / n as f64).collect())
            .collect();
        Ok(Self {
            instance,
            config,
            kernel,
            params,
            lambdas,
            sigma0,
            norms,
        })
    }

    fn gamma(&self) -> f64 {
        self.params.as_ref().map_or(0.0, |p| p.gamma)
    }
}

/// Warm-startable iterate of the MWE₁ alternating scheme.
struct Iterate {
    pos: Side,
    neg: Side,
    residuals: Vec<DVector<f64>>,
    sigmas: Vec<f64>,
}

impl Iterate {
    fn new(problem: &Problem) -> Self {
        let inst = problem.instance;
        let (s, p, n) = (inst.n_subjects(), inst.n_sources(), inst.n_sensors());
        let residuals: Vec<DVector<f64>> = inst.subjects().iter().map(|s| s.measurement.clone()).collect();
        let sigmas = residuals.iter().map(|r| update_sigma(r.norm(), n, problem.sigma0)).collect();
        Self {
            pos: Side::new(s, p, problem.kernel.as_ref()),
            neg: Side::new(s, p, problem.kernel.as_ref()),
            residuals,
            sigmas,
        }
    }

    /// Objective with the ℓ1 part weighted by `weights` (all ones when `None`).
    fn objective(&self, problem: &Problem, weights: Option<&[DVector<f64>]>) -> f64 {
        let n = problem.instance.n_sensors() as f64;
        let s_count = self.sigmas.len();
        let mu = problem.config.mu;
        let gamma = problem.gamma();
        let mut total = 0.0;
        for s in 0..s_count {
            let sigma = self.sigmas[s];
            total += self.residuals[s].norm_squared() / (2.0 * n * sigma) + sigma / 2.0;
            let l1: f64 = match weights {
                Some(w) => self.pos.coefs[s]
                    .iter()
                    .zip(self.neg.coefs[s].iter())
                    .zip(w[s].iter())
                    .map(|((a, b), w)| w * (a + b))
                    .sum(),
                None => self.pos.coefs[s].sum() + self.neg.coefs[s].sum(),
            };
            total += problem.lambdas[s] * l1;
            if mu > 0.0 {
                total += mu / s_count as f64 * (self.pos.cost(s, gamma) + self.neg.cost(s, gamma));
            }
        }
        total
    }

    /// Alternating minimization until the relative objective decrease of an
    /// outer iteration falls below `outer_tol`. Appends to `trace`.
    fn run(
        &mut self,
        problem: &Problem,
        weights: Option<&[DVector<f64>]>,
        trace: &mut Vec<f64>,
    ) -> Result<(bool, usize, bool)> {
        let config = problem.config;
        let subjects = problem.instance.subjects();
        let s_count = subjects.len();
        let n = problem.instance.n_sensors();
        let mu = config.mu;
        let gamma = problem.gamma();
        let mut sinkhorn_ok = true;
        // The starting point is infeasible (zero coefficients under positive
        // marginals) until both plans are refreshed, so values are only
        // recorded once finite.
        let record = |trace: &mut Vec<f64>, v: f64| {
            if v.is_finite() {
                trace.push(v);
            }
            v
        };
        let mut last = record(trace, self.objective(problem, weights));
        for outer in 1..=config.max_outer {
            let start = last;
            for (s, sub) in subjects.iter().enumerate() {
                let sigma = self.sigmas[s];
                let penalty = CoordinatePenalty {
                    ot_weight: sigma * mu * gamma / s_count as f64,
                    l1: problem.lambdas[s] * sigma,
                    weights: weights.map(|w| w[s].clone()),
                };
                // Alternate the two sign blocks until neither moves, so the
                // subject's subproblem is solved jointly.
                for _ in 0..config.cd.max_iter {
                    let mut sweeps = 0;
                    for positive in [true, false] {
                        let (side, sign) = if positive { (&mut self.pos, 1.0) } else { (&mut self.neg, -1.0) };
                        sweeps += signed_sweeps(
                            &sub.design,
                            &problem.norms[s],
                            sign,
                            &side.marginals[s],
                            &penalty,
                            &mut side.coefs[s],
                            &mut self.residuals[s],
                            config.cd.tol,
                            config.cd.max_iter,
                        )?;
                    }
                    if sweeps == 2 {
                        break;
                    }
                }
                record(trace, self.objective(problem, weights));
                // Recompute the residual exactly before the noise update.
                self.residuals[s] = &sub.measurement - &sub.design * (&self.pos.coefs[s] - &self.neg.coefs[s]);
                self.sigmas[s] = update_sigma(self.residuals[s].norm(), n, problem.sigma0);
                last = record(trace, self.objective(problem, weights));
            }
            if let (Some(kernel), Some(params)) = (&problem.kernel, &problem.params) {
                for positive in [true, false] {
                    let before = last;
                    let side = if positive { &mut self.pos } else { &mut self.neg };
                    let (previous, ok) = side.refresh(kernel, params)?;
                    sinkhorn_ok &= ok;
                    let after = self.objective(problem, weights);
                    // An inexact Sinkhorn solve can land on slightly worse
                    // plans than the current ones; keep the better of the two.
                    if after > before {
                        let side = if positive { &mut self.pos } else { &mut self.neg };
                        side.restore(previous);
                        last = record(trace, before);
                    } else {
                        last = record(trace, after);
                    }
                }
            }
            if !last.is_finite() {
                return Err(Error::NumericalBlowup { iterations: outer });
            }
            if (start - last).abs() <= config.outer_tol * last.abs().max(f64::MIN_POSITIVE) {
                return Ok((true, outer, sinkhorn_ok));
            }
        }
        Ok((false, config.max_outer, sinkhorn_ok))
    }

    fn into_result(
        self,
        problem: &Problem,
        trace: Vec<f64>,
        converged: bool,
        iterations: usize,
        sinkhorn_converged: bool,
    ) -> SolveResult {
        let barycenter = SignedVector {
            pos: self.pos.barycenter,
            neg: self.neg.barycenter,
        };
        let coefficients = self
            .pos
            .coefs
            .into_iter()
            .zip(self.neg.coefs)
            .map(|(pos, neg)| SignedVector { pos, neg })
            .collect();
        SolveResult {
            coefficients,
            sigmas: self.sigmas,
            barycenter,
            objective_trace: trace,
            converged,
            iterations,
            sinkhorn_converged,
            lambdas: problem.lambdas.clone(),
        }
    }
}

/// MWE₁: concomitant ℓ1 regression per subject, coupled through unbalanced
/// Wasserstein barycenters of the positive and negative parts.
pub fn solve_mwe1(instance: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    solve_mwe1_weighted(instance, config, None)
}

/// MWE₁ with per-subject weights on the ℓ1 norms.
pub fn solve_mwe1_weighted(
    instance: &ProblemInstance,
    config: &SolverConfig,
    weights: Option<&[DVector<f64>]>,
) -> Result<SolveResult> {
    let problem = Problem::new(instance, config)?;
    check_weights(instance, weights)?;
    if let Some(result) = null_result(&problem) {
        return Ok(result);
    }
    let mut iterate = Iterate::new(&problem);
    let mut trace = Vec::new();
    let (converged, iterations, sinkhorn) = iterate.run(&problem, weights, &mut trace)?;
    Ok(iterate.into_result(&problem, trace, converged, iterations, sinkhorn))
}

/// All measurements zero: every subject and both barycenters are zero, with
/// the transport terms vanishing between empty measures. The coordinate
/// updates would otherwise settle on `x = m` once `λ = 0`, driven only by
/// the entropic part of the transport cost.
fn null_result(problem: &Problem) -> Option<SolveResult> {
    let inst = problem.instance;
    if inst.subjects().iter().any(|s| s.measurement.iter().any(|v| *v != 0.0)) {
        return None;
    }
    let (s_count, p) = (inst.n_subjects(), inst.n_sources());
    let sigma = problem.sigma0;
    Some(SolveResult {
        coefficients: vec![SignedVector::zeros(p); s_count],
        sigmas: vec![sigma; s_count],
        barycenter: SignedVector::zeros(p),
        objective_trace: vec![s_count as f64 * sigma / 2.0],
        converged: true,
        iterations: 0,
        sinkhorn_converged: true,
        lambdas: problem.lambdas.clone(),
    })
}

fn check_weights(instance: &ProblemInstance, weights: Option<&[DVector<f64>]>) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != instance.n_subjects() || w.iter().any(|v| v.len() != instance.n_sources()) {
            return Err(Error::Shape("one weight vector of length p per subject expected".into()));
        }
        if w.iter().flat_map(|v| v.iter()).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
    }
    Ok(())
}

/// Reweighted MWE with the square-root penalty: a sequence of weighted MWE₁
/// problems, each warm-started from the previous one. The objective trace
/// holds the square-root-penalized objective after each reweighting step.
pub fn solve_mwe05(instance: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    let problem = Problem::new(instance, config)?;
    if let Some(result) = null_result(&problem) {
        return Ok(result);
    }
    let (s_count, p) = (instance.n_subjects(), instance.n_sources());
    let eta = config.eta;
    let mut weights = vec![DVector::from_element(p, 1.0); s_count];
    let mut iterate = Iterate::new(&problem);
    let mut trace = Vec::new();
    let mut previous: Option<Vec<Vec<bool>>> = None;
    let mut sinkhorn_ok = true;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_reweight {
        iterations += 1;
        let mut inner = Vec::new();
        let (_, _, ok) = iterate.run(&problem, Some(&weights), &mut inner)?;
        sinkhorn_ok &= ok;
        weights = (0..s_count)
            .map(|s| reweighting_weights(&(&iterate.pos.coefs[s] + &iterate.neg.coefs[s]), eta))
            .collect();
        trace.push(sqrt_objective(&iterate, &problem));
        let current: Vec<Vec<bool>> = (0..s_count)
            .map(|s| {
                let x = &iterate.pos.coefs[s] - &iterate.neg.coefs[s];
                support(&x, instance.subjects()[s].depth.as_ref())
            })
            .collect();
        if previous.as_ref() == Some(&current) {
            converged = true;
            break;
        }
        previous = Some(current);
    }
    Ok(iterate.into_result(&problem, trace, converged, iterations, sinkhorn_ok))
}

/// Objective with `λ Σ_j sqrt(|x_j| + η)` in place of the ℓ1 norm.
fn sqrt_objective(iterate: &Iterate, problem: &Problem) -> f64 {
    let eta = problem.config.eta;
    let plain = iterate.objective(problem, Some(&vec![DVector::zeros(problem.instance.n_sources()); iterate.sigmas.len()]));
    let penalty: f64 = (0..iterate.sigmas.len())
        .map(|s| {
            let abs = &iterate.pos.coefs[s] + &iterate.neg.coefs[s];
            problem.lambdas[s] * abs.iter().map(|v| (v + eta).sqrt()).sum::<f64>()
        })
        .sum();
    plain + penalty
}
