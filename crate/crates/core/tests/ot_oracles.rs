use mwe_core::ot::{barycenter, exact_emd, objective_terms, signed_distance, unbalanced_distance, OtKernel, OtParams};
use mwe_core::{GroundMetric, SignedVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense two-phase simplex for `min c·x` subject to `A x = b`, `x >= 0`,
/// with `b >= 0`. Bland's rule, so it terminates on degenerate problems.
fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = a[i].clone();
            row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
            row.push(b[i]);
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    let run = |cost: &[f64], allowed: usize, t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>| {
        loop {
            let entering = (0..allowed).find(|&j| {
                let r = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
                r < -1e-11
            });
            let Some(j) = entering else { return };
            let mut leave: Option<usize> = None;
            for i in 0..m {
                if t[i][j] > 1e-12 {
                    let ratio = t[i][width - 1] / t[i][j];
                    leave = match leave {
                        None => Some(i),
                        Some(k) => {
                            let rk = t[k][width - 1] / t[k][j];
                            if ratio < rk - 1e-14 || (ratio <= rk + 1e-14 && basis[i] < basis[k]) {
                                Some(i)
                            } else {
                                Some(k)
                            }
                        }
                    };
                }
            }
            let r = leave.expect("LP is bounded");
            let pivot = t[r][j];
            for v in t[r].iter_mut() {
                *v /= pivot;
            }
            for i in 0..m {
                if i != r && t[i][j] != 0.0 {
                    let f = t[i][j];
                    let pivot_row = t[r].clone();
                    for (v, p) in t[i].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
            basis[r] = j;
        }
    };

    let phase1: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
    run(&phase1, n + m, &mut t, &mut basis);
    let infeasibility: f64 = (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][width - 1]).sum();
    assert!(infeasibility < 1e-9, "LP infeasible: {infeasibility}");
    let phase2: Vec<f64> = (0..n + m).map(|j| if j < n { c[j] } else { 0.0 }).collect();
    run(&phase2, n, &mut t, &mut basis);
    (0..m).map(|i| phase2[basis[i]] * t[i][width - 1]).sum()
}

/// Transportation LP between `a` and `b` (equal mass) under `metric`.
fn lp_emd(a: &DVector<f64>, b: &DVector<f64>, metric: &GroundMetric) -> f64 {
    let p = a.len();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..p {
        rows.push((0..p * p).map(|k| if k / p == i { 1.0 } else { 0.0 }).collect());
        rhs.push(a[i]);
    }
    for j in 0..p {
        rows.push((0..p * p).map(|k| if k % p == j { 1.0 } else { 0.0 }).collect());
        rhs.push(b[j]);
    }
    let cost: Vec<f64> = (0..p * p).map(|k| metric.get(k / p, k % p)).collect();
    simplex_min(&rows, &rhs, &cost)
}

fn plane_metric(rng: &mut ChaCha8Rng, p: usize) -> GroundMetric {
    let pts: Vec<(f64, f64)> = (0..p).map(|_| (rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0)).collect();
    GroundMetric::new(DMatrix::from_fn(p, p, |i, j| {
        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
        (dx * dx + dy * dy).sqrt()
    }))
    .unwrap()
}

fn line_metric(positions: &[f64]) -> GroundMetric {
    let p = positions.len();
    GroundMetric::new(DMatrix::from_fn(p, p, |i, j| (positions[i] - positions[j]).abs())).unwrap()
}

fn histogram(rng: &mut ChaCha8Rng, p: usize, mass: f64) -> DVector<f64> {
    let h = DVector::from_fn(p, |_, _| rng.random::<f64>());
    let s = h.sum();
    h * (mass / s)
}

fn dirac(p: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(p, |k, _| if k == i { 1.0 } else { 0.0 })
}

#[test]
fn lp_oracle_sanity() {
    // Two points one unit apart, half the mass must move.
    let m = line_metric(&[0.0, 1.0]);
    let v = lp_emd(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.5, 0.5]), &m);
    assert!((v - 0.5).abs() < 1e-12);
}

#[test]
fn exact_emd_matches_lp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..30 {
        let p = if trial < 20 { 6 } else { 9 };
        let metric = plane_metric(&mut rng, p);
        let a = histogram(&mut rng, p, 1.0);
        let mut b = histogram(&mut rng, p, 1.0);
        if trial % 3 == 0 {
            // Sparse supports exercise the bipartite reduction.
            b[0] = 0.0;
            b[p - 1] = 0.0;
            let s = b.sum();
            b /= s;
        }
        let fast = exact_emd(&a, &b, &metric).unwrap();
        let oracle = lp_emd(&a, &b, &metric);
        assert!((fast - oracle).abs() < 1e-8, "trial {trial}: {fast} vs {oracle}");
    }
}

#[test]
fn exact_emd_matches_one_dimensional_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let p = 12;
        let mut pos: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 50.0).collect();
        pos.sort_by(f64::total_cmp);
        let metric = line_metric(&pos);
        let a = histogram(&mut rng, p, 3.0);
        let b = histogram(&mut rng, p, 3.0);
        let (mut fa, mut fb, mut cdf) = (0.0, 0.0, 0.0);
        for k in 0..p - 1 {
            fa += a[k];
            fb += b[k];
            cdf += (fa - fb).abs() * (pos[k + 1] - pos[k]);
        }
        let v = exact_emd(&a, &b, &metric).unwrap();
        assert!((v - cdf).abs() < 1e-9 * cdf.max(1.0), "{v} vs {cdf}");
    }
}

#[test]
fn exact_emd_basic_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let metric = plane_metric(&mut rng, 7);
    let a = histogram(&mut rng, 7, 1.0);
    assert_eq!(exact_emd(&a, &a, &metric).unwrap(), 0.0);
    for (i, j) in [(0, 3), (2, 6), (5, 1)] {
        let v = exact_emd(&dirac(7, i), &dirac(7, j), &metric).unwrap();
        assert!((v - metric.get(i, j)).abs() < 1e-12);
    }
    assert!(exact_emd(&a, &(&a * 2.0), &metric).is_err());
}

#[test]
fn entropic_distance_approximates_exact_emd() {
    // With a stiff marginal penalty the plan is nearly balanced, so its
    // transport term tracks the exact cost; the entropy term is bounded
    // by eps (1 + 2 ln p) for a unit-mass plan.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (mut worst, mut worst_cost) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let p = 10;
        let metric = plane_metric(&mut rng, p);
        let median = metric.median_off_diagonal().unwrap();
        let eps = 0.0005 * median;
        let gamma = 1e3 * median;
        let kernel = OtKernel::new(&metric, eps).unwrap();
        let params = OtParams::new(eps, gamma).unwrap().with_max_iter(3_000_000).with_tol(1e-10);
        let a = histogram(&mut rng, p, 1.0);
        let b = histogram(&mut rng, p, 1.0);
        let exact = exact_emd(&a, &b, &metric).unwrap();
        let r = unbalanced_distance(&a, &b, &kernel, &params).unwrap();
        assert!(r.converged);
        worst = worst.max((r.terms.transport - exact).abs() / exact);
        worst_cost = worst_cost.max((r.cost - exact).abs() / exact);
        let bound = eps * (1.0 + 2.0 * (p as f64).ln()) + r.terms.marginal_penalty + 0.01 * exact;
        assert!((r.cost - exact).abs() <= bound, "{} vs {exact}", r.cost);
    }
    assert!(worst < 0.01, "worst relative transport error {worst}");
    assert!(worst_cost < 0.05, "worst relative cost error {worst_cost}");
}

#[test]
fn three_point_line_dirac_transport() {
    // Between two Diracs the plan has one entry m, and the objective
    // 2m + eps m(ln m - 1) + 2 gamma (m ln m - m + 1) is minimized at
    // m = exp(-2 / (eps + 2 gamma)).
    let metric = line_metric(&[0.0, 1.0, 2.0]);
    assert_eq!(exact_emd(&dirac(3, 0), &dirac(3, 2), &metric).unwrap(), 2.0);
    for (eps, gamma) in [(0.01, 10.0), (0.03, 30.0), (0.1, 1.0)] {
        let kernel = OtKernel::new(&metric, eps).unwrap();
        let params = OtParams::new(eps, gamma).unwrap().with_max_iter(100_000).with_tol(1e-12);
        let r = unbalanced_distance(&dirac(3, 0), &dirac(3, 2), &kernel, &params).unwrap();
        let m: f64 = (-2.0 / (eps + 2.0 * gamma)).exp();
        let want = 2.0 * m + eps * m * (m.ln() - 1.0) + 2.0 * gamma * (m * m.ln() - m + 1.0);
        assert!((r.cost - want).abs() < 1e-8, "{} vs {want}", r.cost);
        assert!((r.plan[(0, 2)] - m).abs() < 1e-8);
        assert_eq!(r.plan.sum(), r.plan[(0, 2)]);
        if eps == 0.03 {
            assert!((r.cost - 2.0).abs() / 2.0 < 0.05);
        }
    }
}

#[test]
fn empty_measures_are_at_distance_zero() {
    let metric = line_metric(&[0.0, 1.0, 2.0, 3.0]);
    let kernel = OtKernel::new(&metric, 0.1).unwrap();
    let params = OtParams::new(0.1, 10.0).unwrap();
    let z = DVector::zeros(4);
    let r = unbalanced_distance(&z, &z, &kernel, &params).unwrap();
    assert_eq!(r.cost, 0.0);
    assert!(r.plan.iter().all(|v| *v == 0.0));
    assert_eq!(signed_distance(&SignedVector::zeros(4), &SignedVector::zeros(4), &kernel, &params).unwrap(), 0.0);
}

#[test]
fn self_transport_vanishes_with_epsilon() {
    // A Dirac against itself keeps its unit mass in place: cost -eps.
    let metric = line_metric(&[0.0, 1.0, 2.0, 3.0, 4.0]);
    let d = dirac(5, 2);
    for eps in [0.5, 0.1, 0.02] {
        let kernel = OtKernel::new(&metric, eps).unwrap();
        let params = OtParams::new(eps, 100.0).unwrap().with_max_iter(100_000).with_tol(1e-12);
        let r = unbalanced_distance(&d, &d, &kernel, &params).unwrap();
        assert_eq!(r.terms.transport, 0.0);
        assert!((r.cost + eps).abs() < 1e-9, "{}", r.cost);
    }
    // A spread histogram blurs less as eps shrinks.
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let h = histogram(&mut rng, 5, 1.0);
    let mut previous = f64::INFINITY;
    for eps in [0.5, 0.1, 0.02] {
        let kernel = OtKernel::new(&metric, eps).unwrap();
        let params = OtParams::new(eps, 100.0).unwrap().with_max_iter(100_000).with_tol(1e-12);
        let r = unbalanced_distance(&h, &h, &kernel, &params).unwrap();
        assert!(r.terms.transport < previous, "{} after {previous}", r.terms.transport);
        previous = r.terms.transport;
    }
    assert!(previous < 1e-6, "{previous}");
}

#[test]
fn distance_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        let metric = plane_metric(&mut rng, 8);
        let eps = 0.05 * metric.median_off_diagonal().unwrap();
        let kernel = OtKernel::new(&metric, eps).unwrap();
        let params = OtParams::new(eps, 20.0).unwrap().with_max_iter(50_000).with_tol(1e-11);
        let a = histogram(&mut rng, 8, 1.0);
        let b = histogram(&mut rng, 8, 1.7);
        let ab = unbalanced_distance(&a, &b, &kernel, &params).unwrap().cost;
        let ba = unbalanced_distance(&b, &a, &kernel, &params).unwrap().cost;
        assert!((ab - ba).abs() < 1e-7 * ab.abs().max(1.0), "{ab} vs {ba}");
    }
}

#[test]
fn marginal_penalty_share_grows_with_gamma_on_a_fixed_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..20 {
        let metric = plane_metric(&mut rng, 6);
        let eps = 0.01;
        let plan = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>() * 0.1);
        let a = histogram(&mut rng, 6, 1.0);
        let b = histogram(&mut rng, 6, 1.0);
        let t1 = objective_terms(&plan, &a, &b, &metric, eps, 1.0);
        let t2 = objective_terms(&plan, &a, &b, &metric, eps, 2.0);
        assert!((t2.marginal_penalty - 2.0 * t1.marginal_penalty).abs() < 1e-12);
        assert_eq!(t1.transport, t2.transport);
        // The share is monotone whenever the gamma-free part is positive.
        let rest = t1.transport + t1.entropy;
        assert!(rest > 0.0);
        assert!(t2.marginal_penalty / t2.total() >= t1.marginal_penalty / t1.total());
    }
}

#[test]
fn signed_distance_splits_by_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let metric = plane_metric(&mut rng, 6);
    let eps = 0.1;
    let gamma = 5.0;
    let kernel = OtKernel::new(&metric, eps).unwrap();
    let params = OtParams::new(eps, gamma).unwrap().with_max_iter(50_000).with_tol(1e-11);
    let a = histogram(&mut rng, 6, 1.0);
    let b = histogram(&mut rng, 6, 2.0);

    let pa = SignedVector::from_values(&a);
    let pb = SignedVector::from_values(&b);
    let signed = signed_distance(&pa, &pb, &kernel, &params).unwrap();
    let plain = unbalanced_distance(&a, &b, &kernel, &params).unwrap().cost;
    assert!((signed - plain).abs() < 1e-12);

    // Positive mass against negative mass: both halves transport to the
    // empty measure, whose only feasible plan is zero, so each costs
    // gamma times the mass.
    let nb = SignedVector::from_values(&(-&b));
    let v = signed_distance(&pa, &nb, &kernel, &params).unwrap();
    let expected = gamma * (a.sum() + b.sum());
    assert!((v - expected).abs() < 1e-6 * expected, "{v} vs {expected}");
}

#[test]
fn barycenter_of_identical_diracs_keeps_the_vertex() {
    let metric = line_metric(&(0..9).map(|k| k as f64).collect::<Vec<_>>());
    let kernel = OtKernel::new(&metric, 0.2).unwrap();
    let params = OtParams::new(0.2, 50.0).unwrap().with_max_iter(20_000).with_tol(1e-10);
    let inputs = vec![dirac(9, 6); 3];
    let state = barycenter(&inputs, &kernel, &params).unwrap();
    assert!(state.converged);
    assert_eq!(state.barycenter.imax(), 6);
}

#[test]
fn barycenter_of_copies_preserves_the_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..10 {
        let metric = plane_metric(&mut rng, 12);
        let eps = 0.02 * metric.median_off_diagonal().unwrap();
        let kernel = OtKernel::new(&metric, eps).unwrap();
        let params = OtParams::new(eps, 50.0).unwrap().with_max_iter(50_000).with_tol(1e-10);
        let mut x = histogram(&mut rng, 12, 1.0);
        let top = rng.random_range(0..12);
        x[top] += 1.0;
        let state = barycenter(&vec![x.clone(); 4], &kernel, &params).unwrap();
        assert_eq!(state.barycenter.imax(), x.imax());
    }
}

#[test]
fn barycenter_of_zero_inputs_is_zero() {
    let metric = line_metric(&[0.0, 1.0, 2.0]);
    let kernel = OtKernel::new(&metric, 0.1).unwrap();
    let params = OtParams::new(0.1, 10.0).unwrap();
    let state = barycenter(&[DVector::zeros(3), DVector::zeros(3)], &kernel, &params).unwrap();
    assert!(state.barycenter.iter().all(|v| *v == 0.0));
    assert!(state.left_marginals.iter().flat_map(|m| m.iter()).all(|v| *v == 0.0));
}

#[test]
fn line_barycenter_sits_at_the_median() {
    let metric = line_metric(&[0.0, 1.0, 2.0, 3.0, 4.0]);
    let inputs = [dirac(5, 0), dirac(5, 1), dirac(5, 4)];
    // Brute force over single-vertex candidates with the exact distance.
    let cost = |k: usize| -> f64 { inputs.iter().map(|x| exact_emd(x, &dirac(5, k), &metric).unwrap()).sum() };
    let best = (0..5).min_by(|&i, &j| cost(i).total_cmp(&cost(j))).unwrap();
    assert_eq!(best, 1);
    // With only the two endpoints every vertex ties, so no midpoint
    // preference is expected there.
    let ends = [dirac(5, 0), dirac(5, 2)];
    let tie: Vec<f64> = (0..3).map(|k| ends.iter().map(|x| exact_emd(x, &dirac(5, k), &metric).unwrap()).sum()).collect();
    assert!(tie.iter().all(|c| (c - 2.0).abs() < 1e-12));

    let eps = 0.05;
    let kernel = OtKernel::new(&metric, eps).unwrap();
    let params = OtParams::new(eps, 100.0).unwrap().with_max_iter(100_000).with_tol(1e-10);
    let state = barycenter(&inputs, &kernel, &params).unwrap();
    assert!(state.converged);
    assert_eq!(state.barycenter.imax(), best);
}

#[test]
fn barycenter_state_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let metric = plane_metric(&mut rng, 10);
    let eps = 0.05 * metric.median_off_diagonal().unwrap();
    let kernel = OtKernel::new(&metric, eps).unwrap();
    let params = OtParams::new(eps, 30.0).unwrap().with_max_iter(100_000).with_tol(1e-12);
    let mut inputs: Vec<DVector<f64>> = (0..3).map(|_| histogram(&mut rng, 10, 1.0)).collect();
    inputs[1][4] = 0.0;
    let state = barycenter(&inputs, &kernel, &params).unwrap();
    assert!(state.converged);
    assert!(state.fixed_point_residual(&inputs, &kernel, &params) < 1e-6);
    for (s, x) in inputs.iter().enumerate() {
        let u = state.u(s, &kernel);
        let kv = kernel.matrix() * state.v(s, &kernel);
        let m = u.component_mul(&kv);
        assert!((&m - &state.left_marginals[s]).amax() < 1e-9);
        // Zero input entries carry no plan mass.
        for j in 0..10 {
            if x[j] == 0.0 {
                assert_eq!(state.left_marginals[s][j], 0.0);
            }
        }
    }
}
