//! Exact balanced transport by successive shortest paths.
//!
//! The flow network is the complete bipartite graph between the supports of
//! the two histograms, plus a super source and super sink. Node potentials
//! keep reduced costs nonnegative so each augmenting path is found with a
//! dense Dijkstra.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::GroundMetric;

/// Exact earth mover distance between two histograms of equal mass.
pub fn exact_emd(a: &DVector<f64>, b: &DVector<f64>, metric: &GroundMetric) -> Result<f64> {
    let p = metric.len();
    if a.len() != p || b.len() != p {
        return Err(Error::Shape(format!(
            "histograms of length {} and {} for a metric of size {p}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidParameter("histograms must be finite and nonnegative".into()));
    }
    let (mass_a, mass_b) = (a.sum(), b.sum());
    if (mass_a - mass_b).abs() > 1e-9 * mass_a.max(mass_b).max(1.0) || mass_a <= 0.0 {
        return Err(Error::UnbalancedMass {
            left: mass_a,
            right: mass_b,
        });
    }
    let sources: Vec<usize> = (0..p).filter(|&i| a[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..p).filter(|&j| b[j] > 0.0).collect();
    let supply: Vec<f64> = sources.iter().map(|&i| a[i]).collect();
    // Absorb the allowed rounding slack into the sink side.
    let scale = mass_a / mass_b;
    let demand: Vec<f64> = sinks.iter().map(|&j| b[j] * scale).collect();
    let cost: Vec<Vec<f64>> = sources
        .iter()
        .map(|&i| sinks.iter().map(|&j| metric.get(i, j)).collect())
        .collect();
    Ok(transport(&supply, &demand, &cost))
}

/// Solves the transportation problem and returns the optimal cost.
fn transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (na, nb) = (supply.len(), demand.len());
    // Node layout: 0 = super source, 1..=na sources, na+1..=na+nb sinks, last = super sink.
    let n = na + nb + 2;
    let sink_node = n - 1;
    let total: f64 = supply.iter().sum();
    let negligible = 1e-14 * total;

    let mut left = supply.to_vec();
    let mut need = demand.to_vec();
    let mut flow = vec![vec![0.0f64; nb]; na];
    let mut potential = vec![0.0f64; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];

    let mut remaining = total;
    while remaining > negligible {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        dist[0] = 0.0;
        loop {
            let mut node = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    node = v;
                }
            }
            if node == usize::MAX {
                break;
            }
            done[node] = true;
            let relax = |to: usize, c: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
                let reduced = (c + potential[node] - potential[to]).max(0.0);
                if best + reduced < dist[to] {
                    dist[to] = best + reduced;
                    prev[to] = node;
                }
            };
            if node == 0 {
                for i in 0..na {
                    if left[i] > negligible {
                        relax(1 + i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if node <= na {
                let i = node - 1;
                for j in 0..nb {
                    relax(1 + na + j, cost[i][j], &mut dist, &mut prev);
                }
            } else if node < sink_node {
                let j = node - 1 - na;
                if need[j] > negligible {
                    relax(sink_node, 0.0, &mut dist, &mut prev);
                }
                for i in 0..na {
                    if flow[i][j] > negligible {
                        relax(1 + i, -cost[i][j], &mut dist, &mut prev);
                    }
                }
            }
        }
        if !dist[sink_node].is_finite() {
            break;
        }
        for v in 0..n {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }

        // Bottleneck along the path sink <- ... <- source.
        let mut push = f64::INFINITY;
        let mut v = sink_node;
        while v != 0 {
            let u = prev[v];
            if u == 0 {
                push = push.min(left[v - 1]);
            } else if v == sink_node {
                push = push.min(need[u - 1 - na]);
            } else if u > na {
                // backward arc: sink u -> source v cancels flow
                push = push.min(flow[v - 1][u - 1 - na]);
            }
            v = u;
        }
        let mut v = sink_node;
        while v != 0 {
            let u = prev[v];
            if u == 0 {
                left[v - 1] -= push;
            } else if v == sink_node {
                need[u - 1 - na] -= push;
            } else if u > na {
                flow[v - 1][u - 1 - na] -= push;
            } else {
                flow[u - 1][v - 1 - na] += push;
            }
            v = u;
        }
        remaining -= push;
    }

    let mut total_cost = 0.0;
    for i in 0..na {
        for j in 0..nb {
            total_cost += flow[i][j] * cost[i][j];
        }
    }
    total_cost
}
