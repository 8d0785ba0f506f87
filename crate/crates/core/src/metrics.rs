//! Scores for source estimates: amplitude error, support ranking and
//! localization error.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::GroundMetric;
use crate::ot::exact_emd;

/// Mean squared error over all coordinates.
pub fn mse(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    check_len(estimate.len(), truth.len())?;
    if estimate.is_empty() {
        return Ok(0.0);
    }
    Ok((estimate - truth).norm_squared() / estimate.len() as f64)
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("estimate has {a} entries, truth has {b}")));
    }
    Ok(())
}

/// Average precision of the ranking by `|estimate|` against the true support.
///
/// Equal scores form a single threshold, so the result does not depend on
/// vertex order and a constant estimate scores the prevalence.
pub fn pr_auc(estimate: &DVector<f64>, true_support: &[bool]) -> Result<f64> {
    check_len(estimate.len(), true_support.len())?;
    let positives = true_support.iter().filter(|b| **b).count();
    if positives == 0 {
        return Err(Error::EmptySupport("true support has no positive entry".into()));
    }
    let mut order: Vec<usize> = (0..estimate.len()).collect();
    order.sort_by(|&a, &b| estimate[b].abs().total_cmp(&estimate[a].abs()).then(a.cmp(&b)));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for group in order.chunk_by(|&a, &b| estimate[a].abs() == estimate[b].abs()) {
        let hits = group.iter().filter(|&&j| true_support[j]).count();
        tp += hits;
        seen += group.len();
        ap += hits as f64 * tp as f64 / seen as f64;
    }
    Ok(ap / positives as f64)
}

/// Exact earth mover's distance between `|estimate|` and `|truth|`, both
/// normalized to unit mass, divided by `n_true`. An all-zero estimate scores
/// `+inf`.
pub fn emd_per_source(estimate: &DVector<f64>, truth: &DVector<f64>, metric: &GroundMetric, n_true: usize) -> Result<f64> {
    check_len(estimate.len(), truth.len())?;
    if n_true == 0 {
        return Err(Error::InvalidParameter("n_true must be positive".into()));
    }
    let a = estimate.abs();
    let b = truth.abs();
    let (sa, sb) = (a.sum(), b.sum());
    if !(sb > 0.0) {
        return Err(Error::EmptySupport("truth has no mass".into()));
    }
    if !(sa > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(exact_emd(&(a / sa), &(b / sb), metric)? / n_true as f64)
}

/// The three scores of one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub mse: f64,
    pub auc: f64,
    pub emd_mm: f64,
}

/// Scores averaged across subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub mse: f64,
    pub auc: f64,
    pub emd_mm: f64,
    pub per_subject: Vec<Scores>,
}

/// Scores each subject's estimate against its truth (both in amplitude scale).
pub fn score(estimates: &[DVector<f64>], truths: &[DVector<f64>], metric: &GroundMetric) -> Result<ScoreReport> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(Error::Shape(format!("{} estimates for {} truths", estimates.len(), truths.len())));
    }
    let per_subject = estimates
        .iter()
        .zip(truths)
        .map(|(x, t)| {
            let support: Vec<bool> = t.iter().map(|v| *v != 0.0).collect();
            let n_true = support.iter().filter(|b| **b).count();
            Ok(Scores {
                mse: mse(x, t)?,
                auc: pr_auc(x, &support)?,
                emd_mm: emd_per_source(x, t, metric, n_true)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = per_subject.len() as f64;
    Ok(ScoreReport {
        mse: per_subject.iter().map(|s| s.mse).sum::<f64>() / k,
        auc: per_subject.iter().map(|s| s.auc).sum::<f64>() / k,
        emd_mm: per_subject.iter().map(|s| s.emd_mm).sum::<f64>() / k,
        per_subject,
    })
}
