//! Multi-task problem data and the preprocessing applied before solving.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Pairwise transport costs between source locations, in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundMetric {
    costs: DMatrix<f64>,
}

impl GroundMetric {
    /// Validates that `costs` is square, symmetric, nonnegative with a zero diagonal.
    pub fn new(costs: DMatrix<f64>) -> Result<Self> {
        if !costs.is_square() {
            return Err(Error::Shape(format!(
                "ground metric must be square, got {}x{}",
                costs.nrows(),
                costs.ncols()
            )));
        }
        let p = costs.nrows();
        for i in 0..p {
            if costs[(i, i)] != 0.0 {
                return Err(Error::DegenerateMetric(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (costs[(i, j)], costs[(j, i)]);
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::DegenerateMetric(format!("invalid cost {a} at ({i},{j})")));
                }
                if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                    return Err(Error::DegenerateMetric(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { costs })
    }

    pub fn costs(&self) -> &DMatrix<f64> {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.costs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.costs.iter().cloned().fold(0.0, f64::max)
    }

    /// Median of the strictly off-diagonal entries (upper triangle).
    pub fn median_off_diagonal(&self) -> Option<f64> {
        let p = self.len();
        let mut values: Vec<f64> = (0..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .map(|(i, j)| self.costs[(i, j)])
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(|a, b| a.total_cmp(b));
        let mid = values.len() / 2;
        Some(if values.len() % 2 == 1 {
            values[mid]
        } else {
            0.5 * (values[mid - 1] + values[mid])
        })
    }
}

/// A coefficient vector stored as two nonnegative parts, `value = pos - neg`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedVector {
    pub pos: DVector<f64>,
    pub neg: DVector<f64>,
}

impl SignedVector {
    pub fn zeros(p: usize) -> Self {
        Self {
            pos: DVector::zeros(p),
            neg: DVector::zeros(p),
        }
    }

    pub fn from_values(x: &DVector<f64>) -> Self {
        Self {
            pos: x.map(|v| v.max(0.0)),
            neg: x.map(|v| (-v).max(0.0)),
        }
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn values(&self) -> DVector<f64> {
        &self.pos - &self.neg
    }

    pub fn abs(&self) -> DVector<f64> {
        self.values().abs()
    }

    /// Largest `pos_j * neg_j` over all coordinates.
    pub fn overlap(&self) -> f64 {
        self.pos
            .iter()
            .zip(self.neg.iter())
            .map(|(a, b)| a * b)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub design: DMatrix<f64>,
    pub measurement: DVector<f64>,
    /// Per-column divisors applied by depth weighting, if any. Estimates in the
    /// original amplitude scale are `x / depth`.
    pub depth: Option<DVector<f64>>,
}

impl Subject {
    pub fn new(design: DMatrix<f64>, measurement: DVector<f64>) -> Self {
        Self {
            design,
            measurement,
            depth: None,
        }
    }

    /// Maps a solver-scale estimate back to original amplitudes.
    pub fn to_amplitudes(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.depth {
            Some(d) => x.component_div(d),
            None => x.clone(),
        }
    }
}

/// Per-subject designs and measurements over a shared, aligned source space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    subjects: Vec<Subject>,
    metric: GroundMetric,
}

impl ProblemInstance {
    pub fn new(subjects: Vec<Subject>, metric: GroundMetric) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::InvalidParameter("an instance needs at least one subject".into()))?;
        let (n, p) = first.design.shape();
        if n == 0 || p == 0 {
            return Err(Error::Shape(format!("empty design matrix {n}x{p}")));
        }
        for (s, sub) in subjects.iter().enumerate() {
            if sub.design.shape() != (n, p) {
                return Err(Error::Shape(format!(
                    "subject {s}: design is {:?}, expected {:?}",
                    sub.design.shape(),
                    (n, p)
                )));
            }
            if sub.measurement.len() != n {
                return Err(Error::Shape(format!(
                    "subject {s}: measurement has length {}, expected {n}",
                    sub.measurement.len()
                )));
            }
            if let Some(d) = &sub.depth {
                if d.len() != p {
                    return Err(Error::Shape(format!("subject {s}: depth weights length {}", d.len())));
                }
            }
        }
        if metric.len() != p {
            return Err(Error::Shape(format!(
                "ground metric is {0}x{0}, expected {p}x{p}",
                metric.len()
            )));
        }
        Ok(Self { subjects, metric })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn metric(&self) -> &GroundMetric {
        &self.metric
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.subjects[0].design.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.subjects[0].design.ncols()
    }

    /// Same data with the subjects reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            subjects: order.iter().map(|&s| self.subjects[s].clone()).collect(),
            metric: self.metric.clone(),
        }
    }
}

/// Sensor noise covariance; identity when not provided.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub covariance: DMatrix<f64>,
}

impl NoiseModel {
    pub fn identity(n: usize) -> Self {
        Self {
            covariance: DMatrix::identity(n, n),
        }
    }

    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::Shape("covariance must be square".into()));
        }
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-10 * covariance.abs().max().max(1.0) {
            return Err(Error::InvalidParameter(format!("covariance is not symmetric ({asym:e})")));
        }
        Ok(Self { covariance })
    }

    /// `Σ^{-1/2}` through the symmetric eigendecomposition.
    pub fn inverse_sqrt(&self) -> Result<DMatrix<f64>> {
        let eig = SymmetricEigen::new(self.covariance.clone());
        let scale = eig.eigenvalues.abs().max().max(f64::MIN_POSITIVE);
        for (index, &value) in eig.eigenvalues.iter().enumerate() {
            if !(value > 1e-14 * scale) {
                return Err(Error::NotPositiveDefinite { index, value });
            }
        }
        let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let v = &eig.eigenvectors;
        Ok(v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose())
    }
}

/// Left-multiplies every design and measurement by `Σ^{-1/2}`.
pub fn whiten(instance: &ProblemInstance, noise: &NoiseModel) -> Result<ProblemInstance> {
    let n = instance.n_sensors();
    if noise.covariance.nrows() != n {
        return Err(Error::Shape(format!(
            "covariance is {0}x{0}, instance has {n} sensors",
            noise.covariance.nrows()
        )));
    }
    let w = noise.inverse_sqrt()?;
    let subjects = instance
        .subjects()
        .iter()
        .map(|s| Subject {
            design: &w * &s.design,
            measurement: &w * &s.measurement,
            depth: s.depth.clone(),
        })
        .collect();
    ProblemInstance::new(subjects, instance.metric().clone())
}

/// Divides column `j` by `‖column j‖^exponent` and returns the divisors.
pub fn depth_weight(design: &DMatrix<f64>, exponent: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(0.0..=1.0).contains(&exponent) {
        return Err(Error::InvalidParameter(format!(
            "depth exponent must lie in [0, 1], got {exponent}"
        )));
    }
    let mut out = design.clone();
    let mut weights = DVector::from_element(design.ncols(), 1.0);
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::ZeroColumn(j));
        }
        let w = norm.powf(exponent);
        col /= w;
        weights[j] = w;
    }
    Ok((out, weights))
}

/// Per-subject `‖Lᵀy‖∞ / n`, the smallest ℓ1 penalty with an all-zero solution.
pub fn lambda_max(instance: &ProblemInstance) -> Vec<f64> {
    let n = instance.n_sensors() as f64;
    instance
        .subjects()
        .iter()
        .map(|s| s.design.tr_mul(&s.measurement).amax() / n)
        .collect()
}

/// `alpha * min_s ‖y_s‖ / sqrt(n)`, the lower bound on noise levels.
pub fn sigma_floor(instance: &ProblemInstance, alpha: f64) -> f64 {
    let sqrt_n = (instance.n_sensors() as f64).sqrt();
    let min = instance
        .subjects()
        .iter()
        .map(|s| s.measurement.norm() / sqrt_n)
        .fold(f64::INFINITY, f64::min);
    alpha * min
}
