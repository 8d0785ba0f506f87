use nalgebra::DMatrix;

use super::{flush, OtKernel, ABSORB_THRESHOLD};

/// Scaling vectors of one transport plan `P = diag(U) K diag(V)`, held as
/// `U = exp(alpha / eps) * u` and `V = exp(beta / eps) * v`.
///
/// While the offsets are zero the shared kernel is used directly. After the
/// first absorption a private stabilized kernel is materialized, stored
/// transposed so that column `i` holds row `i` of
/// `exp((alpha_i + beta_j - M_ij) / eps)`.
#[derive(Debug, Clone)]
pub(crate) struct ScalingPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    stabilized: Option<DMatrix<f64>>,
}

impl ScalingPair {
    pub fn new(p: usize) -> Self {
        Self {
            u: vec![1.0; p],
            v: vec![1.0; p],
            alpha: vec![0.0; p],
            beta: vec![0.0; p],
            stabilized: None,
        }
    }

    fn rows<'a>(&'a self, kernel: &'a OtKernel) -> &'a DMatrix<f64> {
        self.stabilized.as_ref().unwrap_or_else(|| kernel.matrix())
    }

    /// `(K v)_i` for each `i` in `rows`.
    fn row_products(&self, kernel: &OtKernel, rows: &[usize]) -> Vec<f64> {
        let k = self.rows(kernel);
        let p = k.nrows();
        let data = k.as_slice();
        rows.iter()
            .map(|&i| {
                let col = &data[i * p..(i + 1) * p];
                dot(col, &self.v)
            })
            .collect()
    }

    /// `K' u`, visiting only the rows where `u` is nonzero.
    pub fn column_products(&self, kernel: &OtKernel) -> Vec<f64> {
        let k = self.rows(kernel);
        let p = k.nrows();
        let data = k.as_slice();
        let mut out = vec![0.0; p];
        for (i, &ui) in self.u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let col = &data[i * p..(i + 1) * p];
            for (o, &kij) in out.iter_mut().zip(col) {
                *o += ui * kij;
            }
        }
        out
    }

    /// `u <- (a / Kv)^psi`, returning the row marginal `u * Kv` it implies.
    pub fn update_u(&mut self, kernel: &OtKernel, a: &[f64], psi: f64) -> Vec<f64> {
        let support: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
        let kv = self.row_products(kernel, &support);
        let eps = kernel.epsilon();
        self.u.iter_mut().for_each(|x| *x = 0.0);
        let mut marginal = vec![0.0; a.len()];
        for (&i, &kvi) in support.iter().zip(&kv) {
            if kvi > 0.0 {
                let ui = (psi * (a[i].ln() - kvi.ln()) - (1.0 - psi) * self.alpha[i] / eps).exp();
                self.u[i] = ui;
                marginal[i] = ui * kvi;
            }
        }
        marginal
    }

    /// `v <- (b / K'u)^psi` given a precomputed `K'u`.
    pub fn update_v(&mut self, kernel: &OtKernel, ktu: &[f64], b: &[f64], psi: f64) {
        let eps = kernel.epsilon();
        for j in 0..b.len() {
            self.v[j] = if b[j] > 0.0 && ktu[j] > 0.0 {
                (psi * (b[j].ln() - ktu[j].ln()) - (1.0 - psi) * self.beta[j] / eps).exp()
            } else {
                0.0
            };
        }
    }

    /// Row marginal `u * Kv` of the current plan.
    pub fn row_marginal(&self, kernel: &OtKernel) -> Vec<f64> {
        let support: Vec<usize> = (0..self.u.len()).filter(|&i| self.u[i] > 0.0).collect();
        let kv = self.row_products(kernel, &support);
        let mut out = vec![0.0; self.u.len()];
        for (&i, k) in support.iter().zip(kv) {
            out[i] = self.u[i] * k;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    fn out_of_range(values: &[f64]) -> bool {
        values
            .iter()
            .any(|&x| x > ABSORB_THRESHOLD || (x > 0.0 && x < 1.0 / ABSORB_THRESHOLD))
    }

    /// Folds extreme scalings into the log offsets and rebuilds the
    /// stabilized kernel. Returns whether an absorption happened.
    pub fn absorb_if_needed(&mut self, kernel: &OtKernel) -> bool {
        if !(Self::out_of_range(&self.u) || Self::out_of_range(&self.v)) {
            return false;
        }
        let eps = kernel.epsilon();
        for (x, off) in self.u.iter_mut().zip(self.alpha.iter_mut()) {
            if *x > 0.0 {
                *off += eps * x.ln();
                *x = 1.0;
            }
        }
        for (x, off) in self.v.iter_mut().zip(self.beta.iter_mut()) {
            if *x > 0.0 {
                *off += eps * x.ln();
                *x = 1.0;
            }
        }
        let m = kernel.metric().costs();
        let p = m.nrows();
        let (alpha, beta) = (&self.alpha, &self.beta);
        self.stabilized = Some(DMatrix::from_fn(p, p, |j, i| {
            flush(((alpha[i] + beta[j] - m[(i, j)]) / eps).min(700.0).exp())
        }));
        true
    }

    /// `ln U_i`, `-inf` where the scaling is zero.
    pub fn log_u(&self, eps: f64) -> Vec<f64> {
        self.u
            .iter()
            .zip(&self.alpha)
            .map(|(&x, &a)| if x > 0.0 { x.ln() + a / eps } else { f64::NEG_INFINITY })
            .collect()
    }

    pub fn log_v(&self, eps: f64) -> Vec<f64> {
        self.v
            .iter()
            .zip(&self.beta)
            .map(|(&x, &b)| if x > 0.0 { x.ln() + b / eps } else { f64::NEG_INFINITY })
            .collect()
    }

    /// `<P, M> + eps sum P (log P - 1)` with the row and column sums of `P`,
    /// visiting only the rows where `U` is nonzero. Entries come from the
    /// kernel in use; `log P` from the log scalings.
    pub fn plan_summary(&self, kernel: &OtKernel) -> (f64, Vec<f64>, Vec<f64>) {
        let eps = kernel.epsilon();
        let (lu, lv) = (self.log_u(eps), self.log_v(eps));
        let k = self.rows(kernel);
        let m = kernel.metric().costs();
        let p = m.nrows();
        let (kdata, mdata) = (k.as_slice(), m.as_slice());
        let cols_support: Vec<usize> = (0..p).filter(|&j| self.v[j] > 0.0).collect();
        let mut rows = vec![0.0; p];
        let mut cols = vec![0.0; p];
        let mut value = 0.0;
        for i in (0..p).filter(|&i| self.u[i] > 0.0) {
            // Column i of the symmetric costs is row i.
            let (krow, mrow) = (&kdata[i * p..(i + 1) * p], &mdata[i * p..(i + 1) * p]);
            let ui = self.u[i];
            let mut row = 0.0;
            for &j in &cols_support {
                let pij = ui * krow[j] * self.v[j];
                if pij > 0.0 {
                    let logp = lu[i] + lv[j] - mrow[j] / eps;
                    value += pij * (mrow[j] + eps * (logp - 1.0));
                    row += pij;
                    cols[j] += pij;
                }
            }
            rows[i] = row;
        }
        (value, rows, cols)
    }

    /// Dense plan evaluated in the log domain from the ground costs.
    pub fn plan(&self, kernel: &OtKernel) -> DMatrix<f64> {
        let eps = kernel.epsilon();
        let (lu, lv) = (self.log_u(eps), self.log_v(eps));
        let m = kernel.metric().costs();
        let p = m.nrows();
        DMatrix::from_fn(p, p, |i, j| {
            if lu[i] == f64::NEG_INFINITY || lv[j] == f64::NEG_INFINITY {
                0.0
            } else {
                (lu[i] + lv[j] - m[(i, j)] / eps).exp()
            }
        })
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Largest entrywise change of `new` relative to its max-norm.
pub(crate) fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let scale = new.iter().chain(old).fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let diff = new
        .iter()
        .zip(old)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / scale
}
