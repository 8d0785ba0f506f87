//! Reproducible synthetic group inverse problems.

mod space;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::model::{depth_weight, GroundMetric, ProblemInstance, SignedVector, Subject};

pub use space::{
    build_source_space, geodesic_metric, read_source_space, write_source_space, SourceSpace, SpaceKind,
    TARGET_EXTENT_MM,
};

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Labels = 1,
    Leadfields = 2,
    LabelChoice = 3,
    SharedVertices = 4,
    FreshVertices = 5,
    Amplitudes = 6,
    Signs = 7,
    Noise = 8,
}

/// Generator for `stream`, independent of every other stream of `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of one trial in a sweep over subject counts, derived from the
/// master seed so trials and conditions never share a stream.
pub fn trial_seed(master: u64, trial: u64, n_subjects: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((n_subjects as u64) << 32 | trial);
    rng.random()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub n_sensors: usize,
    pub n_sources_true: usize,
    /// Amplitude range in nAm.
    pub amp_range: (f64, f64),
    pub overlap_fraction: f64,
    /// `f64::INFINITY` disables noise.
    pub snr: f64,
    pub shared_leadfield: bool,
    pub depth_exponent: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_subjects: 2,
            n_sensors: 50,
            n_sources_true: 5,
            amp_range: (20.0, 30.0),
            overlap_fraction: 0.5,
            snr: 4.0,
            shared_leadfield: false,
            depth_exponent: 0.9,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.n_sensors == 0 || self.n_sources_true == 0 {
            return Err(Error::InvalidParameter("subject, sensor and source counts must be positive".into()));
        }
        let (lo, hi) = self.amp_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("amplitude range ({lo}, {hi}) is invalid")));
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidParameter(format!(
                "overlap fraction must lie in [0, 1], got {}",
                self.overlap_fraction
            )));
        }
        if !(self.snr > 0.0) {
            return Err(Error::InvalidParameter(format!("snr must be positive, got {}", self.snr)));
        }
        if !(0.0..=1.0).contains(&self.depth_exponent) {
            return Err(Error::InvalidParameter(format!(
                "depth exponent must lie in [0, 1], got {}",
                self.depth_exponent
            )));
        }
        Ok(())
    }

    /// Number of subjects whose sources sit exactly on the shared vertices.
    pub fn n_overlapping(&self) -> usize {
        ((self.overlap_fraction * self.n_subjects as f64).ceil() as usize).min(self.n_subjects)
    }
}

/// A leadfield before and after depth weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct Leadfield {
    pub raw: DMatrix<f64>,
    pub weighted: DMatrix<f64>,
    /// Column divisors: `raw = weighted * diag(depth)`.
    pub depth: DVector<f64>,
}

/// Smooth random gain matrices: `G = A B` with `A` standard normal `n × r`,
/// `r = min(n, 20)`, and `B` standard normal rows diffused over the mesh by
/// three rounds of neighbour averaging.
pub fn random_leadfields(space: &SourceSpace, config: &SimConfig) -> Result<Vec<Leadfield>> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Leadfields);
    let neighbors = space.neighbors();
    let draws = if config.shared_leadfield { 1 } else { config.n_subjects };
    let mut out = Vec::with_capacity(config.n_subjects);
    for _ in 0..draws {
        let raw = smooth_gain(&neighbors, config.n_sensors, &mut rng);
        let (weighted, depth) = depth_weight(&raw, config.depth_exponent)?;
        out.push(Leadfield { raw, weighted, depth });
    }
    while out.len() < config.n_subjects {
        out.push(out[0].clone());
    }
    Ok(out)
}

fn smooth_gain<R: Rng>(neighbors: &[Vec<usize>], n: usize, rng: &mut R) -> DMatrix<f64> {
    let p = neighbors.len();
    let r = n.min(20);
    let a = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut b = DMatrix::from_fn(r, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    for _ in 0..3 {
        let prev = b.clone();
        for (j, nb) in neighbors.iter().enumerate() {
            let mut col = prev.column(j).into_owned();
            for &k in nb {
                col += prev.column(k);
            }
            b.set_column(j, &(col / (nb.len() + 1) as f64));
        }
    }
    a * b
}

/// Ground-truth sources, in nAm.
#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    pub truths: Vec<SignedVector>,
    /// One shared vertex per selected label.
    pub shared_support: Vec<usize>,
    pub labels: Vec<usize>,
}

/// One source per selected label and subject. The first
/// [`SimConfig::n_overlapping`] subjects use the shared vertices, the others
/// draw a different vertex of the same label. Each label has one sign shared
/// by every subject.
pub fn sample_sources(space: &SourceSpace, config: &SimConfig) -> Result<Sources> {
    config.validate()?;
    let p = space.len();
    let k = config.n_sources_true;
    if k > space.labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{k} sources requested but the space has {} labels",
            space.labels.len()
        )));
    }
    let n_shared = config.n_overlapping();
    let labels = rand::seq::index::sample(&mut stream_rng(config.seed, Stream::LabelChoice), space.labels.len(), k)
        .into_vec();
    if n_shared < config.n_subjects {
        if let Some(&l) = labels.iter().find(|&&l| space.labels[l].len() < 2) {
            return Err(Error::InvalidParameter(format!(
                "label {l} has a single vertex; non-overlapping subjects need two"
            )));
        }
    }
    let mut shared_rng = stream_rng(config.seed, Stream::SharedVertices);
    let shared_support: Vec<usize> = labels
        .iter()
        .map(|&l| *space.labels[l].choose(&mut shared_rng).expect("labels are nonempty"))
        .collect();
    let mut sign_rng = stream_rng(config.seed, Stream::Signs);
    let signs: Vec<f64> = labels.iter().map(|_| if sign_rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let mut fresh_rng = stream_rng(config.seed, Stream::FreshVertices);
    let mut amp_rng = stream_rng(config.seed, Stream::Amplitudes);
    let (lo, hi) = config.amp_range;
    let amps = Uniform::new_inclusive(lo, hi).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut truths = Vec::with_capacity(config.n_subjects);
    for s in 0..config.n_subjects {
        let mut x = DVector::zeros(p);
        for (i, &l) in labels.iter().enumerate() {
            let vertex = if s < n_shared {
                shared_support[i]
            } else {
                let others: Vec<usize> = space.labels[l].iter().copied().filter(|&v| v != shared_support[i]).collect();
                *others.choose(&mut fresh_rng).expect("checked above")
            };
            x[vertex] = signs[i] * amps.sample(&mut amp_rng);
        }
        truths.push(SignedVector::from_values(&x));
    }
    Ok(Sources {
        truths,
        shared_support,
        labels,
    })
}

/// Noisy measurements `y = G x + e` with a common noise level
/// `sigma = mean_s ‖G x‖ / snr`. Returns the measurements and `sigma`.
pub fn synthesize(
    gains: &[DMatrix<f64>],
    truths: &[SignedVector],
    snr: f64,
    seed: u64,
) -> Result<(Vec<DVector<f64>>, f64)> {
    if gains.len() != truths.len() || gains.is_empty() {
        return Err(Error::Shape(format!("{} gains for {} truths", gains.len(), truths.len())));
    }
    if !(snr > 0.0) {
        return Err(Error::InvalidParameter(format!("snr must be positive, got {snr}")));
    }
    let mut signals = Vec::with_capacity(gains.len());
    for (g, x) in gains.iter().zip(truths) {
        if g.ncols() != x.len() {
            return Err(Error::Shape(format!("gain has {} columns, truth has {} entries", g.ncols(), x.len())));
        }
        signals.push(g * x.values());
    }
    let mean_norm = signals.iter().map(|s| s.norm()).sum::<f64>() / signals.len() as f64;
    let sigma = if snr.is_infinite() { 0.0 } else { mean_norm / snr };
    if sigma == 0.0 && snr.is_finite() {
        return Err(Error::InvalidParameter("signal is zero, so the noise level is undefined".into()));
    }
    let mut rng = stream_rng(seed, Stream::Noise);
    let measurements = signals
        .into_iter()
        .map(|s| {
            let noise = DVector::from_fn(s.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            s + noise * sigma
        })
        .collect();
    Ok((measurements, sigma))
}

/// A complete simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub space: SourceSpace,
    pub instance: ProblemInstance,
    pub leadfields: Vec<Leadfield>,
    pub sources: Sources,
    pub noise_sigma: f64,
}

impl Simulation {
    /// Truth values (pos minus neg) per subject, in nAm.
    pub fn truth_values(&self) -> Vec<DVector<f64>> {
        self.sources.truths.iter().map(SignedVector::values).collect()
    }
}

/// Runs the whole pipeline on an existing source space and metric.
pub fn simulate(space: &SourceSpace, metric: &GroundMetric, config: &SimConfig) -> Result<Simulation> {
    config.validate()?;
    if metric.len() != space.len() {
        return Err(Error::Shape(format!("metric is {}×{0} for {} vertices", metric.len(), space.len())));
    }
    let leadfields = random_leadfields(space, config)?;
    let sources = sample_sources(space, config)?;
    let raws: Vec<DMatrix<f64>> = leadfields.iter().map(|l| l.raw.clone()).collect();
    let (measurements, noise_sigma) = synthesize(&raws, &sources.truths, config.snr, config.seed)?;
    let subjects = leadfields
        .iter()
        .zip(measurements)
        .map(|(l, y)| Subject {
            design: l.weighted.clone(),
            measurement: y,
            depth: Some(l.depth.clone()),
        })
        .collect();
    let instance = ProblemInstance::new(subjects, metric.clone())?;
    Ok(Simulation {
        space: space.clone(),
        instance,
        leadfields,
        sources,
        noise_sigma,
    })
}

/// Builds the source space from the labels stream of `config.seed`, then
/// simulates on it.
pub fn simulate_on(kind: SpaceKind, n_labels: usize, config: &SimConfig) -> Result<Simulation> {
    let space = build_source_space(kind, n_labels, &mut stream_rng(config.seed, Stream::Labels))?;
    let metric = geodesic_metric(&space)?;
    simulate(&space, &metric, config)
}
