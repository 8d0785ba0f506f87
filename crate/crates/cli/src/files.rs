//! On-disk layout of simulated instances and solver results.
//!
//! An instance directory holds `manifest.txt` (the simulation settings and
//! seed), `source_space.txt`, and per subject `leadfield_S.bin` (gain before
//! depth weighting), `measurement_S.csv` and `truth_S.csv` (nAm).
//!
//! A result directory holds `coefficients.csv` (p × S, nAm), `sigmas.csv`,
//! `objective_trace.csv`, `barycenter.csv` (p × 2, positive and negative
//! parts, transport solvers only) and `run.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mwe_core::io::{read_matrix, read_vector, write_matrix, write_vector};
use mwe_core::model::depth_weight;
use mwe_core::simulate::{geodesic_metric, read_source_space, write_source_space, SimConfig, Simulation, SpaceKind};
use mwe_core::{GroundMetric, ProblemInstance, SignedVector, Subject};
use nalgebra::{DMatrix, DVector};

use crate::config::{format_space, KeyValues, SimSection};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.txt";
pub const SOURCE_SPACE: &str = "source_space.txt";
pub const RUN: &str = "run.txt";
pub const COEFFICIENTS: &str = "coefficients.csv";

fn leadfield_path(dir: &Path, s: usize) -> PathBuf {
    dir.join(format!("leadfield_{s}.bin"))
}

fn measurement_path(dir: &Path, s: usize) -> PathBuf {
    dir.join(format!("measurement_{s}.csv"))
}

fn truth_path(dir: &Path, s: usize) -> PathBuf {
    dir.join(format!("truth_{s}.csv"))
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

/// Manifest text recording everything needed to regenerate an instance.
pub fn sim_manifest(space: SpaceKind, n_labels: usize, config: &SimConfig, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[sim]");
    let _ = writeln!(out, "space = {}", format_space(space));
    let _ = writeln!(out, "n_labels = {n_labels}");
    let _ = writeln!(out, "n_subjects = {}", config.n_subjects);
    let _ = writeln!(out, "n_sensors = {}", config.n_sensors);
    let _ = writeln!(out, "n_sources_true = {}", config.n_sources_true);
    let _ = writeln!(out, "amp_min = {}", config.amp_range.0);
    let _ = writeln!(out, "amp_max = {}", config.amp_range.1);
    let _ = writeln!(out, "overlap_fraction = {}", config.overlap_fraction);
    let _ = writeln!(out, "snr = {}", config.snr);
    let _ = writeln!(out, "shared_leadfield = {}", config.shared_leadfield);
    let _ = writeln!(out, "depth_exponent = {}", config.depth_exponent);
    let _ = writeln!(out, "\n[instance]");
    let _ = writeln!(out, "seed = {}", config.seed);
    for (k, v) in extra {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// Writes a simulated instance into `dir`.
pub fn write_instance(dir: &Path, space: SpaceKind, n_labels: usize, config: &SimConfig, sim: &Simulation) -> Result<(), CliError> {
    create_dir(dir)?;
    let extra = [
        ("noise_sigma", sim.noise_sigma.to_string()),
        ("labels", join(&sim.sources.labels)),
        ("shared_support", join(&sim.sources.shared_support)),
    ];
    write_text(&dir.join(MANIFEST), &sim_manifest(space, n_labels, config, &extra))?;
    let mut text = Vec::new();
    write_source_space(&mut text, &sim.space)?;
    fs::write(dir.join(SOURCE_SPACE), text).map_err(|e| CliError::io("cannot write source space", e))?;
    for (s, (lf, sub)) in sim.leadfields.iter().zip(sim.instance.subjects()).enumerate() {
        write_matrix(&leadfield_path(dir, s), &lf.raw)?;
        write_vector(&measurement_path(dir, s), &sub.measurement)?;
        write_vector(&truth_path(dir, s), &sim.sources.truths[s].values())?;
    }
    Ok(())
}

/// A problem read back from an instance directory.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub dir: PathBuf,
    pub sim: SimConfig,
    pub instance: ProblemInstance,
    /// Truth per subject in nAm, when the files are present.
    pub truths: Option<Vec<DVector<f64>>>,
}

impl LoadedInstance {
    pub fn metric(&self) -> &GroundMetric {
        self.instance.metric()
    }
}

pub fn read_instance(dir: &Path) -> Result<LoadedInstance, CliError> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(CliError::Validation(format!("{} is not an instance directory (no {MANIFEST})", dir.display())));
    }
    let kv = KeyValues::read(&manifest_path)?;
    let origin = kv.origin.clone();
    let sim_section = kv
        .section("sim")
        .ok_or_else(|| CliError::Validation(format!("{origin}: missing [sim] section")))?;
    let section = SimSection::from_section(sim_section, &origin)?;
    let seed: u64 = kv
        .section("instance")
        .and_then(|s| s.entries.iter().find(|e| e.key == "seed"))
        .ok_or_else(|| CliError::Validation(format!("{origin}: missing seed")))?
        .parse(&origin)?;
    let sim = section.config(section.n_subjects[0], section.shared_leadfield[0], seed);

    let space_path = dir.join(SOURCE_SPACE);
    let file = fs::File::open(&space_path).map_err(|e| CliError::io(format!("cannot open {}", space_path.display()), e))?;
    let space = read_source_space(std::io::BufReader::new(file), &space_path.display().to_string())?;
    let metric = geodesic_metric(&space)?;

    let mut subjects = Vec::with_capacity(sim.n_subjects);
    let mut truths = Vec::with_capacity(sim.n_subjects);
    let mut have_truths = true;
    for s in 0..sim.n_subjects {
        let raw = read_matrix(&leadfield_path(dir, s))?;
        let y = read_vector(&measurement_path(dir, s))?;
        let (weighted, depth) = depth_weight(&raw, sim.depth_exponent)?;
        subjects.push(Subject {
            design: weighted,
            measurement: y,
            depth: Some(depth),
        });
        let tp = truth_path(dir, s);
        if have_truths && tp.is_file() {
            truths.push(read_vector(&tp)?);
        } else {
            have_truths = false;
        }
    }
    let instance = ProblemInstance::new(subjects, metric)?;
    if have_truths && truths.iter().any(|t| t.len() != instance.n_sources()) {
        return Err(CliError::Validation("truth length does not match the source space".into()));
    }
    Ok(LoadedInstance {
        dir: dir.to_path_buf(),
        sim,
        instance,
        truths: have_truths.then_some(truths),
    })
}

/// Stacks per-subject vectors as the columns of a `p × S` matrix.
pub fn columns(vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let p = vectors.first().map_or(0, |v| v.len());
    DMatrix::from_fn(p, vectors.len(), |j, s| vectors[s][j])
}

/// Solver output written by `solve`, in amplitude scale.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredResult {
    pub coefficients: Vec<DVector<f64>>,
    pub sigmas: Vec<f64>,
    pub barycenter: Option<SignedVector>,
    pub objective_trace: Vec<f64>,
    /// The `run.txt` manifest text.
    pub run: String,
}

pub fn write_result(dir: &Path, result: &StoredResult) -> Result<(), CliError> {
    create_dir(dir)?;
    write_matrix(&dir.join(COEFFICIENTS), &columns(&result.coefficients))?;
    write_vector(&dir.join("sigmas.csv"), &DVector::from_vec(result.sigmas.clone()))?;
    write_vector(&dir.join("objective_trace.csv"), &DVector::from_vec(result.objective_trace.clone()))?;
    if let Some(b) = &result.barycenter {
        let m = DMatrix::from_fn(b.len(), 2, |j, k| if k == 0 { b.pos[j] } else { b.neg[j] });
        write_matrix(&dir.join("barycenter.csv"), &m)?;
    }
    write_text(&dir.join(RUN), &result.run)
}

/// Reads the per-subject coefficients (columns of `coefficients.csv`).
pub fn read_coefficients(dir: &Path) -> Result<Vec<DVector<f64>>, CliError> {
    let path = dir.join(COEFFICIENTS);
    if !path.is_file() {
        return Err(CliError::Validation(format!("{} is not a result directory (no {COEFFICIENTS})", dir.display())));
    }
    let m = read_matrix(&path)?;
    Ok(m.column_iter().map(|c| c.into_owned()).collect())
}
