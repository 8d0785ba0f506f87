//! The four subcommands, callable as library functions.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use mwe_core::metrics::{score, ScoreReport};
use mwe_core::simulate::{simulate_on, trial_seed};
use mwe_core::solvers::{LambdaScale, SolverConfig};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::{format_lambda_scale, ExperimentConfig, KeyValues, SolverName, SolverSpec};
use crate::error::CliError;
use crate::files::{create_dir, read_coefficients, read_instance, write_instance, write_result, LoadedInstance, StoredResult};
use crate::plot::{line_chart, Panel, Series};
use crate::runner::{run_solver, RunOutput};

fn condition_label(shared: bool, n_subjects: usize) -> String {
    format!("{}_s{n_subjects}", if shared { "shared" } else { "distinct" })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

/// Writes one instance directory per condition and trial under `out`.
///
/// With a single condition the trials are `out/trial_000`, ...; otherwise
/// they sit under `out/{distinct|shared}_sS/`. Trial seeds are derived from
/// the master seed, the trial index and the subject count.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let conditions = config.conditions();
    let mut dirs = Vec::new();
    for &(shared, n_subjects) in &conditions {
        let base = if conditions.len() == 1 {
            out.to_path_buf()
        } else {
            out.join(condition_label(shared, n_subjects))
        };
        for trial in 0..config.trials {
            let seed = trial_seed(config.seed, trial as u64, n_subjects);
            let sim_config = config.sim.config(n_subjects, shared, seed);
            let sim = simulate_on(config.sim.space, config.sim.n_labels, &sim_config)?;
            let dir = base.join(format!("trial_{trial:03}"));
            write_instance(&dir, config.sim.space, config.sim.n_labels, &sim_config, &sim)?;
            dirs.push(dir);
        }
    }
    Ok(dirs)
}

/// Settings for one `solve` call. The config file, when given, must hold a
/// `[solver NAME]` section for the chosen solver with a single grid point;
/// the flags override it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveOptions {
    pub config: Option<PathBuf>,
    pub lambda_rel: Option<f64>,
    pub mu: Option<f64>,
    pub lambda_scale: Option<LambdaScale>,
}

pub fn resolve_solver_config(name: SolverName, options: &SolveOptions) -> Result<SolverConfig, CliError> {
    let mut config = crate::config::default_solver_config();
    if let Some(path) = &options.config {
        let kv = KeyValues::read(path)?;
        let section = kv
            .sections
            .iter()
            .find(|s| s.name == "solver" && s.argument.as_deref() == Some(name.as_str()));
        if let Some(section) = section {
            let spec = SolverSpec::from_section(section, &kv.origin)?;
            if spec.grid.len() != 1 {
                return Err(CliError::Validation(format!(
                    "{}: solve takes a single setting, [solver {name}] has {} grid points",
                    kv.origin,
                    spec.grid.len()
                )));
            }
            config = spec.grid.into_iter().next().unwrap_or(config);
        }
    }
    if let Some(v) = options.lambda_rel {
        config.lambda_rel = v;
    }
    if let Some(v) = options.mu {
        config.mu = v;
    }
    if let Some(v) = options.lambda_scale {
        config.lambda_scale = v;
    }
    crate::config::validate_for(name, &config).map_err(CliError::Validation)?;
    Ok(config)
}

fn list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

/// The `run.txt` manifest: resolved settings and convergence record.
pub fn run_manifest(name: SolverName, loaded: &LoadedInstance, config: &SolverConfig, out: &RunOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[run]");
    let _ = writeln!(s, "solver = {name}");
    let _ = writeln!(s, "instance = {}", loaded.dir.display());
    let _ = writeln!(s, "lambda_rel = {}", config.lambda_rel);
    let _ = writeln!(s, "mu = {}", config.mu);
    let _ = writeln!(s, "lambda_scale = {}", format_lambda_scale(config.lambda_scale));
    if let Ok(ot) = config.ot.resolve(loaded.metric()) {
        let _ = writeln!(s, "epsilon = {}", ot.epsilon);
        let _ = writeln!(s, "gamma = {}", ot.gamma);
    }
    let _ = writeln!(s, "epsilon_rel = {}", config.ot.epsilon_rel);
    let _ = writeln!(s, "ot_max_iter = {}", config.ot.max_iter);
    let _ = writeln!(s, "ot_tol = {}", config.ot.tol);
    match config.sigma0 {
        Some(v) => {
            let _ = writeln!(s, "sigma0 = {v}");
        }
        None => {
            let _ = writeln!(s, "sigma_alpha = {}", config.sigma_alpha);
        }
    }
    let _ = writeln!(s, "eta = {}", config.eta);
    let _ = writeln!(s, "cd_tol = {}", config.cd.tol);
    let _ = writeln!(s, "cd_max_iter = {}", config.cd.max_iter);
    let _ = writeln!(s, "outer_tol = {}", config.outer_tol);
    let _ = writeln!(s, "max_outer = {}", config.max_outer);
    let _ = writeln!(s, "max_reweight = {}", config.max_reweight);
    let _ = writeln!(s, "\n[result]");
    let _ = writeln!(s, "lambdas = {}", list(&out.lambdas));
    if !out.sigmas.is_empty() {
        let _ = writeln!(s, "sigmas = {}", list(&out.sigmas));
    }
    let _ = writeln!(s, "converged = {}", out.converged);
    let _ = writeln!(s, "iterations = {}", out.iterations);
    if let Some(ok) = out.sinkhorn_converged {
        let _ = writeln!(s, "sinkhorn_converged = {ok}");
    }
    s
}

/// Fits `name` on the instance in `instance_dir` and writes the result
/// files to `out`. Non-convergence is recorded in `run.txt`, not raised.
pub fn cmd_solve(instance_dir: &Path, name: SolverName, options: &SolveOptions, out: &Path) -> Result<StoredResult, CliError> {
    let config = resolve_solver_config(name, options)?;
    let loaded = read_instance(instance_dir)?;
    let output = run_solver(name, &loaded.instance, &config)?;
    if output.objective_trace.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Runtime(format!("{name}: objective is not finite")));
    }
    let result = StoredResult {
        coefficients: output.amplitudes(&loaded.instance),
        sigmas: output.sigmas.clone(),
        barycenter: output.barycenter.clone(),
        objective_trace: output.objective_trace.clone(),
        run: run_manifest(name, &loaded, &config, &output),
    };
    write_result(out, &result)?;
    Ok(result)
}

pub const EVALUATION_HEADER: &str = "instance,result,subject,mse,auc,emd_mm";

/// Scores the result in `result_dir` against the truth of `instance_dir`.
/// When `csv` is given, appends one row per subject and a `mean` row,
/// writing the header first if the file is new.
pub fn cmd_evaluate(instance_dir: &Path, result_dir: &Path, csv: Option<&Path>) -> Result<ScoreReport, CliError> {
    let loaded = read_instance(instance_dir)?;
    let truths = loaded
        .truths
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("{} has no truth files", instance_dir.display())))?;
    let estimates = read_coefficients(result_dir)?;
    if estimates.len() != truths.len() || estimates.iter().any(|e| e.len() != loaded.instance.n_sources()) {
        return Err(CliError::Validation(format!(
            "result has {} columns of length {}, instance has {} subjects and {} sources",
            estimates.len(),
            estimates.first().map_or(0, DVector::len),
            truths.len(),
            loaded.instance.n_sources()
        )));
    }
    let report = score(&estimates, truths, loaded.metric())?;
    if let Some(path) = csv {
        let fresh = !path.is_file();
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::io(format!("cannot open {}", path.display()), e))?;
        let mut text = String::new();
        if fresh {
            let _ = writeln!(text, "{EVALUATION_HEADER}");
        }
        let (i, r) = (instance_dir.display(), result_dir.display());
        for (s, sc) in report.per_subject.iter().enumerate() {
            let _ = writeln!(text, "{i},{r},{s},{},{},{}", sc.mse, sc.auc, sc.emd_mm);
        }
        let _ = writeln!(text, "{i},{r},mean,{},{},{}", report.mse, report.auc, report.emd_mm);
        file.write_all(text.as_bytes())
            .map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))?;
    }
    Ok(report)
}

/// Scores of one grid point on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub shared: bool,
    pub n_subjects: usize,
    pub trial: usize,
    pub solver: SolverName,
    pub lambda_rel: f64,
    pub mu: f64,
    /// `None` when the solve failed; the message is in `error`.
    pub scores: Option<(f64, f64, f64)>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Best score per metric over a solver's grid on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub shared: bool,
    pub n_subjects: usize,
    pub trial: usize,
    pub seed: u64,
    pub solver: SolverName,
    pub mse: f64,
    pub auc: f64,
    pub emd_mm: f64,
    /// Grid points that failed.
    pub failures: usize,
}

/// Mean and 95% interval of one metric over trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub ci95: f64,
    /// Trials with a finite value.
    pub n: usize,
}

impl Stat {
    /// Mean and `1.96 sd / sqrt(n)` over the finite values (sample sd).
    pub fn of(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let n = finite.len();
        if n == 0 {
            return Self { mean: f64::NAN, ci95: f64::NAN, n };
        }
        let mean = finite.iter().sum::<f64>() / n as f64;
        let ci95 = if n > 1 {
            let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, ci95, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub shared: bool,
    pub n_subjects: usize,
    pub solver: SolverName,
    pub mse: Stat,
    pub auc: Stat,
    pub emd_mm: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub grid: Vec<GridRow>,
    pub results: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl Benchmark {
    pub fn summary_for(&self, shared: bool, n_subjects: usize, solver: SolverName) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.shared == shared && r.n_subjects == n_subjects && r.solver == solver)
    }
}

struct Job {
    shared: bool,
    n_subjects: usize,
    trial: usize,
    seed: u64,
}

fn run_job(config: &ExperimentConfig, job: &Job) -> (Vec<GridRow>, Vec<ResultRow>) {
    let sim_config = config.sim.config(job.n_subjects, job.shared, job.seed);
    let sim = simulate_on(config.sim.space, config.sim.n_labels, &sim_config);
    let mut grid = Vec::new();
    let mut results = Vec::new();
    for spec in &config.solvers {
        let mut best = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
        let mut failures = 0;
        for point in &spec.grid {
            let outcome = sim.as_ref().map_err(|e| CliError::Runtime(e.to_string())).and_then(|sim| {
                let out = run_solver(spec.name, &sim.instance, point)?;
                let report = score(&out.amplitudes(&sim.instance), &sim.truth_values(), sim.instance.metric())?;
                Ok((report, out.converged))
            });
            let row = GridRow {
                shared: job.shared,
                n_subjects: job.n_subjects,
                trial: job.trial,
                solver: spec.name,
                lambda_rel: point.lambda_rel,
                mu: point.mu,
                scores: None,
                converged: false,
                error: None,
            };
            grid.push(match outcome {
                Ok((r, converged)) => {
                    best.0 = best.0.min(r.mse);
                    best.1 = best.1.max(r.auc);
                    best.2 = best.2.min(r.emd_mm);
                    GridRow {
                        scores: Some((r.mse, r.auc, r.emd_mm)),
                        converged,
                        ..row
                    }
                }
                Err(e) => {
                    failures += 1;
                    GridRow {
                        error: Some(e.to_string()),
                        ..row
                    }
                }
            });
        }
        if failures == spec.grid.len() {
            best = (f64::NAN, f64::NAN, f64::NAN);
        }
        results.push(ResultRow {
            shared: job.shared,
            n_subjects: job.n_subjects,
            trial: job.trial,
            seed: job.seed,
            solver: spec.name,
            mse: best.0,
            auc: best.1,
            emd_mm: best.2,
            failures,
        });
    }
    (grid, results)
}

/// Runs every solver grid on every trial of every condition and reduces to
/// best-per-metric rows and per-condition means. Trials run on a pool of
/// `threads` workers; the output order does not depend on scheduling.
pub fn run_benchmark(config: &ExperimentConfig, threads: usize) -> Result<Benchmark, CliError> {
    if config.solvers.is_empty() {
        return Err(CliError::Validation("benchmark needs at least one [solver NAME] section".into()));
    }
    let mut jobs = Vec::new();
    for (shared, n_subjects) in config.conditions() {
        for trial in 0..config.trials {
            jobs.push(Job {
                shared,
                n_subjects,
                trial,
                seed: trial_seed(config.seed, trial as u64, n_subjects),
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    let outputs: Vec<(Vec<GridRow>, Vec<ResultRow>)> =
        pool.install(|| jobs.par_iter().map(|job| run_job(config, job)).collect());
    let mut grid = Vec::new();
    let mut results = Vec::new();
    for (g, r) in outputs {
        grid.extend(g);
        results.extend(r);
    }
    let mut summary = Vec::new();
    for (shared, n_subjects) in config.conditions() {
        for spec in &config.solvers {
            let rows: Vec<&ResultRow> = results
                .iter()
                .filter(|r| r.shared == shared && r.n_subjects == n_subjects && r.solver == spec.name)
                .collect();
            let stat = |f: fn(&ResultRow) -> f64| Stat::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            summary.push(SummaryRow {
                shared,
                n_subjects,
                solver: spec.name,
                mse: stat(|r| r.mse),
                auc: stat(|r| r.auc),
                emd_mm: stat(|r| r.emd_mm),
            });
        }
    }
    Ok(Benchmark { grid, results, summary })
}

fn leadfield_name(shared: bool) -> &'static str {
    if shared {
        "shared"
    } else {
        "distinct"
    }
}

pub fn grid_csv(bench: &Benchmark) -> String {
    let mut s = String::from("leadfield,n_subjects,trial,solver,lambda_rel,mu,mse,auc,emd_mm,converged,error\n");
    for r in &bench.grid {
        let (mse, auc, emd) = match r.scores {
            Some((a, b, c)) => (a.to_string(), b.to_string(), c.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{mse},{auc},{emd},{},{error}",
            leadfield_name(r.shared),
            r.n_subjects,
            r.trial,
            r.solver,
            r.lambda_rel,
            r.mu,
            r.converged
        );
    }
    s
}

pub fn results_csv(bench: &Benchmark) -> String {
    let mut s = String::from("leadfield,n_subjects,trial,seed,solver,mse,auc,emd_mm,failures\n");
    for r in &bench.results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            leadfield_name(r.shared),
            r.n_subjects,
            r.trial,
            r.seed,
            r.solver,
            r.mse,
            r.auc,
            r.emd_mm,
            r.failures
        );
    }
    s
}

pub fn summary_csv(bench: &Benchmark) -> String {
    let mut s = String::from("leadfield,n_subjects,solver,metric,mean,ci95,n\n");
    for r in &bench.summary {
        for (metric, stat) in [("mse", r.mse), ("auc", r.auc), ("emd_mm", r.emd_mm)] {
            let _ = writeln!(
                s,
                "{},{},{},{metric},{},{},{}",
                leadfield_name(r.shared),
                r.n_subjects,
                r.solver,
                stat.mean,
                stat.ci95,
                stat.n
            );
        }
    }
    s
}

/// One chart per metric: a panel per leadfield condition, a series per
/// solver, subject count on the x axis.
pub fn metric_charts(config: &ExperimentConfig, bench: &Benchmark) -> Vec<(&'static str, String)> {
    let metrics: [(&str, &str, fn(&SummaryRow) -> Stat); 3] = [
        ("mse", "MSE (nAm²)", |r| r.mse),
        ("auc", "PR-AUC", |r| r.auc),
        ("emd_mm", "EMD per source (mm)", |r| r.emd_mm),
    ];
    metrics
        .iter()
        .map(|&(key, label, get)| {
            let panels: Vec<Panel> = config
                .sim
                .shared_leadfield
                .iter()
                .map(|&shared| Panel {
                    title: format!("{} leadfields", if shared { "Shared" } else { "Distinct" }),
                    series: config
                        .solvers
                        .iter()
                        .map(|spec| Series {
                            name: spec.name.to_string(),
                            points: config
                                .sim
                                .n_subjects
                                .iter()
                                .filter_map(|&n| {
                                    let st = get(bench.summary_for(shared, n, spec.name)?);
                                    Some((n as f64, st.mean, st.ci95))
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect();
            (key, line_chart(&panels, "Number of subjects", label))
        })
        .collect()
}

/// Runs the benchmark and writes `grid.csv`, `results.csv`, `summary.csv`
/// and one SVG per metric into `out` (default: the config's output_dir).
pub fn cmd_benchmark(config: &ExperimentConfig, out: Option<&Path>, threads: Option<usize>) -> Result<Benchmark, CliError> {
    let bench = run_benchmark(config, threads.unwrap_or(config.threads))?;
    let dir = out.unwrap_or(&config.output_dir);
    create_dir(dir)?;
    write_file(&dir.join("grid.csv"), &grid_csv(&bench))?;
    write_file(&dir.join("results.csv"), &results_csv(&bench))?;
    write_file(&dir.join("summary.csv"), &summary_csv(&bench))?;
    for (key, svg) in metric_charts(config, &bench) {
        write_file(&dir.join(format!("{key}.svg")), &svg)?;
    }
    Ok(bench)
}
