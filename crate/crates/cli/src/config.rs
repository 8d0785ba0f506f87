//! Experiment configuration: a flat `key = value` text format with section
//! headers.
//!
//! ```text
//! # comments start with '#'
//! [experiment]
//! trials = 20
//! seed = 0
//! output_dir = results
//!
//! [sim]
//! space = grid 20 20          # or: icosphere 3
//! n_labels = 10
//! n_subjects = 2, 4, 8, 16    # lists sweep a condition
//! shared_leadfield = false, true
//!
//! [solver mwe05]
//! lambda_rel = 0.2, 0.3       # lists form a grid (cartesian product)
//! mu = 1e-5, 1e-4
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mwe_core::simulate::{SimConfig, SpaceKind};
use mwe_core::solvers::{LambdaScale, SolverConfig};

use crate::error::CliError;

/// Parsed `key = value` lines grouped by section, with source positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub origin: String,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    /// Second word of the header, e.g. the solver name in `[solver lasso]`.
    pub argument: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl KeyValues {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut sections: Vec<Section> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(header) = content.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::parse(origin, line, "section header is missing ']'"))?;
                let mut words = header.split_whitespace();
                let name = words
                    .next()
                    .ok_or_else(|| CliError::parse(origin, line, "empty section header"))?
                    .to_string();
                let argument = words.next().map(str::to_string);
                if words.next().is_some() {
                    return Err(CliError::parse(origin, line, "section header has more than two words"));
                }
                sections.push(Section {
                    name,
                    argument,
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::parse(origin, line, format!("expected 'key = value', found '{content}'")))?;
            let section = sections
                .last_mut()
                .ok_or_else(|| CliError::parse(origin, line, "entry before any section header"))?;
            let key = key.trim().to_string();
            if section.entries.iter().any(|e| e.key == key) {
                return Err(CliError::parse(origin, line, format!("duplicate key '{key}'")));
            }
            section.entries.push(Entry {
                key,
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Self {
            origin: origin.to_string(),
            sections,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl Entry {
    pub fn parse<T: FromStr>(&self, origin: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        self.value
            .parse()
            .map_err(|e| CliError::parse(origin, self.line, format!("{}: {e}", self.key)))
    }

    /// Comma-separated list; a single value is a one-element list.
    pub fn parse_list<T: FromStr>(&self, origin: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        let items: Vec<T> = self
            .value
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|e| CliError::parse(origin, self.line, format!("{}: '{}': {e}", self.key, v.trim())))
            })
            .collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(CliError::parse(origin, self.line, format!("{} is empty", self.key)));
        }
        Ok(items)
    }
}

/// The estimators reachable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SolverName {
    Mne,
    Lasso,
    RwLasso,
    GroupLasso,
    Dirty,
    Mwe1,
    Mwe05,
}

impl SolverName {
    pub const ALL: [SolverName; 7] = [
        SolverName::Mne,
        SolverName::Lasso,
        SolverName::RwLasso,
        SolverName::GroupLasso,
        SolverName::Dirty,
        SolverName::Mwe1,
        SolverName::Mwe05,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverName::Mne => "mne",
            SolverName::Lasso => "lasso",
            SolverName::RwLasso => "rw-lasso",
            SolverName::GroupLasso => "group-lasso",
            SolverName::Dirty => "dirty",
            SolverName::Mwe1 => "mwe1",
            SolverName::Mwe05 => "mwe05",
        }
    }
}

impl fmt::Display for SolverName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|n| n.as_str()).collect();
                format!("unknown solver '{s}' (expected one of {})", names.join(", "))
            })
    }
}

pub fn parse_space(value: &str) -> Result<SpaceKind, String> {
    let words: Vec<&str> = value.split_whitespace().collect();
    let num = |w: &str| w.parse::<usize>().map_err(|e| format!("'{w}': {e}"));
    match words.as_slice() {
        ["grid", r, c] => Ok(SpaceKind::Grid { rows: num(r)?, cols: num(c)? }),
        ["icosphere", k] => Ok(SpaceKind::Icosphere {
            subdivisions: k.parse::<u32>().map_err(|e| format!("'{k}': {e}"))?,
        }),
        _ => Err(format!("expected 'grid ROWS COLS' or 'icosphere K', found '{value}'")),
    }
}

pub fn format_space(kind: SpaceKind) -> String {
    match kind {
        SpaceKind::Grid { rows, cols } => format!("grid {rows} {cols}"),
        SpaceKind::Icosphere { subdivisions } => format!("icosphere {subdivisions}"),
    }
}

fn parse_lambda_scale(value: &str) -> Result<LambdaScale, String> {
    match value {
        "per-subject" => Ok(LambdaScale::PerSubject),
        "global" => Ok(LambdaScale::Global),
        other => Err(format!("lambda_scale must be 'per-subject' or 'global', found '{other}'")),
    }
}

pub fn format_lambda_scale(scale: LambdaScale) -> &'static str {
    match scale {
        LambdaScale::PerSubject => "per-subject",
        LambdaScale::Global => "global",
    }
}

/// Simulation settings, with the subject count and leadfield sharing as
/// sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSection {
    pub space: SpaceKind,
    pub n_labels: usize,
    pub n_subjects: Vec<usize>,
    pub shared_leadfield: Vec<bool>,
    /// Template for the remaining fields; its subject count, sharing flag
    /// and seed are overwritten per condition and trial.
    pub base: SimConfig,
}

impl Default for SimSection {
    fn default() -> Self {
        let base = SimConfig::default();
        Self {
            space: SpaceKind::Grid { rows: 20, cols: 20 },
            n_labels: 10,
            n_subjects: vec![base.n_subjects],
            shared_leadfield: vec![base.shared_leadfield],
            base,
        }
    }
}

impl SimSection {
    pub fn from_section(section: &Section, origin: &str) -> Result<Self, CliError> {
        let mut sim = Self::default();
        for e in &section.entries {
            match e.key.as_str() {
                "space" => sim.space = parse_space(&e.value).map_err(|m| CliError::parse(origin, e.line, m))?,
                "n_labels" => sim.n_labels = e.parse(origin)?,
                "n_subjects" => sim.n_subjects = e.parse_list(origin)?,
                "shared_leadfield" => sim.shared_leadfield = e.parse_list(origin)?,
                "n_sensors" => sim.base.n_sensors = e.parse(origin)?,
                "n_sources_true" => sim.base.n_sources_true = e.parse(origin)?,
                "amp_min" => sim.base.amp_range.0 = e.parse(origin)?,
                "amp_max" => sim.base.amp_range.1 = e.parse(origin)?,
                "overlap_fraction" => sim.base.overlap_fraction = e.parse(origin)?,
                "snr" => sim.base.snr = e.parse(origin)?,
                "depth_exponent" => sim.base.depth_exponent = e.parse(origin)?,
                other => return Err(CliError::parse(origin, e.line, format!("unknown key '{other}' in [sim]"))),
            }
        }
        // Validate the template once with every swept subject count.
        for &s in &sim.n_subjects {
            sim.config(s, false, 0)
                .validate()
                .map_err(|err| CliError::parse(origin, section.line, err.to_string()))?;
        }
        if sim.n_sources_true() > sim.n_labels {
            return Err(CliError::parse(
                origin,
                section.line,
                format!("n_sources_true = {} exceeds n_labels = {}", sim.n_sources_true(), sim.n_labels),
            ));
        }
        Ok(sim)
    }

    fn n_sources_true(&self) -> usize {
        self.base.n_sources_true
    }

    /// The simulation of one condition and trial.
    pub fn config(&self, n_subjects: usize, shared: bool, seed: u64) -> SimConfig {
        SimConfig {
            n_subjects,
            shared_leadfield: shared,
            seed,
            ..self.base.clone()
        }
    }
}

/// One solver with its hyperparameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub name: SolverName,
    /// Every grid point, in the order lambda_rel-major, mu-minor.
    pub grid: Vec<SolverConfig>,
}

/// Default solver settings used by the command line: the transport solve
/// inside the MWE loop is warm-started, so a short inner cap is enough.
pub fn default_solver_config() -> SolverConfig {
    let mut config = SolverConfig::default();
    config.ot.max_iter = 100;
    config
}

impl SolverSpec {
    pub fn from_section(section: &Section, origin: &str) -> Result<Self, CliError> {
        let name: SolverName = section
            .argument
            .as_deref()
            .ok_or_else(|| CliError::parse(origin, section.line, "solver section needs a name: [solver NAME]"))?
            .parse()
            .map_err(|m: String| CliError::parse(origin, section.line, m))?;
        let mut base = default_solver_config();
        let mut lambdas = vec![base.lambda_rel];
        let mut mus = vec![base.mu];
        for e in &section.entries {
            match e.key.as_str() {
                "lambda_rel" => lambdas = e.parse_list(origin)?,
                "mu" => mus = e.parse_list(origin)?,
                other => apply_scalar(&mut base, other, e, origin)?,
            }
        }
        if lambdas.len() * mus.len() > 50 {
            return Err(CliError::parse(
                origin,
                section.line,
                format!("grid has {} points; at most 50 are allowed", lambdas.len() * mus.len()),
            ));
        }
        let mut grid = Vec::new();
        for &lambda_rel in &lambdas {
            for &mu in &mus {
                let config = SolverConfig {
                    lambda_rel,
                    mu,
                    ..base.clone()
                };
                validate_for(name, &config).map_err(|m| CliError::parse(origin, section.line, m))?;
                grid.push(config);
            }
        }
        Ok(Self { name, grid })
    }
}

/// Applies one scalar solver setting by key.
pub fn apply_scalar(config: &mut SolverConfig, key: &str, e: &Entry, origin: &str) -> Result<(), CliError> {
    match key {
        "epsilon_rel" => config.ot.epsilon_rel = e.parse(origin)?,
        "gamma" => config.ot.gamma = Some(e.parse(origin)?),
        "ot_max_iter" => config.ot.max_iter = e.parse(origin)?,
        "ot_tol" => config.ot.tol = e.parse(origin)?,
        "sigma0" => config.sigma0 = Some(e.parse(origin)?),
        "sigma_alpha" => config.sigma_alpha = e.parse(origin)?,
        "eta" => config.eta = e.parse(origin)?,
        "cd_tol" => config.cd.tol = e.parse(origin)?,
        "cd_max_iter" => config.cd.max_iter = e.parse(origin)?,
        "outer_tol" => config.outer_tol = e.parse(origin)?,
        "max_outer" => config.max_outer = e.parse(origin)?,
        "max_reweight" => config.max_reweight = e.parse(origin)?,
        "lambda_scale" => {
            config.lambda_scale = parse_lambda_scale(&e.value).map_err(|m| CliError::parse(origin, e.line, m))?
        }
        other => return Err(CliError::parse(origin, e.line, format!("unknown solver key '{other}'"))),
    }
    Ok(())
}

/// Checks the settings that matter for `name`.
pub fn validate_for(name: SolverName, config: &SolverConfig) -> Result<(), String> {
    config.validate().map_err(|e| e.to_string())?;
    match name {
        SolverName::Mne if !(config.lambda_rel > 0.0) => Err("mne needs lambda_rel > 0".into()),
        SolverName::Dirty if config.mu > 1.0 => Err(format!("dirty takes a relative mu in [0, 1], got {}", config.mu)),
        _ => Ok(()),
    }
}

/// A full experiment: simulation conditions, solvers with grids, trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimSection,
    pub solvers: Vec<SolverSpec>,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimSection::default(),
            solvers: Vec::new(),
            trials: 1,
            seed: 0,
            output_dir: PathBuf::from("results"),
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let kv = KeyValues::parse(text, origin)?;
        let mut config = Self::default();
        let mut seen_sim = false;
        let mut seen_experiment = false;
        for section in &kv.sections {
            match section.name.as_str() {
                "experiment" => {
                    if std::mem::replace(&mut seen_experiment, true) {
                        return Err(CliError::parse(origin, section.line, "duplicate [experiment] section"));
                    }
                    for e in &section.entries {
                        match e.key.as_str() {
                            "trials" => config.trials = e.parse(origin)?,
                            "seed" => config.seed = e.parse(origin)?,
                            "output_dir" => config.output_dir = PathBuf::from(&e.value),
                            "threads" => config.threads = e.parse(origin)?,
                            other => {
                                return Err(CliError::parse(
                                    origin,
                                    e.line,
                                    format!("unknown key '{other}' in [experiment]"),
                                ))
                            }
                        }
                    }
                    if config.trials == 0 || config.threads == 0 {
                        return Err(CliError::parse(origin, section.line, "trials and threads must be positive"));
                    }
                }
                "sim" => {
                    if std::mem::replace(&mut seen_sim, true) {
                        return Err(CliError::parse(origin, section.line, "duplicate [sim] section"));
                    }
                    config.sim = SimSection::from_section(section, origin)?;
                }
                "solver" => {
                    let spec = SolverSpec::from_section(section, origin)?;
                    if config.solvers.iter().any(|s| s.name == spec.name) {
                        return Err(CliError::parse(origin, section.line, format!("solver '{}' listed twice", spec.name)));
                    }
                    config.solvers.push(spec);
                }
                other => return Err(CliError::parse(origin, section.line, format!("unknown section [{other}]"))),
            }
        }
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Simulation conditions in output order: leadfield sharing, then
    /// subject count.
    pub fn conditions(&self) -> Vec<(bool, usize)> {
        let mut out = Vec::new();
        for &shared in &self.sim.shared_leadfield {
            for &s in &self.sim.n_subjects {
                out.push((shared, s));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = ExperimentConfig::parse("", "x").unwrap();
        assert_eq!(c.trials, 1);
        assert_eq!(c.sim.n_subjects, vec![2]);
        assert!(c.solvers.is_empty());
    }

    #[test]
    fn grid_is_cartesian() {
        let text = "[solver mwe05]\nlambda_rel = 0.1, 0.2, 0.3\nmu = 1e-4, 1e-3\nmax_reweight = 3\n";
        let c = ExperimentConfig::parse(text, "x").unwrap();
        let g = &c.solvers[0].grid;
        assert_eq!(g.len(), 6);
        assert_eq!((g[0].lambda_rel, g[0].mu), (0.1, 1e-4));
        assert_eq!((g[1].lambda_rel, g[1].mu), (0.1, 1e-3));
        assert_eq!((g[5].lambda_rel, g[5].mu), (0.3, 1e-3));
        assert!(g.iter().all(|p| p.max_reweight == 3));
    }

    #[test]
    fn sweep_axes_and_comments() {
        let text = "# header\n[sim]\nspace = icosphere 2 # small\nn_subjects = 2, 4\nshared_leadfield = false, true\n[experiment]\ntrials = 3\n";
        let c = ExperimentConfig::parse(text, "x").unwrap();
        assert_eq!(c.sim.space, SpaceKind::Icosphere { subdivisions: 2 });
        assert_eq!(c.conditions(), vec![(false, 2), (false, 4), (true, 2), (true, 4)]);
        assert_eq!(c.trials, 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("[sim]\nsnr = abc\n", 2),
            ("[sim]\nbogus = 1\n", 2),
            ("trials = 3\n", 1),
            ("[solver nope]\n", 1),
            ("[experiment]\ntrials = 2\ntrials = 3\n", 3),
            ("[solver lasso]\nlambda_rel = 2\n", 1),
            ("[sim\n", 1),
        ];
        for (text, line) in cases {
            match ExperimentConfig::parse(text, "cfg") {
                Err(CliError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for n in SolverName::ALL {
            assert_eq!(n.as_str().parse::<SolverName>().unwrap(), n);
        }
    }
}
