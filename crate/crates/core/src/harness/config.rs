use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionaries::{DictionaryKind, SensingKind};
use crate::error::{Error, Result};
use crate::etr::RegimeThresholds;
use crate::geometry::GammaMode;
use crate::solvers::{SolverConfig, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Phase,
    Mismatch,
    UncertaintyPrinciple,
    Perturbation,
    RegimeMap,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Phase => "phase",
            Self::Mismatch => "mismatch",
            Self::UncertaintyPrinciple => "uncertainty-principle",
            Self::Perturbation => "perturbation",
            Self::RegimeMap => "regime-map",
        }
    }

    /// CLI subcommand that runs this experiment.
    pub fn subcommand(self) -> &'static str {
        match self {
            Self::Phase => "phase",
            Self::Mismatch => "mismatch",
            Self::UncertaintyPrinciple | Self::Perturbation => "verify",
            Self::RegimeMap => "regime",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" => Ok(Self::Phase),
            "mismatch" => Ok(Self::Mismatch),
            "uncertainty-principle" => Ok(Self::UncertaintyPrinciple),
            "perturbation" => Ok(Self::Perturbation),
            "regime-map" => Ok(Self::RegimeMap),
            other => Err(Error::Parse(format!("unknown experiment `{other}`"))),
        }
    }
}

/// Solver settings shared by every battery in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Solvers to run, in battery order.
    pub run: Vec<SolverKind>,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub penalty: f64,
    /// Largest support the ℓ0 and OMP searches consider; defaults to min(m, N).
    pub max_sparsity: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            run: vec![SolverKind::Omp, SolverKind::BasisPursuit],
            max_iterations: 20_000,
            convergence_tol: 1e-6,
            penalty: 1.0,
            max_sparsity: None,
        }
    }
}

impl SolverSettings {
    pub fn configs(&self, epsilon: f64) -> Vec<SolverConfig> {
        let mut run = self.run.clone();
        run.sort();
        run.dedup();
        run.into_iter()
            .map(|kind| SolverConfig {
                solver: kind,
                epsilon,
                max_sparsity: self.max_sparsity.unwrap_or(usize::MAX),
                max_iterations: self.max_iterations,
                convergence_tol: self.convergence_tol,
                penalty: self.penalty,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSection {
    pub d: usize,
    pub k: usize,
    pub basis: DictionaryKind,
    pub sensing: SensingKind,
    pub m_sweep: Vec<usize>,
}

impl Default for PhaseSection {
    fn default() -> Self {
        Self {
            d: 64,
            k: 3,
            basis: DictionaryKind::Identity,
            sensing: SensingKind::Gaussian,
            m_sweep: vec![4, 6, 8, 12, 16, 20, 24, 28, 32, 36, 40, 44, 48],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchSection {
    pub d: usize,
    pub k: usize,
    /// Basis the signal is sparse in.
    pub truth_basis: DictionaryKind,
    /// Basis the mismatched solver works in.
    pub analysis_basis: DictionaryKind,
    pub sensing: SensingKind,
    pub m_sweep: Vec<usize>,
    pub tau: f64,
}

impl Default for MismatchSection {
    fn default() -> Self {
        Self {
            d: 32,
            k: 4,
            truth_basis: DictionaryKind::RandomOrthonormal,
            analysis_basis: DictionaryKind::Identity,
            sensing: SensingKind::Gaussian,
            m_sweep: vec![16],
            tau: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySection {
    /// Signal dimensions; each must be a power of two.
    pub d_sweep: Vec<usize>,
    pub tau: f64,
}

impl Default for UncertaintySection {
    fn default() -> Self {
        Self {
            d_sweep: vec![4, 16, 64],
            tau: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSection {
    pub n: usize,
    pub k: usize,
    pub m_sweep: Vec<usize>,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        Self {
            n: 10,
            k: 2,
            m_sweep: vec![4, 6, 8, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSection {
    pub d: usize,
    pub basis: DictionaryKind,
    pub m_sweep: Vec<usize>,
    pub k_sweep: Vec<usize>,
    pub gamma_mode: GammaMode,
    /// Random supports drawn for the sampled upper bound.
    pub gamma_trials: usize,
    /// Adds identity and duplicated-column control cells at m = d.
    pub controls: bool,
}

impl Default for RegimeSection {
    fn default() -> Self {
        Self {
            d: 16,
            basis: DictionaryKind::RandomOrthonormal,
            m_sweep: (1..=8).map(|i| 2 * i).collect(),
            k_sweep: vec![1, 2, 3],
            gamma_mode: GammaMode::Exact,
            gamma_trials: 500,
            controls: true,
        }
    }
}

/// One experiment, read from TOML. Unknown keys are rejected; the section
/// matching `experiment` is used and the others are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_trials")]
    pub trials_per_cell: usize,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default, skip_serializing)]
    pub workers: usize,
    /// Also render SVG figures.
    #[serde(default)]
    pub figures: bool,
    #[serde(default)]
    pub solvers: SolverSettings,
    #[serde(default)]
    pub thresholds: RegimeThresholds,
    #[serde(default)]
    pub phase: PhaseSection,
    #[serde(default)]
    pub mismatch: MismatchSection,
    #[serde(default)]
    pub uncertainty: UncertaintySection,
    #[serde(default)]
    pub perturbation: PerturbationSection,
    #[serde(default)]
    pub regime: RegimeSection,
    /// File the config was read from, for the reproduce line.
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

fn default_trials() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Defaults for `kind` with every section at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        let mut solvers = SolverSettings::default();
        if kind == ExperimentKind::RegimeMap {
            solvers.run = SolverKind::ALL.to_vec();
        }
        Self {
            experiment: kind,
            master_seed: 0,
            trials_per_cell: default_trials(),
            epsilon: 0.0,
            output_dir: default_output_dir(),
            workers: 0,
            figures: false,
            solvers,
            thresholds: RegimeThresholds::default(),
            phase: PhaseSection::default(),
            mismatch: MismatchSection::default(),
            uncertainty: UncertaintySection::default(),
            perturbation: PerturbationSection::default(),
            regime: RegimeSection::default(),
            source: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    /// The config as TOML, restricted to the section that is used.
    pub fn echo(&self) -> String {
        let mut table = match toml::Value::try_from(self).expect("config serializes") {
            toml::Value::Table(t) => t,
            _ => unreachable!("struct serializes to a table"),
        };
        let keep = match self.experiment {
            ExperimentKind::Phase => "phase",
            ExperimentKind::Mismatch => "mismatch",
            ExperimentKind::UncertaintyPrinciple => "uncertainty",
            ExperimentKind::Perturbation => "perturbation",
            ExperimentKind::RegimeMap => "regime",
        };
        for section in ["phase", "mismatch", "uncertainty", "perturbation", "regime"] {
            if section != keep {
                table.remove(section);
            }
        }
        toml::to_string(&table).expect("config serializes")
    }

    /// Command line that reproduces this run.
    pub fn reproduce_command(&self) -> String {
        let config = self
            .source
            .as_ref()
            .map(|p| format!(" --config {}", p.display()))
            .unwrap_or_default();
        let kind = match self.experiment {
            ExperimentKind::UncertaintyPrinciple | ExperimentKind::Perturbation if self.source.is_none() => {
                format!(" --suite {}", self.experiment)
            }
            _ => String::new(),
        };
        format!(
            "etr-lab {}{config}{kind} --seed {} --out {}",
            self.experiment.subcommand(),
            self.master_seed,
            self.output_dir.display()
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials_per_cell == 0 {
            return bad("trials_per_cell must be >= 1".into());
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.solvers.run.is_empty() {
            return bad("solvers.run must name at least one solver".into());
        }
        for c in self.solvers.configs(self.epsilon) {
            c.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.thresholds.validate().map_err(|e| Error::Config(e.to_string()))?;
        let sweep = |name: &str, v: &[usize], lo: usize, hi: usize| -> Result<()> {
            if v.is_empty() {
                return Err(Error::Config(format!("{name} must be nonempty")));
            }
            if let Some(x) = v.iter().find(|x| **x < lo || **x > hi) {
                return Err(Error::Config(format!("{name} entry {x} outside [{lo}, {hi}]")));
            }
            Ok(())
        };
        match self.experiment {
            ExperimentKind::Phase => {
                let p = &self.phase;
                sweep("phase.k", &[p.k], 1, p.d)?;
                sweep("phase.m_sweep", &p.m_sweep, 1, p.d)?;
                if p.sensing == SensingKind::Identity && p.m_sweep.iter().any(|m| *m != p.d) {
                    return bad("identity sensing needs every m equal to d".into());
                }
                check_sensing(p.sensing)?;
                check_basis(p.basis)?;
            }
            ExperimentKind::Mismatch => {
                let p = &self.mismatch;
                sweep("mismatch.k", &[p.k], 1, p.d)?;
                sweep("mismatch.m_sweep", &p.m_sweep, 1, p.d)?;
                if !(p.tau > 0.0 && p.tau <= 1e-3) {
                    return bad(format!("mismatch.tau must lie in (0, 1e-3], got {}", p.tau));
                }
                check_sensing(p.sensing)?;
                check_basis(p.truth_basis)?;
                check_basis(p.analysis_basis)?;
            }
            ExperimentKind::UncertaintyPrinciple => {
                let p = &self.uncertainty;
                sweep("uncertainty.d_sweep", &p.d_sweep, 2, 1 << 12)?;
                if let Some(d) = p.d_sweep.iter().find(|d| !d.is_power_of_two()) {
                    return bad(format!("uncertainty.d_sweep entry {d} is not a power of two"));
                }
                if !(p.tau > 0.0 && p.tau <= 1e-3) {
                    return bad(format!("uncertainty.tau must lie in (0, 1e-3], got {}", p.tau));
                }
            }
            ExperimentKind::Perturbation => {
                let p = &self.perturbation;
                sweep("perturbation.k", &[p.k], 1, p.n / 2)?;
                sweep("perturbation.m_sweep", &p.m_sweep, 1, usize::MAX)?;
            }
            ExperimentKind::RegimeMap => {
                let p = &self.regime;
                sweep("regime.m_sweep", &p.m_sweep, 1, p.d)?;
                sweep("regime.k_sweep", &p.k_sweep, 1, p.d / 2)?;
                check_basis(p.basis)?;
            }
        }
        Ok(())
    }
}

fn check_sensing(kind: SensingKind) -> Result<()> {
    if kind == SensingKind::Custom {
        return Err(Error::Config("custom sensing cannot be generated from a config".into()));
    }
    Ok(())
}

fn check_basis(kind: DictionaryKind) -> Result<()> {
    if kind == DictionaryKind::Custom {
        return Err(Error::Config("custom dictionaries cannot be generated from a config".into()));
    }
    Ok(())
}
