//! Inference procedures with arithmetic-operation accounting: exhaustive ℓ0
//! search, orthogonal matching pursuit and ℓ1 basis pursuit (ADMM).

mod bp;
mod l0;
mod omp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crate::numerics::CostCounter;
pub use bp::solve_bp;
pub use l0::{solve_l0, L0_ENUMERATION_LIMIT};
pub use omp::solve_omp;

use crate::dictionaries::EffectiveSensing;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::sparsity::PlantedInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "l0")]
    L0Exhaustive,
    #[serde(rename = "omp")]
    Omp,
    #[serde(rename = "bp")]
    BasisPursuit,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [Self::L0Exhaustive, Self::Omp, Self::BasisPursuit];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::L0Exhaustive => "l0",
            Self::Omp => "omp",
            Self::BasisPursuit => "bp",
        }
    }

    /// True for the solvers with polynomial running time.
    pub fn is_polynomial(self) -> bool {
        !matches!(self, Self::L0Exhaustive)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l0" | "l0-exhaustive" => Ok(Self::L0Exhaustive),
            "omp" => Ok(Self::Omp),
            "bp" | "basis-pursuit" => Ok(Self::BasisPursuit),
            other => Err(Error::Parse(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub solver: SolverKind,
    /// Residual tolerance ‖Aα − y‖₂ ≤ ε.
    pub epsilon: f64,
    /// Largest support considered; further capped by min(m, N).
    pub max_sparsity: usize,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    /// Initial ADMM penalty ρ (basis pursuit only).
    pub penalty: f64,
}

impl SolverConfig {
    pub fn new(solver: SolverKind, epsilon: f64) -> Self {
        Self {
            solver,
            epsilon,
            max_sparsity: usize::MAX,
            max_iterations: 20_000,
            convergence_tol: 1e-6,
            penalty: 1.0,
        }
    }

    pub fn with_max_sparsity(mut self, k: usize) -> Self {
        self.max_sparsity = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tol > 0.0 && self.convergence_tol <= 1e-2) {
            return Err(Error::InvalidTolerance(format!(
                "convergence_tol must lie in (0, 1e-2], got {:e}",
                self.convergence_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidValue("max_iterations must be >= 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidValue(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidValue(format!("penalty must be > 0, got {}", self.penalty)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub solver: SolverKind,
    /// Coefficients in the coordinates of the matrix that was solved.
    pub alpha_hat: Vector,
    pub x_hat: Vector,
    pub support: Vec<usize>,
    pub residual_norm: f64,
    pub cost: CostCounter,
    pub converged: bool,
    pub iterations: usize,
    /// ‖x̂ − x‖₂ / ε when ground truth and ε > 0 are known.
    pub stability_ratio: Option<f64>,
}

impl RecoveryResult {
    pub fn l1_norm(&self) -> f64 {
        self.alpha_hat.norm1()
    }
}

pub(crate) fn check_rhs(a: &EffectiveSensing, y: &[f64]) -> Result<()> {
    if y.len() != a.m() {
        return Err(Error::DimensionMismatch(format!(
            "observation of length {} for a matrix with {} rows",
            y.len(),
            a.m()
        )));
    }
    Ok(())
}

/// Residual y − Aα, counted.
pub(crate) fn residual(a: &Matrix, alpha: &[f64], y: &[f64], ops: &mut CostCounter) -> Vector {
    let ax = a.mul_vec(alpha);
    ops.dot(a.rows() * a.cols());
    ops.add(y.len());
    y.iter().zip(ax.iter()).map(|(yi, v)| yi - v).collect()
}

pub(crate) fn counted_norm(v: &[f64], ops: &mut CostCounter) -> f64 {
    ops.dot(v.len());
    ops.mul(1);
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn finish(
    solver: SolverKind,
    a: &EffectiveSensing,
    y: &[f64],
    alpha_hat: Vector,
    support: Vec<usize>,
    mut cost: CostCounter,
    converged: bool,
    iterations: usize,
) -> RecoveryResult {
    let r = residual(a.a(), &alpha_hat, y, &mut cost);
    let residual_norm = counted_norm(&r, &mut cost);
    RecoveryResult {
        solver,
        x_hat: a.signal(&alpha_hat),
        alpha_hat,
        support,
        residual_norm,
        cost,
        converged,
        iterations,
        stability_ratio: None,
    }
}

pub fn solve(a: &EffectiveSensing, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    match cfg.solver {
        SolverKind::L0Exhaustive => solve_l0(a, y, cfg),
        SolverKind::Omp => solve_omp(a, y, cfg),
        SolverKind::BasisPursuit => solve_bp(a, y, cfg),
    }
}

/// One solver's outcome inside a battery. Failures are kept, not propagated.
#[derive(Debug)]
pub struct BatteryEntry {
    pub solver: SolverKind,
    pub outcome: Result<RecoveryResult>,
}

/// Per-solver configurations for [`run_battery`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryConfig {
    pub l0: SolverConfig,
    pub omp: SolverConfig,
    pub bp: SolverConfig,
}

impl BatteryConfig {
    /// All three solvers with a shared ε and default settings.
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            l0: SolverConfig::new(SolverKind::L0Exhaustive, epsilon),
            omp: SolverConfig::new(SolverKind::Omp, epsilon),
            bp: SolverConfig::new(SolverKind::BasisPursuit, epsilon),
        }
    }

    pub fn get(&self, kind: SolverKind) -> SolverConfig {
        match kind {
            SolverKind::L0Exhaustive => self.l0,
            SolverKind::Omp => self.omp,
            SolverKind::BasisPursuit => self.bp,
        }
    }
}

/// Runs ℓ0, OMP and BP (in that order) on the same data.
pub fn run_battery(
    a: &EffectiveSensing,
    y: &[f64],
    truth: Option<&PlantedInstance>,
    cfg: &BatteryConfig,
) -> Vec<BatteryEntry> {
    let configs: Vec<SolverConfig> = SolverKind::ALL.iter().map(|k| cfg.get(*k)).collect();
    run_solvers(a, y, truth, &configs)
}

/// Runs the given solvers in order. OMP on a matrix without unit columns is
/// run on a normalized copy and its coefficients mapped back.
pub fn run_solvers(
    a: &EffectiveSensing,
    y: &[f64],
    truth: Option<&PlantedInstance>,
    configs: &[SolverConfig],
) -> Vec<BatteryEntry> {
    configs
        .iter()
        .map(|cfg| {
            let outcome = solve_in_battery(a, y, cfg).map(|mut r| {
                if let Some(t) = truth {
                    if cfg.epsilon > 0.0 && r.x_hat.len() == t.x().len() {
                        r.stability_ratio = Some(r.x_hat.sub(t.x()).norm2() / cfg.epsilon);
                    }
                }
                r
            });
            BatteryEntry {
                solver: cfg.solver,
                outcome,
            }
        })
        .collect()
}

fn solve_in_battery(a: &EffectiveSensing, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    if cfg.solver != SolverKind::Omp || a.column_normalized() {
        return solve(a, y, cfg);
    }
    let normalized = a.normalized()?;
    let mut r = solve_omp(&normalized, y, cfg)?;
    let (m, n) = (a.m(), a.n());
    // normalization pass: column norms and the rescale
    r.cost.dot(m * n);
    r.cost.mul(n + m * n);
    let beta = a.from_basis_coefficients(&normalized.to_basis_coefficients(&r.alpha_hat));
    Ok(finish(
        SolverKind::Omp,
        a,
        y,
        beta,
        r.support,
        r.cost,
        r.converged,
        r.iterations,
    ))
}

#[cfg(test)]
mod tests;
