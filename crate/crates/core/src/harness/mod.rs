//! Experiment drivers: configs, per-trial records and reports.
//!
//! Every trial draws from `RandomStream::keyed(master_seed, [cell, trial])`,
//! so records do not depend on the number of workers or on scheduling.
//! Each run writes `records.csv` and `summary.md` (plus SVG figures when
//! enabled) into the configured output directory.

mod config;
mod mismatch;
mod phase;
mod record;
mod regime;
mod report;
mod stats;
mod svg;
mod verify;

pub use config::{
    ExperimentConfig, ExperimentKind, MismatchSection, PerturbationSection, PhaseSection,
    RegimeSection, SolverSettings, UncertaintySection,
};
pub use mismatch::{k_eff_histogram, run_mismatch};
pub use phase::run_phase_transition;
pub use record::{read_records, records_from_csv, records_to_csv, sort_records, TrialRecord};
pub use regime::{regime_records, run_regime_map, CellVerdict};
pub use report::{
    render_report, summary_csv, summary_markdown, ReportBundle, ReportContext, RECORDS_FILE,
    SUMMARY_CSV_HEADER, SUMMARY_FILE,
};
pub use stats::{crossing, isotonic_increasing, summarize, GroupSummary};
pub use svg::{heat_map, line_chart, Series};
pub use verify::{run_verification_suite, violations};

use rayon::prelude::*;

use crate::dictionaries::EffectiveSensing;
use crate::error::{Error, Result};
use crate::numerics::{RandomStream, TOLERANCES};
use crate::solvers::{BatteryEntry, RecoveryResult};

/// Relative coefficient error below which a recovery counts as exact.
pub const SUCCESS_RELATIVE_ERROR: f64 = 1e-4;

/// Runs whichever experiment `cfg` names.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    match cfg.experiment {
        ExperimentKind::Phase => run_phase_transition(cfg),
        ExperimentKind::Mismatch => run_mismatch(cfg),
        ExperimentKind::UncertaintyPrinciple | ExperimentKind::Perturbation => {
            run_verification_suite(cfg)
        }
        ExperimentKind::RegimeMap => run_regime_map(cfg),
    }
}

/// Seed of trial `trial` in cell `cell`.
pub fn trial_seed(master_seed: u64, cell: usize, trial: usize) -> u64 {
    RandomStream::keyed(master_seed, &[cell as u64, trial as u64]).next_u64()
}

/// Evaluates `f` on every job on a pool of `workers` threads (0 = all cores),
/// returning results in job order.
pub(crate) fn run_parallel<J, T, F>(workers: usize, jobs: &[J], f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

/// Support match and relative error ‖α̂ − α⋆‖₂ / ‖α⋆‖₂ in the basis coordinates.
///
/// The recovered support is read off α̂ with the relative zero threshold, so
/// atoms a solver kept with a vanishing coefficient do not count against it.
pub fn recovery_outcome(
    a: &EffectiveSensing,
    result: &RecoveryResult,
    alpha_star: &[f64],
    truth_support: &[usize],
) -> (bool, f64) {
    let alpha = a.to_basis_coefficients(&result.alpha_hat);
    let err = alpha
        .iter()
        .zip(alpha_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = alpha_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel = if norm > 0.0 { err / norm } else { err };
    let support = alpha.support_above(TOLERANCES.zero_threshold * alpha.norm2());
    (support == truth_support && rel <= SUCCESS_RELATIVE_ERROR, rel)
}

/// One record per battery entry, filled in from `base`.
pub(crate) fn battery_records(
    base: &TrialRecord,
    a: &EffectiveSensing,
    entries: &[BatteryEntry],
    alpha_star: &[f64],
    truth_support: &[usize],
) -> Vec<TrialRecord> {
    entries
        .iter()
        .map(|e| {
            let mut r = base.clone();
            r.solver = e.solver.as_str().to_string();
            match &e.outcome {
                Ok(res) => {
                    let (ok, rel) = recovery_outcome(a, res, alpha_star, truth_support);
                    r.success = Some(ok);
                    r.rel_error = Some(rel);
                    r.residual = Some(res.residual_norm);
                    r.converged = Some(res.converged);
                    r.mult = Some(res.cost.multiplies);
                    r.add = Some(res.cost.additions);
                    r.cmp = Some(res.cost.comparisons);
                    r.total_ops = Some(res.cost.total());
                    r.stability_ratio = res.stability_ratio;
                }
                Err(err) => {
                    r.success = Some(false);
                    r.note = err.to_string();
                }
            }
            r
        })
        .collect()
}
