use std::fmt::Write;

use super::config::{ExperimentConfig, ExperimentKind};
use super::record::{sort_records, TrialRecord};
use super::report::{render_report, ReportBundle, ReportContext};
use super::{run_parallel, trial_seed};
use crate::dictionaries::{
    build_dictionary, build_sensing, mutual_coherence, Dictionary, DictionaryKind,
    EffectiveSensing, SensingKind,
};
use crate::error::{Error, Result};
use crate::etr::{Regime, UncertaintyReport};
use crate::geometry::{gamma_exact_search, perturbation_check};
use crate::numerics::{smallest_singular_pair, CostCounter, RandomStream, Vector, TOLERANCES};
use crate::solvers::run_solvers;
use crate::sparsity::{representation_complexity, MIN_PLANTED_MAGNITUDE};

pub const DENSE: &str = "dense";
pub const SPARSE_IDENTITY: &str = "sparse-identity";
pub const SPARSE_HADAMARD: &str = "sparse-hadamard";
pub const SUBGROUP: &str = "subgroup-indicator";
pub const PERTURBATION: &str = "perturbation";
pub const FUNCTIONAL: &str = "functional";

/// Runs the uncertainty-principle or perturbation suite named by `cfg`.
///
/// The report is always written. Any violated inequality turns the result
/// into `Error::SuiteFailure`, listing each offender with its seed.
pub fn run_verification_suite(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let records = match cfg.experiment {
        ExperimentKind::UncertaintyPrinciple => uncertainty_records(cfg)?,
        ExperimentKind::Perturbation => perturbation_records(cfg)?,
        other => {
            return Err(Error::Config(format!(
                "expected a verification suite config, got {other}"
            )))
        }
    };
    let violations = violations(&records);
    let ctx = suite_context(cfg, &records, &violations);
    let bundle = render_report(&records, &ctx, &cfg.output_dir, cfg.figures)?;
    if violations.is_empty() {
        Ok(bundle)
    } else {
        Err(Error::SuiteFailure(violations))
    }
}

/// One line per failed check, with the seed that reproduces it.
pub fn violations(records: &[TrialRecord]) -> Vec<String> {
    records
        .iter()
        .filter(|r| r.holds == Some(false))
        .map(|r| {
            format!(
                "{} {}{} trial {}: value {} vs bound {} [seed {}]",
                r.cell,
                r.variant,
                if r.solver.is_empty() { String::new() } else { format!("/{}", r.solver) },
                r.trial,
                r.value.map_or("-".into(), |v| v.to_string()),
                r.bound.map_or("-".into(), |v| v.to_string()),
                r.seed
            )
        })
        .collect()
}

fn random_sparse(d: usize, stream: &mut RandomStream) -> Vector {
    let k = 1 + stream.below(d);
    let mut v = Vector::zeros(d);
    for i in stream.sample_without_replacement(d, k) {
        v[i] = stream.sign() * (MIN_PLANTED_MAGNITUDE + stream.standard_normal().abs());
    }
    v
}

/// Indicator of a random coset a + V of a random subspace V of GF(2)^log2(d).
fn coset_indicator(d: usize, stream: &mut RandomStream) -> (Vector, usize) {
    let bits = d.trailing_zeros() as usize;
    let dim = stream.below(bits + 1);
    let mut basis: Vec<usize> = Vec::new();
    let mut span: Vec<usize> = vec![0];
    while basis.len() < dim {
        let v = stream.below(d);
        if span.contains(&v) {
            continue;
        }
        basis.push(v);
        span = span.iter().flat_map(|s| [*s, s ^ v]).collect();
    }
    let shift = stream.below(d);
    let mut x = Vector::zeros(d);
    for s in &span {
        x[s ^ shift] = 1.0;
    }
    (x, span.len())
}

pub(crate) fn uncertainty_records(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let p = &cfg.uncertainty;
    let pairs: Vec<(Dictionary, Dictionary, f64)> = p
        .d_sweep
        .iter()
        .map(|&d| {
            let id = build_dictionary(DictionaryKind::Identity, d, 0)?;
            let h = build_dictionary(DictionaryKind::Hadamard, d, 0)?;
            let mu = mutual_coherence(&id, &h)?;
            Ok((id, h, 1.0 / (mu * mu)))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..p.d_sweep.len())
        .flat_map(|c| (0..cfg.trials_per_cell).map(move |t| (c, t)))
        .collect();
    let rows = run_parallel(cfg.workers, &jobs, |&(cell, trial)| {
        let d = p.d_sweep[cell];
        let (id, h, bound) = &pairs[cell];
        let seed = trial_seed(cfg.master_seed, cell, trial);
        let mut stream = RandomStream::new(seed, 0);
        let (variant, x, subgroup) = match trial % 4 {
            0 => {
                let mut g = crate::numerics::gaussian(&mut stream, d);
                while g.norm2() == 0.0 {
                    g = crate::numerics::gaussian(&mut stream, d);
                }
                (DENSE, g, None)
            }
            1 => (SPARSE_IDENTITY, random_sparse(d, &mut stream), None),
            2 => (SPARSE_HADAMARD, h.synthesize(&random_sparse(d, &mut stream)), None),
            _ => {
                let (x, size) = coset_indicator(d, &mut stream);
                (SUBGROUP, x, Some(size))
            }
        };
        let k1 = representation_complexity(&x, id, p.tau)?.k_psi;
        let k2 = representation_complexity(&x, h, p.tau)?.k_psi;
        let product = (k1 * k2) as f64;
        let holds = product >= bound * (1.0 - TOLERANCES.perturbation_relative);
        Ok(TrialRecord {
            experiment: cfg.experiment.to_string(),
            cell_index: cell,
            cell: format!("d={d}"),
            variant: variant.to_string(),
            m: d,
            k: k1,
            n: d,
            trial,
            seed,
            k_eff: Some(k2),
            value: Some(product),
            bound: Some(*bound),
            holds: Some(holds),
            // extremal signals must meet the bound with equality
            success: subgroup.map(|_| product == d as f64),
            note: subgroup.map_or(String::new(), |s| format!("coset of size {s}")),
            ..TrialRecord::default()
        })
    })?;
    let mut records = rows;
    sort_records(&mut records);
    Ok(records)
}

fn random_k_sparse(n: usize, k: usize, stream: &mut RandomStream) -> Vector {
    let mut v = Vector::zeros(n);
    for i in stream.sample_without_replacement(n, k) {
        v[i] = stream.sign() * (MIN_PLANTED_MAGNITUDE + stream.standard_normal().abs());
    }
    v
}

pub(crate) fn perturbation_records(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let p = &cfg.perturbation;
    let solvers = cfg.solvers.configs(0.0);
    let jobs: Vec<(usize, usize)> = (0..p.m_sweep.len())
        .flat_map(|c| (0..cfg.trials_per_cell).map(move |t| (c, t)))
        .collect();
    let rows = run_parallel(cfg.workers, &jobs, |&(cell, trial)| {
        let m = p.m_sweep[cell];
        let seed = trial_seed(cfg.master_seed, cell, trial);
        let a = EffectiveSensing::from_matrix(
            build_sensing(SensingKind::Gaussian, m, p.n, seed)?.phi().clone(),
        );
        let search = gamma_exact_search(a.a(), 2 * p.k)?;
        let gamma = search.gamma;
        let mut stream = RandomStream::new(seed, 2);
        let z1 = random_k_sparse(p.n, p.k, &mut stream);
        let z2 = match trial % 3 {
            0 => random_k_sparse(p.n, p.k, &mut stream),
            1 => {
                // same support, new values
                let mut z = Vector::zeros(p.n);
                for i in z1.support_above(0.0) {
                    z[i] = stream.standard_normal();
                }
                z
            }
            _ => {
                // small step along the least-amplified 2k-sparse direction
                let sub = a.a().select_columns(&search.support);
                let (_, v) = smallest_singular_pair(&sub, &mut CostCounter::new());
                let mut z = z1.clone();
                for (&j, vj) in search.support.iter().zip(v.iter()) {
                    z[j] += 1e-3 * vj;
                }
                z
            }
        };
        let base = TrialRecord {
            experiment: cfg.experiment.to_string(),
            cell_index: cell,
            cell: format!("m={m}"),
            m,
            k: p.k,
            n: p.n,
            trial,
            seed,
            gamma: Some(gamma),
            ..TrialRecord::default()
        };
        let mut out = Vec::new();
        if gamma <= TOLERANCES.gamma_zero {
            out.push(TrialRecord {
                variant: PERTURBATION.into(),
                note: "gamma is zero: inequality not applicable".into(),
                ..base.clone()
            });
        } else {
            let check = perturbation_check(&a, &z1, &z2, gamma)?;
            out.push(TrialRecord {
                variant: PERTURBATION.into(),
                value: Some(check.lhs),
                bound: Some(check.rhs),
                holds: Some(check.holds),
                ..base.clone()
            });
        }
        let y = a.a().mul_vec(&z1);
        for entry in run_solvers(&a, &y, None, &solvers) {
            let mut r = TrialRecord {
                variant: FUNCTIONAL.into(),
                solver: entry.solver.as_str().into(),
                ..base.clone()
            };
            match entry.outcome {
                Ok(res) => {
                    let cost = res.cost.total();
                    let report = UncertaintyReport::new(p.k, p.k, gamma, cost, Regime::Indeterminate)?;
                    r.total_ops = Some(cost);
                    r.mult = Some(res.cost.multiplies);
                    r.add = Some(res.cost.additions);
                    r.cmp = Some(res.cost.comparisons);
                    if report.is_degenerate() {
                        r.note = "gamma is zero: functional is infinite".into();
                    } else {
                        r.value = Some(report.u_value);
                        r.bound = Some(report.lower_bound);
                        r.holds = Some(report.satisfies_bounds());
                    }
                }
                Err(e) => r.note = e.to_string(),
            }
            out.push(r);
        }
        Ok(out)
    })?;
    let mut records: Vec<TrialRecord> = rows.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}

fn suite_context(cfg: &ExperimentConfig, records: &[TrialRecord], violations: &[String]) -> ReportContext {
    let mut table = String::from(
        "| cell | check | instances | violations | min relative slack | median relative slack |\n|---|---|---|---|---|---|\n",
    );
    let mut keys: Vec<(usize, String, String)> = Vec::new();
    for r in records {
        let key = (r.cell_index, r.cell.clone(), r.variant.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    if keys.is_empty() {
        table.push_str("| no data | | | | | |\n");
    }
    for (cell, label, variant) in &keys {
        let rows: Vec<&TrialRecord> = records
            .iter()
            .filter(|r| r.cell_index == *cell && &r.variant == variant)
            .collect();
        let checked: Vec<&&TrialRecord> = rows.iter().filter(|r| r.holds.is_some()).collect();
        let bad = checked.iter().filter(|r| r.holds == Some(false)).count();
        // slack as a fraction of the larger side; ≥ 0 means the check holds
        let mut slacks: Vec<f64> = checked
            .iter()
            .filter_map(|r| match (r.value, r.bound) {
                (Some(v), Some(b)) => {
                    let (big, small) = if *variant == PERTURBATION { (b, v) } else { (v, b) };
                    Some((big - small) / big.abs().max(small.abs()).max(f64::MIN_POSITIVE))
                }
                _ => None,
            })
            .collect();
        slacks.sort_by(|a, b| a.total_cmp(b));
        let show = |v: Option<&f64>| v.map_or("no data".to_string(), |v| format!("{v:.3e}"));
        let _ = writeln!(
            table,
            "| {label} | {variant} | {} | {bad} | {} | {} |",
            checked.len(),
            show(slacks.first()),
            show(slacks.get(slacks.len() / 2)),
        );
    }
    let mut sections = Vec::new();
    let (title, setup) = match cfg.experiment {
        ExperimentKind::UncertaintyPrinciple => {
            let extremal = records.iter().filter(|r| r.variant == SUBGROUP).count();
            let equal = records
                .iter()
                .filter(|r| r.variant == SUBGROUP && r.success == Some(true))
                .count();
            (
                "Discrete uncertainty principle (identity / Hadamard)".to_string(),
                format!(
                    "Checks K_I(x) · K_H(x) ≥ 1/μ² over dense, identity-sparse and Hadamard-sparse \
                     signals and indicators of cosets of subgroups of GF(2)^log2(d) (τ = {}). \
                     Coset indicators attaining equality: {equal} of {extremal}.",
                    cfg.uncertainty.tau
                ),
            )
        }
        _ => (
            format!(
                "Perturbation inequality (N = {}, k = {})",
                cfg.perturbation.n, cfg.perturbation.k
            ),
            format!(
                "Checks ‖z − z̃‖₂ ≤ ‖A(z − z̃)‖₂ / γ_2k with γ_2k from exhaustive search on \
                 Gaussian A, and that the functional K_Ψ/γ_2k · ln(1 + C) is positive and at least \
                 K_Ψ/γ_2k · ln 2 for the cost C of each solver ({} pairs per cell).",
                cfg.trials_per_cell
            ),
        ),
    };
    sections.push(("Setup".to_string(), setup));
    sections.push(("Checks".to_string(), table));
    let mut v = format!("{} violation(s).\n", violations.len());
    for line in violations.iter().take(50) {
        let _ = writeln!(v, "- {line}");
    }
    sections.push(("Violations".to_string(), v));
    ReportContext {
        title,
        reproduce: cfg.reproduce_command(),
        config_echo: cfg.echo(),
        sections,
        figures: Vec::new(),
    }
}
