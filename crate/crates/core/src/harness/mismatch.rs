use std::collections::BTreeMap;
use std::fmt::Write;

use super::config::{ExperimentConfig, ExperimentKind};
use super::record::{sort_records, TrialRecord};
use super::report::{render_report, ReportBundle, ReportContext};
use super::stats::{crossing, isotonic_increasing, summarize};
use super::svg::{line_chart, Series};
use super::{battery_records, run_parallel, trial_seed};
use crate::dictionaries::{build_dictionary, build_sensing, compose};
use crate::error::{Error, Result};
use crate::etr::inflation_ratio;
use crate::numerics::RandomStream;
use crate::solvers::run_solvers;
use crate::sparsity::{effective_sparsity, observe, plant};

pub const MATCHED: &str = "matched";
pub const MISMATCHED: &str = "mismatched";

/// Recovery in the true basis against recovery in a fixed analysis basis.
pub fn run_mismatch(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    if cfg.experiment != ExperimentKind::Mismatch {
        return Err(Error::Config(format!("expected a mismatch config, got {}", cfg.experiment)));
    }
    cfg.validate()?;
    let records = mismatch_records(cfg)?;
    let ctx = mismatch_context(cfg, &records)?;
    render_report(&records, &ctx, &cfg.output_dir, cfg.figures)
}

pub(crate) fn mismatch_records(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let p = &cfg.mismatch;
    let analysis = build_dictionary(p.analysis_basis, p.d, cfg.master_seed)?;
    let solvers = cfg.solvers.configs(cfg.epsilon);
    let jobs: Vec<(usize, usize)> = (0..p.m_sweep.len())
        .flat_map(|c| (0..cfg.trials_per_cell).map(move |t| (c, t)))
        .collect();
    let rows = run_parallel(cfg.workers, &jobs, |&(cell, trial)| {
        let m = p.m_sweep[cell];
        let seed = trial_seed(cfg.master_seed, cell, trial);
        let truth = build_dictionary(p.truth_basis, p.d, seed)?;
        let inst = plant(&truth, p.k, &mut RandomStream::keyed(seed, &[1]))?;
        let k_eff = effective_sparsity(inst.x(), &analysis, p.tau)?;
        let phi = build_sensing(p.sensing, m, p.d, seed)?;
        let obs = observe(inst.x(), &phi, cfg.epsilon, &mut RandomStream::keyed(seed, &[2]))?;
        let base = TrialRecord {
            experiment: cfg.experiment.to_string(),
            cell_index: cell,
            cell: format!("m={m}"),
            m,
            k: p.k,
            n: p.d,
            trial,
            seed,
            k_eff: Some(k_eff),
            ..TrialRecord::default()
        };

        let a = compose(&phi, &truth, false)?;
        let entries = run_solvers(&a, &obs.y, Some(&inst), &solvers);
        let matched = TrialRecord {
            variant: MATCHED.into(),
            ..base.clone()
        };
        let mut out = battery_records(&matched, &a, &entries, inst.alpha_star(), &inst.support());

        let a_mis = compose(&phi, &analysis, false)?;
        let beta = analysis.analyze(inst.x());
        let beta_support = beta.support_above(p.tau * inst.x().norm2());
        let entries = run_solvers(&a_mis, &obs.y, Some(&inst), &solvers);
        let mismatched = TrialRecord {
            variant: MISMATCHED.into(),
            ..base
        };
        out.extend(battery_records(&mismatched, &a_mis, &entries, &beta, &beta_support));
        Ok(out)
    })?;
    let mut records: Vec<TrialRecord> = rows.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}

/// Histogram of k_eff, one entry per (cell, trial).
pub fn k_eff_histogram(records: &[TrialRecord]) -> BTreeMap<usize, usize> {
    let mut seen = std::collections::BTreeSet::new();
    let mut hist = BTreeMap::new();
    for r in records {
        if let Some(k) = r.k_eff {
            if seen.insert((r.cell_index, r.trial)) {
                *hist.entry(k).or_insert(0) += 1;
            }
        }
    }
    hist
}

/// Median of the histogram (lower median for even counts).
fn median(hist: &BTreeMap<usize, usize>) -> Option<usize> {
    let total: usize = hist.values().sum();
    if total == 0 {
        return None;
    }
    let target = total.div_ceil(2);
    let mut acc = 0;
    for (k, c) in hist {
        acc += c;
        if acc >= target {
            return Some(*k);
        }
    }
    None
}

fn mismatch_context(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Result<ReportContext> {
    let p = &cfg.mismatch;
    let hist = k_eff_histogram(records);
    let total: usize = hist.values().sum();
    let full = hist.get(&p.d).copied().unwrap_or(0);

    let mut sections = Vec::new();
    let mut h = String::from("| k_eff | trials |\n|---|---|\n");
    if hist.is_empty() {
        h.push_str("| no data | |\n");
    }
    for (k, c) in &hist {
        let _ = writeln!(h, "| {k} | {c} |");
    }
    let _ = write!(
        h,
        "\nk_eff = d = {} in {full} of {total} trials ({:.2}%).\n",
        p.d,
        if total > 0 { 100.0 * full as f64 / total as f64 } else { 0.0 }
    );
    let predicted = match median(&hist) {
        Some(k_eff) => {
            let ratio = inflation_ratio(p.k, k_eff, p.d)?;
            let _ = write!(
                h,
                "\nPredicted inflation_ratio(k = {}, k_eff = {k_eff}, d = {}) = {ratio:.7}.\n",
                p.k, p.d
            );
            Some(ratio)
        }
        None => None,
    };
    sections.push((
        "Setup".to_string(),
        format!(
            "Signals are {}-sparse in a {} basis (d = {}); the mismatched solver works in the {} \
             basis. Effective sparsity uses τ = {}. Sensing is {} with ε = {}.",
            p.k, p.truth_basis, p.d, p.analysis_basis, p.tau, p.sensing, cfg.epsilon
        ),
    ));
    sections.push(("Effective sparsity".to_string(), h));

    let groups = summarize(records);
    let mut solvers: Vec<String> = Vec::new();
    for g in &groups {
        if !solvers.contains(&g.solver) {
            solvers.push(g.solver.clone());
        }
    }
    let mut table = String::from("| m | solver | matched | mismatched |\n|---|---|---|---|\n");
    let mut series = Vec::new();
    let mut gaps = String::new();
    for s in &solvers {
        let mut curves: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
        for variant in [MATCHED, MISMATCHED] {
            let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
            for (cell, m) in p.m_sweep.iter().enumerate() {
                if let Some(g) = groups
                    .iter()
                    .find(|g| g.cell_index == cell && &g.solver == s && g.variant == variant)
                {
                    xs.push(*m as f64);
                    ys.push(g.rate());
                    ws.push(g.rows as f64);
                }
            }
            series.push(Series {
                name: format!("{s} {variant}"),
                points: xs.iter().copied().zip(ys.iter().copied()).collect(),
                dashed: variant == MISMATCHED,
            });
            curves.push((xs, ys, ws));
        }
        for (cell, m) in p.m_sweep.iter().enumerate() {
            let rate = |variant: &str| {
                groups
                    .iter()
                    .find(|g| g.cell_index == cell && &g.solver == s && g.variant == variant)
                    .map_or("no data".to_string(), |g| format!("{:.3}", g.rate()))
            };
            let _ = writeln!(table, "| {m} | {s} | {} | {} |", rate(MATCHED), rate(MISMATCHED));
        }
        let cross: Vec<Option<f64>> = curves
            .iter()
            .map(|(xs, ys, ws)| crossing(xs, &isotonic_increasing(ys, ws), 0.5))
            .collect();
        match (cross[0], cross[1]) {
            (Some(a), Some(b)) => {
                let _ = writeln!(
                    gaps,
                    "- {s}: 50% crossing at m ≈ {a:.2} matched, {b:.2} mismatched; observed ratio {:.3}",
                    b / a
                );
            }
            (a, b) => {
                let show = |v: Option<f64>| v.map_or("not reached".to_string(), |x| format!("{x:.2}"));
                let _ = writeln!(
                    gaps,
                    "- {s}: 50% crossing matched {}, mismatched {}",
                    show(a),
                    show(b)
                );
            }
        }
    }
    if let Some(r) = predicted {
        let _ = writeln!(gaps, "- predicted sample inflation: {r:.4}");
    }
    sections.push(("Matched against mismatched".to_string(), format!("{table}\n{gaps}")));

    let figure = line_chart(
        &format!("Matched vs mismatched recovery, d = {}, k = {}", p.d, p.k),
        "measurements m",
        "success rate",
        &series,
        &[],
    );
    Ok(ReportContext {
        title: format!("Basis mismatch (d = {}, k = {})", p.d, p.k),
        reproduce: cfg.reproduce_command(),
        config_echo: cfg.echo(),
        sections,
        figures: vec![("mismatch".into(), figure)],
    })
}
