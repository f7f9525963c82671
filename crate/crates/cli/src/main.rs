use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use etr_lab::dictionaries::{
    build_dictionary, build_sensing, compose, DictionaryKind, EffectiveSensing, SensingKind,
};
use etr_lab::etr::{Regime, UncertaintyReport};
use etr_lab::geometry::{gamma_exact, geometry_report, GammaMode, GeometryReport};
use etr_lab::harness::{
    run_mismatch, run_phase_transition, run_regime_map, run_verification_suite, ExperimentConfig,
    ExperimentKind, ReportBundle,
};
use etr_lab::numerics::{load_matrix, load_vector, save_matrix, RandomStream};
use etr_lab::solvers::{run_solvers, BatteryEntry, SolverConfig, SolverKind};
use etr_lab::sparsity::{observe, PlantedInstance};
use etr_lab::Error;

#[derive(Parser, Debug)]
#[command(name = "etr-lab", version, about = "Sparse recovery experiments: geometry, solvers and regime maps")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for experiments, output file for geometry/recover/functional.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ETRLAB_WORKERS")]
    workers: Option<usize>,
    /// Format printed to stdout; `svg` also writes figures.
    #[arg(long, global = true, value_enum, default_value_t = Format::Md)]
    format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Md,
    Svg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Restricted distinguishability of A = ΦΨ (or of a matrix file).
    Geometry(GeometryArgs),
    /// Run one solver, or all of them, on a system.
    Recover(RecoverArgs),
    /// Phase-transition experiment.
    Phase,
    /// Basis-mismatch experiment.
    Mismatch,
    /// Uncertainty-principle or perturbation verification suite.
    Verify(VerifyArgs),
    /// Regime map over (m, k).
    Regime,
    /// Evaluate the uncertainty functional.
    Functional(FunctionalArgs),
}

#[derive(Args, Debug)]
struct GeometryArgs {
    /// Matrix file; replaces --dict/--sensing.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value = "identity")]
    dict: DictionaryKind,
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value = "gaussian")]
    sensing: SensingKind,
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Scale columns of A to unit norm.
    #[arg(long)]
    normalize: bool,
    /// Support size r.
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value = "exact")]
    mode: GammaMode,
    /// Random supports for the sampled upper bound.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Also write A in the numerics matrix format.
    #[arg(long)]
    save_matrix: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RecoverArgs {
    /// l0, omp, bp or all.
    #[arg(long, default_value = "all")]
    solver: String,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// A (without --instance) or Φ (with --instance).
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Observation vector; required without --instance.
    #[arg(long)]
    y: Option<PathBuf>,
    /// Planted instance bundle (basis matrix block, then α⋆ block).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Sensing used with --instance when no --matrix is given.
    #[arg(long, default_value = "gaussian")]
    sensing: SensingKind,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    max_sparsity: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suite to run when no --config is given.
    #[arg(long, default_value = "uncertainty-principle")]
    suite: ExperimentKind,
}

#[derive(Args, Debug)]
struct FunctionalArgs {
    #[arg(long)]
    k: usize,
    /// K_Ψ; defaults to k.
    #[arg(long)]
    k_psi: Option<usize>,
    /// γ_2k; computed exactly from --matrix when omitted.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Operation count C.
    #[arg(long)]
    cost: u64,
    #[arg(long)]
    regime: Option<Regime>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(Error::SuiteFailure(lines)) = err.downcast_ref::<Error>() {
                eprintln!("verification failed: {} violation(s)", lines.len());
                for line in lines.iter().take(20) {
                    eprintln!("  {line}");
                }
                return ExitCode::from(2);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Geometry(args) => geometry(&g, args),
        Command::Recover(args) => recover(&g, args),
        Command::Phase => experiment(&g, &[ExperimentKind::Phase], run_phase_transition),
        Command::Mismatch => experiment(&g, &[ExperimentKind::Mismatch], run_mismatch),
        Command::Regime => experiment(&g, &[ExperimentKind::RegimeMap], run_regime_map),
        Command::Verify(args) => {
            let kinds = [ExperimentKind::UncertaintyPrinciple, ExperimentKind::Perturbation];
            if g.config.is_none() && !kinds.contains(&args.suite) {
                bail!("--suite must be uncertainty-principle or perturbation");
            }
            let default = if g.config.is_none() { args.suite } else { kinds[0] };
            experiment_with_default(&g, &kinds, default, run_verification_suite)
        }
        Command::Functional(args) => functional(&g, args),
    }
}

fn emit(g: &Global, csv: &str, md: &str) -> Result<()> {
    if let Some(path) = &g.out {
        std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
        let md_path = path.with_extension("md");
        if md_path != *path {
            std::fs::write(&md_path, md).with_context(|| format!("writing {}", md_path.display()))?;
        }
    }
    match g.format {
        Format::Csv => print!("{csv}"),
        Format::Md | Format::Svg => print!("{md}"),
    }
    Ok(())
}

fn geometry(g: &Global, args: GeometryArgs) -> Result<()> {
    let seed = g.seed.unwrap_or(0);
    let mut a = match &args.matrix {
        Some(path) => EffectiveSensing::from_matrix(load_matrix(path)?),
        None => {
            let psi = build_dictionary(args.dict, args.d, seed)?;
            let phi = build_sensing(args.sensing, args.m, args.d, seed)?;
            compose(&phi, &psi, false)?
        }
    };
    if args.normalize {
        a = a.normalized()?;
    }
    if let Some(path) = &args.save_matrix {
        save_matrix(path, a.a())?;
    }
    let mut stream = RandomStream::keyed(seed, &[u64::MAX]);
    let report = geometry_report(&a, args.r, args.mode, args.trials, &mut stream)?;
    let csv = format!("{}\n{}\n", GeometryReport::CSV_HEADER, report.csv_row());
    let source = match &args.matrix {
        Some(p) => format!("matrix {}", p.display()),
        None => format!(
            "A = ΦΨ, Ψ = {} (d = {}), Φ = {} (m = {}), seed {seed}",
            args.dict, args.d, args.sensing, args.m
        ),
    };
    let md = format!(
        "# Geometry report\n\n{source}, {} x {}{}\n\n{}",
        a.m(),
        a.n(),
        if args.normalize { ", columns normalized" } else { "" },
        report.markdown()
    );
    emit(g, &csv, &md)
}

const RESULT_HEADER: &str =
    "solver,support,residual,l1_norm,converged,mult,add,cmp,total_ops,stability_ratio";

fn recover(g: &Global, args: RecoverArgs) -> Result<()> {
    let kinds: Vec<SolverKind> = if args.solver == "all" {
        SolverKind::ALL.to_vec()
    } else {
        vec![args.solver.parse()?]
    };
    let seed = g.seed.unwrap_or(0);
    let (a, y, truth) = match &args.instance {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let inst = PlantedInstance::from_bundle(&text)
                .with_context(|| format!("loading instance {}", path.display()))?;
            let d = inst.truth_basis().d();
            let phi = match &args.matrix {
                Some(p) => etr_lab::dictionaries::SensingOperator::from_matrix(load_matrix(p)?),
                None => {
                    let m = args.m.context("--m is required when Φ is generated")?;
                    build_sensing(args.sensing, m, d, seed)?
                }
            };
            let a = compose(&phi, inst.truth_basis(), false)?;
            let y = match &args.y {
                Some(p) => load_vector(p)?,
                None => observe(inst.x(), &phi, args.epsilon, &mut RandomStream::keyed(seed, &[2]))?.y,
            };
            (a, y, Some(inst))
        }
        None => {
            let m = args.matrix.as_ref().context("--matrix is required without --instance")?;
            let y = args.y.as_ref().context("--y is required without --instance")?;
            (EffectiveSensing::from_matrix(load_matrix(m)?), load_vector(y)?, None)
        }
    };
    let configs: Vec<SolverConfig> = kinds
        .iter()
        .map(|k| {
            let mut c = SolverConfig::new(*k, args.epsilon);
            if let Some(s) = args.max_sparsity {
                c = c.with_max_sparsity(s);
            }
            if let Some(it) = args.max_iterations {
                c.max_iterations = it;
            }
            c
        })
        .collect();
    let entries = run_solvers(&a, &y, truth.as_ref(), &configs);
    let (csv, md) = result_tables(&entries);
    emit(g, &csv, &md)?;
    if entries.iter().all(|e| e.outcome.is_err()) {
        let first = entries.into_iter().next().expect("at least one solver");
        return Err(first.outcome.unwrap_err().into());
    }
    Ok(())
}

fn result_tables(entries: &[BatteryEntry]) -> (String, String) {
    let mut csv = format!("{RESULT_HEADER}\n");
    let mut md = String::from(
        "| solver | support | residual | ‖α̂‖₁ | converged | mult | add | cmp | total | ‖x̂−x‖/ε |\n|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for e in entries {
        match &e.outcome {
            Ok(r) => {
                let support: Vec<String> = r.support.iter().map(|i| i.to_string()).collect();
                let ratio = r.stability_ratio.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{}",
                    e.solver,
                    support.join(" "),
                    r.residual_norm,
                    r.l1_norm(),
                    r.converged,
                    r.cost.multiplies,
                    r.cost.additions,
                    r.cost.comparisons,
                    r.cost.total(),
                    ratio
                );
                let _ = writeln!(
                    md,
                    "| {} | {{{}}} | {:.3e} | {:.6} | {} | {} | {} | {} | {} | {} |",
                    e.solver,
                    support.join(", "),
                    r.residual_norm,
                    r.l1_norm(),
                    r.converged,
                    r.cost.multiplies,
                    r.cost.additions,
                    r.cost.comparisons,
                    r.cost.total(),
                    r.stability_ratio.map_or("-".to_string(), |v| format!("{v:.4}"))
                );
            }
            Err(err) => {
                eprintln!("{}: {err}", e.solver);
                let _ = writeln!(csv, "{},,,,false,,,,,", e.solver);
                let _ = writeln!(md, "| {} | failed: {err} | | | | | | | | |", e.solver);
            }
        }
    }
    (csv, md)
}

fn load_config(g: &Global, kinds: &[ExperimentKind], default: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let mut c = ExperimentConfig::new(default);
            c.output_dir = Path::new("results").join(default.as_str());
            c
        }
    };
    if !kinds.contains(&cfg.experiment) {
        bail!(
            "config describes a `{}` experiment; this subcommand runs {}",
            cfg.experiment,
            kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(" or ")
        );
    }
    if let Some(seed) = g.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if g.format == Format::Svg {
        cfg.figures = true;
    }
    Ok(cfg)
}

fn experiment(
    g: &Global,
    kinds: &[ExperimentKind],
    runner: fn(&ExperimentConfig) -> etr_lab::Result<ReportBundle>,
) -> Result<()> {
    experiment_with_default(g, kinds, kinds[0], runner)
}

fn experiment_with_default(
    g: &Global,
    kinds: &[ExperimentKind],
    default: ExperimentKind,
    runner: fn(&ExperimentConfig) -> etr_lab::Result<ReportBundle>,
) -> Result<()> {
    let cfg = load_config(g, kinds, default)?;
    let outcome = runner(&cfg);
    let records = cfg.output_dir.join(etr_lab::harness::RECORDS_FILE);
    let summary = cfg.output_dir.join(etr_lab::harness::SUMMARY_FILE);
    match outcome {
        Ok(bundle) => {
            match g.format {
                Format::Csv => print!("{}", bundle.summary_csv),
                Format::Md => print!("{}", bundle.markdown),
                Format::Svg => {
                    for f in &bundle.figures {
                        println!("{}", f.display());
                    }
                }
            }
            eprintln!("wrote {} and {}", bundle.records.display(), bundle.summary.display());
            Ok(())
        }
        Err(err @ Error::SuiteFailure(_)) => {
            eprintln!("wrote {} and {}", records.display(), summary.display());
            Err(err.into())
        }
        Err(err) => Err(err.into()),
    }
}

fn functional(g: &Global, args: FunctionalArgs) -> Result<()> {
    let gamma = match (args.gamma, &args.matrix) {
        (Some(v), _) => v,
        (None, Some(path)) => {
            let a = EffectiveSensing::from_matrix(load_matrix(path)?);
            gamma_exact(&a, 2 * args.k)?
        }
        (None, None) => bail!("give --gamma or --matrix"),
    };
    let k_psi = args.k_psi.unwrap_or(args.k);
    let report = UncertaintyReport::new(
        args.k,
        k_psi,
        gamma,
        args.cost,
        args.regime.unwrap_or(Regime::Indeterminate),
    )?;
    let csv = format!("{}\n{}\n", UncertaintyReport::CSV_HEADER, report.csv_row());
    let show = |v: f64| if v.is_infinite() { "∞".to_string() } else { format!("{v:.12}") };
    let md = format!(
        "| quantity | value |\n|---|---|\n| k | {} |\n| K_Ψ | {} |\n| γ_2k | {} |\n| cost C | {} |\n| 𝔘_k | {} |\n| floor (K_Ψ/γ_2k)·ln 2 | {} |\n| regime | {} |\n",
        report.k,
        report.k_psi,
        report.gamma_2k,
        report.cost,
        show(report.u_value),
        show(report.lower_bound),
        report.regime
    );
    emit(g, &csv, &md)
}
