use std::path::Path;
use std::process::{Command, Output};

use etr_lab::dictionaries::{build_dictionary, DictionaryKind};
use etr_lab::numerics::RandomStream;
use etr_lab::sparsity::plant;
use tempfile::TempDir;

fn etr_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etr-lab"))
        .args(args)
        .env_remove("ETRLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn geometry_emits_csv_and_markdown() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.csv");
    let o = etr_lab(&[
        "geometry", "--dict", "hadamard", "--d", "16", "--sensing", "gaussian", "--m", "8",
        "--seed", "42", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("γ_r (exact)"));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "r,gamma_exact,gamma_upper,gamma_lower,injective,supports_examined,method"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    assert_eq!(row[4], "yes");
    assert_eq!(row[5], "120");
    assert!(dir.path().join("report.md").exists());
}

#[test]
fn recover_from_planted_bundle() {
    let dir = TempDir::new().unwrap();
    let psi = build_dictionary(DictionaryKind::Identity, 16, 0).unwrap();
    let inst = plant(&psi, 2, &mut RandomStream::new(9, 0)).unwrap();
    let bundle = write(dir.path(), "inst.csv", &inst.to_bundle());
    let o = etr_lab(&[
        "recover", "--instance", &bundle, "--m", "12", "--seed", "3", "--format", "csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "solver,support,residual,l1_norm,converged,mult,add,cmp,total_ops,stability_ratio"
    );
    let want: Vec<String> = inst.support().iter().map(|i| i.to_string()).collect();
    let want = want.join(" ");
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (row, name) in rows.iter().zip(["l0", "omp", "bp"]) {
        assert_eq!(row[0], name);
        assert_eq!(row[1], want, "{name}");
        assert_eq!(row[4], "true");
    }
}

#[test]
fn recover_rejects_invalid_bundles() {
    let dir = TempDir::new().unwrap();
    // coefficient 0.05 is below the planted minimum magnitude
    let bundle = write(dir.path(), "bad.csv", "2,2\n1,0\n0,1\n2,1\n0.05\n0\n");
    let o = etr_lab(&["recover", "--instance", &bundle, "--m", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("minimum magnitude"));
}

#[test]
fn recover_from_matrix_and_observation() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.csv", "2,3\n1,0,0.6\n0,1,0.8\n");
    let y = write(dir.path(), "y.csv", "2,1\n0.6\n0.8\n");
    let out = dir.path().join("result.csv");
    let o = etr_lab(&[
        "recover", "--solver", "l0", "--matrix", &a, "--y", &y, "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "l0");
    assert_eq!(row[1], "2");
}

#[test]
fn functional_of_unit_inputs_is_ln_two() {
    let o = etr_lab(&["functional", "--k", "1", "--k-psi", "1", "--gamma", "1", "--cost", "1", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let u: f64 = row[4].parse().unwrap();
    assert!((u - std::f64::consts::LN_2).abs() < 1e-12);
    let o = etr_lab(&["functional", "--k", "0", "--gamma", "1", "--cost", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

const SMALL_PHASE: &str = r#"
experiment = "phase"
master_seed = 4
trials_per_cell = 4
[phase]
d = 16
k = 2
m_sweep = [6, 10]
"#;

#[test]
fn phase_is_identical_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "phase.toml", SMALL_PHASE);
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("w{workers}"));
        let o = Command::new(env!("CARGO_BIN_EXE_etr-lab"))
            .args(["phase", "--config", &cfg, "--out", out.to_str().unwrap()])
            .env("ETRLAB_WORKERS", workers)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("Phase transition"));
        outputs.push(std::fs::read(out.join("records.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn svg_format_writes_figures() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "phase.toml", SMALL_PHASE);
    let out = dir.path().join("svg");
    let o = etr_lab(&["phase", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "svg"]);
    assert!(o.status.success());
    assert!(out.join("phase.svg").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.toml", "experiment = \"phase\"\ntrails_per_cell = 3\n");
    let o = etr_lab(&["phase", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trails_per_cell"));

    let cfg = write(dir.path(), "phase.toml", SMALL_PHASE);
    let o = etr_lab(&["regime", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_suites_pass_and_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "up.toml",
        "experiment = \"uncertainty-principle\"\ntrials_per_cell = 12\n",
    );
    let out = dir.path().join("up");
    let o = etr_lab(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("0 violation(s)"));

    let out = dir.path().join("pt");
    let o = etr_lab(&[
        "verify", "--suite", "perturbation", "--seed", "2", "--out", out.to_str().unwrap(),
        "--format", "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("cell,variant,solver"));
}

#[test]
fn regime_reports_grid_and_evidence() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "regime.toml",
        "experiment = \"regime-map\"\n[regime]\nd = 8\nm_sweep = [2, 8]\nk_sweep = [1]\n",
    );
    let out = dir.path().join("r");
    let o = etr_lab(&["regime", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let md = stdout(&o);
    assert!(md.contains("Regime grid"));
    assert!(md.contains("duplicate-control,k=1"));
    assert!(md.contains("kernel witness"));
}
