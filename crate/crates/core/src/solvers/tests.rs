use proptest::prelude::*;

use super::*;
use crate::dictionaries::{build_dictionary, build_sensing, compose, DictionaryKind, SensingKind};
use crate::geometry::gamma_exact_search;
use crate::numerics::{Combinations, RandomStream};
use crate::sparsity::{observe, plant};

fn identity(n: usize) -> EffectiveSensing {
    EffectiveSensing::from_matrix(Matrix::identity(n))
}

fn cfg(kind: SolverKind, eps: f64) -> SolverConfig {
    SolverConfig::new(kind, eps)
}

struct Instance {
    a: EffectiveSensing,
    truth: PlantedInstance,
    y: Vector,
}

fn gaussian_instance(m: usize, n: usize, k: usize, seed: u64, eps: f64, normalize: bool) -> Instance {
    let psi = build_dictionary(DictionaryKind::Identity, n, seed).unwrap();
    let phi = build_sensing(SensingKind::Gaussian, m, n, seed).unwrap();
    let a = compose(&phi, &psi, normalize).unwrap();
    let mut s = RandomStream::keyed(seed, &[7]);
    let truth = plant(&psi, k, &mut s).unwrap();
    let y = observe(truth.x(), &phi, eps, &mut s).unwrap().y;
    Instance { a, truth, y }
}

/// α⋆ expressed in the coordinates of `a` (differs from α⋆ after normalization).
fn alpha_in(a: &EffectiveSensing, truth: &PlantedInstance) -> Vector {
    a.from_basis_coefficients(truth.alpha_star())
}

fn assert_result_invariants(a: &EffectiveSensing, y: &[f64], r: &RecoveryResult) {
    let resid = a.a().mul_vec(&r.alpha_hat).sub(y).norm2();
    assert!((resid - r.residual_norm).abs() <= 1e-10);
    let x = a.signal(&r.alpha_hat);
    assert!(x.sub(&r.x_hat).norm_inf() <= 1e-10);
    assert!(r.cost.total() > 0);
    assert_eq!(
        r.cost.total(),
        r.cost.multiplies + r.cost.additions + r.cost.comparisons
    );
}

#[test]
fn labels_round_trip() {
    for k in SolverKind::ALL {
        assert_eq!(k.as_str().parse::<SolverKind>().unwrap(), k);
    }
    assert_eq!("basis-pursuit".parse::<SolverKind>().unwrap(), SolverKind::BasisPursuit);
    assert_eq!("l0-exhaustive".parse::<SolverKind>().unwrap(), SolverKind::L0Exhaustive);
    assert!("lasso".parse::<SolverKind>().is_err());
}

#[test]
fn config_validation() {
    let mut c = cfg(SolverKind::BasisPursuit, 0.0);
    assert!(c.validate().is_ok());
    c.convergence_tol = 0.0;
    assert!(matches!(c.validate(), Err(Error::InvalidTolerance(_))));
    c.convergence_tol = 0.02;
    assert!(matches!(c.validate(), Err(Error::InvalidTolerance(_))));
    c.convergence_tol = 1e-2;
    assert!(c.validate().is_ok());
    c.max_iterations = 0;
    assert!(c.validate().is_err());
    let mut c = cfg(SolverKind::Omp, -1.0);
    assert!(c.validate().is_err());
    c.epsilon = 0.0;
    c.penalty = 0.0;
    assert!(c.validate().is_err());
}

#[test]
fn wrong_observation_length() {
    let a = identity(4);
    for kind in SolverKind::ALL {
        let err = solve(&a, &[1.0, 2.0], &cfg(kind, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }
}

#[test]
fn l0_identity_single_spike() {
    let a = identity(4);
    let y = [0.0, 0.0, 5.0, 0.0];
    let r = solve_l0(&a, &y, &cfg(SolverKind::L0Exhaustive, 0.0)).unwrap();
    assert_eq!(r.support, vec![2]);
    assert_eq!(r.alpha_hat[2], 5.0);
    assert!(r.converged);
    assert_result_invariants(&a, &y, &r);
}

#[test]
fn zero_observation_gives_zero_for_every_solver() {
    let a = identity(4);
    let y = [0.0; 4];
    for kind in SolverKind::ALL {
        let r = solve(&a, &y, &cfg(kind, 0.0)).unwrap();
        assert!(r.support.is_empty(), "{kind}");
        assert_eq!(r.alpha_hat.norm_inf(), 0.0);
        assert!(r.cost.total() > 0);
    }
}

#[test]
fn l0_prefers_the_smaller_support() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let a = EffectiveSensing::from_matrix(
        Matrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]]).unwrap(),
    );
    let y = [h, h];
    let r = solve_l0(&a, &y, &cfg(SolverKind::L0Exhaustive, 0.0)).unwrap();
    assert_eq!(r.support, vec![2]);
    assert!((r.alpha_hat[2] - 1.0).abs() < 1e-12);
}

#[test]
fn l0_reports_infeasibility_and_guard() {
    let a = EffectiveSensing::from_matrix(Matrix::from_columns(&[vec![1.0, 0.0, 0.0]]).unwrap());
    let err = solve_l0(&a, &[0.0, 1.0, 0.0], &cfg(SolverKind::L0Exhaustive, 0.0)).unwrap_err();
    assert!(matches!(err, Error::NoFeasibleSolution { max_sparsity: 1, .. }));

    // 4500 atoms on an arc of the unit circle away from 45°: no single atom
    // fits y = (1, 1), and 4500 + C(4500, 2) supports exceed 10^7 at size 2
    let atoms: Vec<Vec<f64>> = (0..4500)
        .map(|j| {
            let t = 0.1 + 1e-4 * j as f64;
            vec![t.cos(), t.sin()]
        })
        .collect();
    let a = EffectiveSensing::from_matrix(Matrix::from_columns(&atoms).unwrap());
    let err = solve_l0(&a, &[1.0, 1.0], &cfg(SolverKind::L0Exhaustive, 0.0)).unwrap_err();
    match err {
        Error::EnumerationTooLarge { requested, limit } => {
            assert_eq!(limit, 10_000_000);
            assert_eq!(requested, 4500 + 4500 * 4499 / 2);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn l0_max_sparsity_caps_search() {
    let a = identity(4);
    let y = [1.0, 1.0, 0.0, 0.0];
    let c = cfg(SolverKind::L0Exhaustive, 0.0).with_max_sparsity(1);
    assert!(matches!(solve_l0(&a, &y, &c), Err(Error::NoFeasibleSolution { .. })));
    let r = solve_l0(&a, &y, &c.with_max_sparsity(2)).unwrap();
    assert_eq!(r.support, vec![0, 1]);
}

#[test]
fn omp_identity_two_steps() {
    let a = identity(4);
    let y = [0.0, 2.0, 0.0, -1.0];
    let r = solve_omp(&a, &y, &cfg(SolverKind::Omp, 0.0)).unwrap();
    assert_eq!(r.support, vec![1, 3]);
    assert_eq!(r.iterations, 2);
    assert!(r.converged);
    assert_eq!(r.alpha_hat.as_slice(), &y);
    assert_result_invariants(&a, &y, &r);
}

#[test]
fn omp_requires_unit_columns() {
    let a = EffectiveSensing::from_matrix(Matrix::identity(3).scale_columns(&[2.0, 1.0, 1.0]));
    let err = solve_omp(&a, &[1.0, 0.0, 0.0], &cfg(SolverKind::Omp, 0.0)).unwrap_err();
    assert!(matches!(err, Error::NotNormalized { .. }));
}

#[test]
fn omp_breaks_ties_by_lowest_index() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let a = identity(2);
    let r = solve_omp(&a, &[h, h], &cfg(SolverKind::Omp, 0.0).with_max_sparsity(1)).unwrap();
    assert_eq!(r.support, vec![0]);
    assert!(!r.converged);
}

#[test]
fn omp_stalls_on_orthogonal_residual() {
    // y is orthogonal to every column of A, so no correlation is available
    let a = EffectiveSensing::from_matrix(Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap());
    let err = solve_omp(&a, &[0.0, 0.0, 1.0], &cfg(SolverKind::Omp, 0.0)).unwrap_err();
    assert!(matches!(err, Error::Stalled { .. }));
}

#[test]
fn bp_identity_returns_preimage() {
    let a = identity(4);
    let y = [0.0, 2.0, 0.0, -1.0];
    let r = solve_bp(&a, &y, &cfg(SolverKind::BasisPursuit, 0.0)).unwrap();
    assert!(r.converged);
    assert_eq!(r.support, vec![1, 3]);
    assert!(r.alpha_hat.sub(&y).norm_inf() < 1e-10);
    assert_result_invariants(&a, &y, &r);
}

#[test]
fn bp_not_converged_still_returns() {
    let inst = gaussian_instance(16, 32, 3, 1, 0.0, false);
    let mut c = cfg(SolverKind::BasisPursuit, 0.0);
    c.max_iterations = 3;
    let r = solve_bp(&inst.a, &inst.y, &c).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 3);
    assert_result_invariants(&inst.a, &inst.y, &r);
}

#[test]
fn bp_gaussian_16x32_k2_recovers() {
    let trials = 200;
    let mut good = 0;
    for seed in 0..trials {
        let inst = gaussian_instance(16, 32, 2, 1000 + seed, 0.0, false);
        let r = solve_bp(&inst.a, &inst.y, &cfg(SolverKind::BasisPursuit, 0.0)).unwrap();
        assert!(r.residual_norm <= 1e-6 + 1e-12 || !r.converged);
        if r.alpha_hat.sub(&alpha_in(&inst.a, &inst.truth)).norm2() <= 1e-4 {
            good += 1;
        }
    }
    assert!(good as f64 >= 0.95 * trials as f64, "{good}/{trials}");
}

#[test]
fn bp_certificate_with_noise() {
    for seed in 0..40 {
        let eps = 0.05;
        let inst = gaussian_instance(20, 40, 3, 500 + seed, eps, false);
        let c = cfg(SolverKind::BasisPursuit, eps);
        let r = solve_bp(&inst.a, &inst.y, &c).unwrap();
        assert!(r.converged, "seed {seed}");
        assert!(r.residual_norm <= eps + c.convergence_tol, "seed {seed}: {}", r.residual_norm);
        let star = alpha_in(&inst.a, &inst.truth);
        assert!(r.l1_norm() <= star.norm1() + c.convergence_tol, "seed {seed}");
    }
}

#[test]
fn battery_identity_k1_agrees() {
    let a = identity(4);
    let psi = build_dictionary(DictionaryKind::Identity, 4, 0).unwrap();
    let truth = PlantedInstance::from_parts(psi, Vector::from(vec![0.0, 0.0, -1.5, 0.0])).unwrap();
    let entries = run_battery(&a, truth.x(), Some(&truth), &BatteryConfig::with_epsilon(0.0));
    let kinds: Vec<SolverKind> = entries.iter().map(|e| e.solver).collect();
    assert_eq!(kinds, SolverKind::ALL.to_vec());
    for e in &entries {
        let r = e.outcome.as_ref().unwrap();
        assert_eq!(r.support, vec![2]);
        assert_eq!(r.stability_ratio, None);
    }
}

#[test]
fn battery_duplicate_columns() {
    let e1 = vec![1.0, 0.0, 0.0];
    let e2 = vec![0.0, 1.0, 0.0];
    let e3 = vec![0.0, 0.0, 1.0];
    let a = EffectiveSensing::from_matrix(Matrix::from_columns(&[e1.clone(), e2, e1, e3]).unwrap());
    // planted on the second copy of e1
    let y = [2.0, 0.0, 0.0];
    let entries = run_battery(&a, &y, None, &BatteryConfig::with_epsilon(0.0));
    let l0 = entries[0].outcome.as_ref().unwrap();
    assert_eq!(l0.support.len(), 1);
    assert_eq!(l0.support, vec![0]);
    let witness = gamma_exact_search(a.a(), 2).unwrap();
    assert_eq!(witness.gamma, 0.0);
    assert_eq!(witness.support, vec![0, 2]);
}

#[test]
fn battery_keeps_failures_per_entry() {
    let a = EffectiveSensing::from_matrix(Matrix::from_columns(&[vec![1.0, 0.0]]).unwrap());
    let entries = run_battery(&a, &[0.0, 1.0], None, &BatteryConfig::with_epsilon(0.0));
    assert_eq!(entries.len(), 3);
    assert!(entries[0].outcome.is_err());
    assert!(entries[1].outcome.is_err());
    assert!(entries[2].outcome.is_ok());
}

#[test]
fn battery_normalizes_for_omp() {
    let inst = gaussian_instance(12, 24, 2, 42, 0.0, false);
    assert!(!inst.a.column_normalized());
    let entries = run_battery(&inst.a, &inst.y, Some(&inst.truth), &BatteryConfig::with_epsilon(0.0));
    let omp = entries[1].outcome.as_ref().unwrap();
    assert_eq!(omp.support, inst.truth.support());
    assert!(omp.alpha_hat.sub(inst.truth.alpha_star()).norm_inf() < 1e-9);
    assert_result_invariants(&inst.a, &inst.y, omp);
}

#[test]
fn battery_stability_ratio_filled_with_noise() {
    let eps = 1e-2;
    let inst = gaussian_instance(16, 32, 2, 9, eps, true);
    let entries = run_battery(&inst.a, &inst.y, Some(&inst.truth), &BatteryConfig::with_epsilon(eps));
    for e in entries {
        let r = e.outcome.unwrap();
        let expected = r.x_hat.sub(inst.truth.x()).norm2() / eps;
        assert_eq!(r.stability_ratio, Some(expected));
    }
}

#[test]
fn cost_counters_are_deterministic() {
    let inst = gaussian_instance(16, 32, 3, 77, 0.0, true);
    let c = BatteryConfig::with_epsilon(0.0);
    let first = run_battery(&inst.a, &inst.y, None, &c);
    let second = run_battery(&inst.a, &inst.y, None, &c);
    for (p, q) in first.iter().zip(&second) {
        let (p, q) = (p.outcome.as_ref().unwrap(), q.outcome.as_ref().unwrap());
        assert_eq!(p.cost, q.cost);
        assert_eq!(p.alpha_hat, q.alpha_hat);
    }
}

#[test]
fn cost_ordering_16x32_k3() {
    for seed in 0..10 {
        let inst = gaussian_instance(16, 32, 3, 300 + seed, 0.0, true);
        let entries = run_battery(&inst.a, &inst.y, None, &BatteryConfig::with_epsilon(0.0));
        let total = |i: usize| entries[i].outcome.as_ref().unwrap().cost.total();
        assert!(total(0) > total(2), "seed {seed}: l0 {} bp {}", total(0), total(2));
        assert!(total(0) > total(1), "seed {seed}: l0 {} omp {}", total(0), total(1));
    }
}

/// Normal-equation solve by Gaussian elimination; independent of the SVD path.
fn normal_equation_residual(a: &Matrix, support: &[usize], y: &[f64]) -> Option<f64> {
    let s = support.len();
    let cols: Vec<Vector> = support.iter().map(|&j| a.column(j)).collect();
    let mut g = vec![vec![0.0; s + 1]; s];
    for i in 0..s {
        for j in 0..s {
            g[i][j] = cols[i].dot(&cols[j]);
        }
        g[i][s] = cols[i].dot(y);
    }
    for c in 0..s {
        let p = (c..s).max_by(|&i, &j| g[i][c].abs().total_cmp(&g[j][c].abs()))?;
        if g[p][c].abs() < 1e-10 {
            return None;
        }
        g.swap(c, p);
        for r in 0..s {
            if r != c {
                let f = g[r][c] / g[c][c];
                for k in c..=s {
                    g[r][k] -= f * g[c][k];
                }
            }
        }
    }
    let mut fit = vec![0.0; y.len()];
    for (i, col) in cols.iter().enumerate() {
        let coef = g[i][s] / g[i][i];
        for (f, v) in fit.iter_mut().zip(col.iter()) {
            *f += coef * v;
        }
    }
    Some(fit.iter().zip(y).map(|(f, v)| (f - v) * (f - v)).sum::<f64>().sqrt())
}

#[test]
fn l0_minimality_against_independent_search() {
    for seed in 0..20 {
        let inst = gaussian_instance(6, 12, 2 + (seed as usize % 2), 40 + seed, 0.0, true);
        let r = solve_l0(&inst.a, &inst.y, &cfg(SolverKind::L0Exhaustive, 0.0)).unwrap();
        for size in 0..r.support.len() {
            for s in Combinations::new(12, size) {
                if let Some(res) = normal_equation_residual(inst.a.a(), &s, &inst.y) {
                    assert!(res > 1e-8, "seed {seed}: smaller support {s:?} fits");
                }
            }
        }
        assert!(r.support.len() <= inst.truth.k());
    }
}

#[test]
fn l0_stability_ratio_within_two_over_gamma() {
    let eps = 1e-3;
    let mut checked = 0;
    for seed in 0..30 {
        let inst = gaussian_instance(12, 16, 2, 900 + seed, eps, true);
        let gamma = gamma_exact_search(inst.a.a(), 4).unwrap().gamma;
        if gamma < 0.1 {
            continue;
        }
        let c = cfg(SolverKind::L0Exhaustive, eps);
        let entries = run_solvers(&inst.a, &inst.y, Some(&inst.truth), &[c]);
        let r = entries[0].outcome.as_ref().unwrap();
        if r.support != inst.truth.support() {
            continue;
        }
        // compare in the coordinates of A, where γ is measured
        let err = r.alpha_hat.sub(&alpha_in(&inst.a, &inst.truth)).norm2();
        assert!(err / eps <= 2.0 / gamma, "seed {seed}: {} > {}", err / eps, 2.0 / gamma);
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} well-posed instances");
}

#[test]
fn oracle_equivalence_under_coherence_condition() {
    let mut checked = 0;
    for seed in 0..60 {
        let inst = gaussian_instance(24, 32, 1 + (seed as usize % 2), 2000 + seed, 0.0, true);
        let mu = crate::dictionaries::self_coherence(&inst.a).unwrap();
        if (inst.truth.k() as f64) >= 0.5 * (1.0 + 1.0 / mu) {
            continue;
        }
        let entries = run_battery(&inst.a, &inst.y, None, &BatteryConfig::with_epsilon(0.0));
        let l0 = &entries[0].outcome.as_ref().unwrap().support;
        for e in &entries[1..] {
            assert_eq!(&e.outcome.as_ref().unwrap().support, l0, "seed {seed} {}", e.solver);
        }
        checked += 1;
    }
    assert!(checked > 20);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn omp_residual_orthogonal_and_monotone(seed in 0u64..10_000, k in 1usize..5) {
        let inst = gaussian_instance(14, 28, k, seed, 0.0, true);
        let mut last = f64::INFINITY;
        for s in 1..=k + 2 {
            let c = cfg(SolverKind::Omp, 0.0).with_max_sparsity(s);
            let r = match solve_omp(&inst.a, &inst.y, &c) {
                Ok(r) => r,
                Err(Error::Stalled { .. }) => break,
                Err(e) => panic!("{e}"),
            };
            let resid = inst.y.sub(&inst.a.a().mul_vec(&r.alpha_hat));
            for &j in &r.support {
                prop_assert!(inst.a.a().column(j).dot(&resid).abs() <= 1e-9);
            }
            prop_assert!(r.residual_norm <= last + 1e-12);
            last = r.residual_norm;
            if r.converged {
                break;
            }
        }
    }

    #[test]
    fn bp_feasible_and_l1_certified(seed in 0u64..10_000, k in 1usize..5, noisy in any::<bool>()) {
        let eps = if noisy { 0.02 } else { 0.0 };
        let inst = gaussian_instance(16, 32, k, seed, eps, false);
        let c = cfg(SolverKind::BasisPursuit, eps);
        let r = solve_bp(&inst.a, &inst.y, &c).unwrap();
        prop_assert!(r.converged);
        prop_assert!(r.residual_norm <= eps + c.convergence_tol);
        let star = alpha_in(&inst.a, &inst.truth);
        prop_assert!(r.l1_norm() <= star.norm1() + c.convergence_tol,
            "{} vs {}", r.l1_norm(), star.norm1());
    }

    #[test]
    fn solves_are_pure(seed in 0u64..1000) {
        let inst = gaussian_instance(8, 12, 2, seed, 0.0, true);
        for kind in SolverKind::ALL {
            let p = solve(&inst.a, &inst.y, &cfg(kind, 0.0)).unwrap();
            let q = solve(&inst.a, &inst.y, &cfg(kind, 0.0)).unwrap();
            prop_assert_eq!(p, q);
        }
    }
}
