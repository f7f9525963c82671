use super::{check_rhs, counted_norm, finish, residual, RecoveryResult, SolverConfig, SolverKind};
use crate::dictionaries::EffectiveSensing;
use crate::error::{Error, Result};
use crate::numerics::{binomial, least_squares_counted, Combinations, CostCounter, Vector, TOLERANCES};

/// Cumulative number of supports the exhaustive search may visit.
pub const L0_ENUMERATION_LIMIT: u128 = 10_000_000;

/// min ‖z‖₀ subject to ‖Az − y‖₂ ≤ ε by enumeration.
///
/// Supports are visited by increasing size, colex order within a size, and the
/// first one whose least-squares residual is within ε + 1e-10 wins. A
/// rank-deficient support is skipped: if it fit, some smaller independent
/// subset of it fits too and was visited earlier.
pub fn solve_l0(a: &EffectiveSensing, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    check_rhs(a, y)?;
    let (m, n) = (a.m(), a.n());
    let tol = cfg.epsilon + TOLERANCES.feasibility_slack;
    let cap = cfg.max_sparsity.min(n);
    let mut ops = CostCounter::new();

    let y_norm = counted_norm(y, &mut ops);
    ops.cmp(1);
    if y_norm <= tol {
        return Ok(finish(SolverKind::L0Exhaustive, a, y, Vector::zeros(n), Vec::new(), ops, true, 0));
    }

    let mut visited: u128 = 0;
    let mut iterations = 0;
    for size in 1..=cap.min(m) {
        let count = binomial(n, size);
        if visited.saturating_add(count) > L0_ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge {
                requested: visited.saturating_add(count),
                limit: L0_ENUMERATION_LIMIT,
            });
        }
        visited += count;
        for support in Combinations::new(n, size) {
            iterations += 1;
            let sub = a.a().select_columns(&support);
            let Ok(coef) = least_squares_counted(&sub, y, &mut ops) else {
                continue;
            };
            let r = residual(&sub, &coef, y, &mut ops);
            let rn = counted_norm(&r, &mut ops);
            ops.cmp(1);
            if rn <= tol {
                let mut alpha = Vector::zeros(n);
                for (&j, c) in support.iter().zip(coef.iter()) {
                    alpha[j] = *c;
                }
                return Ok(finish(
                    SolverKind::L0Exhaustive,
                    a,
                    y,
                    alpha,
                    support,
                    ops,
                    true,
                    iterations,
                ));
            }
        }
    }
    Err(Error::NoFeasibleSolution {
        max_sparsity: cap,
        epsilon: cfg.epsilon,
    })
}
