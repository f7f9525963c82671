use super::{check_rhs, counted_norm, finish, residual, RecoveryResult, SolverConfig, SolverKind};
use crate::dictionaries::EffectiveSensing;
use crate::error::{Error, Result};
use crate::numerics::{least_squares_counted, CostCounter, Vector, TOLERANCES};

/// Orthogonal matching pursuit on a column-normalized matrix.
///
/// Each step adds the column with the largest |⟨a_j, r⟩| (lowest index on
/// ties) and refits all selected coefficients by least squares. Stops once
/// ‖r‖₂ ≤ ε + 1e-10 or the support reaches min(max_sparsity, m, N).
pub fn solve_omp(a: &EffectiveSensing, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    check_rhs(a, y)?;
    a.require_normalized()?;
    let (m, n) = (a.m(), a.n());
    let tol = cfg.epsilon + TOLERANCES.feasibility_slack;
    let cap = cfg.max_sparsity.min(m).min(n);
    let mut ops = CostCounter::new();

    let mut support: Vec<usize> = Vec::new();
    let mut selected = vec![false; n];
    let mut coef = Vector::zeros(0);
    let mut r = Vector::from(y.to_vec());
    let mut r_norm = counted_norm(&r, &mut ops);

    loop {
        ops.cmp(1);
        if r_norm <= tol || support.len() >= cap {
            break;
        }
        let corr = a.a().tr_mul_vec(&r);
        ops.dot(m * n);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in corr.iter().enumerate() {
            if selected[j] {
                continue;
            }
            ops.cmp(1);
            if best.is_none_or(|(_, b)| c.abs() > b) {
                best = Some((j, c.abs()));
            }
        }
        let (j, c) = best.expect("cap < n leaves an unselected column");
        ops.cmp(1);
        if c < TOLERANCES.stall_correlation {
            return Err(Error::Stalled {
                correlation: c,
                residual: r_norm,
            });
        }
        support.push(j);
        selected[j] = true;
        let sub = a.a().select_columns(&support);
        coef = match least_squares_counted(&sub, y, &mut ops) {
            Ok(c) => c,
            Err(Error::RankDeficient { .. }) => {
                return Err(Error::Stalled {
                    correlation: c,
                    residual: r_norm,
                })
            }
            Err(e) => return Err(e),
        };
        r = residual(&sub, &coef, y, &mut ops);
        r_norm = counted_norm(&r, &mut ops);
    }

    let mut alpha = Vector::zeros(n);
    for (&j, c) in support.iter().zip(coef.iter()) {
        alpha[j] = *c;
    }
    let converged = r_norm <= tol;
    let iterations = support.len();
    let mut sorted = support;
    sorted.sort_unstable();
    Ok(finish(SolverKind::Omp, a, y, alpha, sorted, ops, converged, iterations))
}
