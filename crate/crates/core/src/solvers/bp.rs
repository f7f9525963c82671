use super::{check_rhs, counted_norm, finish, residual, RecoveryResult, SolverConfig, SolverKind};
use crate::dictionaries::EffectiveSensing;
use crate::error::{Error, Result};
use crate::numerics::{jacobi_svd, CostCounter, Matrix, Svd, Vector, TOLERANCES};

const PENALTY_MIN: f64 = 1e-4;
const PENALTY_MAX: f64 = 1e4;
const BALANCE_RATIO: f64 = 10.0;
const CERTIFY_EVERY: usize = 10;
/// Penalty is rebalanced at most this often and this many times; frozen
/// afterwards so the fixed-penalty convergence theory applies.
const BALANCE_EVERY: usize = 10;
const MAX_ADAPTATIONS: usize = 50;
/// Relative slack on the off-support dual feasibility test.
const DUAL_SLACK: f64 = 1e-10;

/// min ‖z‖₁ subject to ‖Az − y‖₂ ≤ ε by ADMM on the splitting z = x, w = Ax.
///
/// The x-step solves (I + AᵀA)x = (z − u) + Aᵀ(w − v) through a Cholesky
/// factor of I + AAᵀ, which does not depend on the penalty, so residual
/// balancing never refactors. With ε = 0 the ball radius is convergence_tol / 2.
///
/// Every few iterations the support of z is tested with [`certify`]: when the
/// refit on that support satisfies the KKT conditions of the original problem
/// the refit is returned as an exact optimum. Otherwise the loop stops on the
/// primal and dual residuals and returns z.
pub fn solve_bp(a: &EffectiveSensing, y: &[f64], cfg: &SolverConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    check_rhs(a, y)?;
    let mat = a.a();
    let (m, n) = (a.m(), a.n());
    let tol = cfg.convergence_tol;
    let mut ops = CostCounter::new();

    let y_norm = counted_norm(y, &mut ops);
    ops.cmp(1);
    if y_norm <= cfg.epsilon {
        return Ok(finish(SolverKind::BasisPursuit, a, y, Vector::zeros(n), Vec::new(), ops, true, 0));
    }
    let radius = if cfg.epsilon > 0.0 { cfg.epsilon } else { 0.5 * tol };

    let chol = cholesky_gram(mat, &mut ops)?;
    // ‖A‖₂ ≤ ‖A‖_F; primal threshold chosen so that ‖Az − y‖ ≤ radius + tol / 2
    let frob = counted_norm(mat.data(), &mut ops);
    let primal_tol = tol / (2.0 * (1.0 + frob));
    ops.mul(2);
    ops.add(1);

    let mut z = Vector::zeros(n);
    let mut u = Vector::zeros(n);
    let mut w = Vector::from(y.to_vec());
    let mut v = Vector::zeros(m);
    let mut rho = cfg.penalty;
    let mut converged = false;
    let mut certified: Option<(Vec<usize>, Vector)> = None;
    let mut factored: Option<(Vec<usize>, Svd)> = None;
    let mut iterations = 0;
    let mut adaptations = 0;

    for it in 1..=cfg.max_iterations {
        iterations = it;
        // x-step
        let wv: Vec<f64> = w.iter().zip(v.iter()).map(|(a, b)| a - b).collect();
        let atwv = mat.tr_mul_vec(&wv);
        let b: Vector = (0..n).map(|i| z[i] - u[i] + atwv[i]).collect();
        ops.add(m + 2 * n);
        ops.dot(m * n);
        let t = mat.mul_vec(&b);
        ops.dot(m * n);
        // s = (I + AAᵀ)⁻¹ A b equals A x
        let ax = chol.solve(&t, &mut ops);
        let at_s = mat.tr_mul_vec(&ax);
        ops.dot(m * n);
        let x: Vector = b.iter().zip(at_s.iter()).map(|(bi, si)| bi - si).collect();
        ops.add(n);

        // z-step: soft threshold at 1/ρ
        let kappa = 1.0 / rho;
        ops.mul(1);
        let z_old = std::mem::replace(&mut z, (0..n).map(|i| soft(x[i] + u[i], kappa)).collect());
        ops.add(2 * n);
        ops.cmp(2 * n);

        // w-step: projection onto the ball B(y, radius)
        let q: Vec<f64> = ax.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
        let dq: Vec<f64> = q.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
        ops.add(2 * m);
        let dn = counted_norm(&dq, &mut ops);
        ops.cmp(1);
        let scale = if dn > radius {
            ops.mul(1);
            radius / dn
        } else {
            1.0
        };
        let w_new: Vector = y.iter().zip(dq.iter()).map(|(yi, d)| yi + scale * d).collect();
        ops.dot(m);
        let w_old = std::mem::replace(&mut w, w_new);

        // dual updates and residuals
        let mut primal_sq = 0.0;
        for i in 0..n {
            let d = x[i] - z[i];
            u[i] += d;
            primal_sq += d * d;
        }
        for i in 0..m {
            let d = ax[i] - w[i];
            v[i] += d;
            primal_sq += d * d;
        }
        ops.add(3 * (n + m));
        ops.mul(n + m + 1);
        let primal = primal_sq.sqrt();

        let dw: Vec<f64> = w.iter().zip(w_old.iter()).map(|(a, b)| a - b).collect();
        let atdw = mat.tr_mul_vec(&dw);
        ops.add(m);
        ops.dot(m * n);
        let dual_vec: Vec<f64> = (0..n).map(|i| z[i] - z_old[i] + atdw[i]).collect();
        ops.add(2 * n);
        let dual = rho * counted_norm(&dual_vec, &mut ops);
        ops.mul(1);

        ops.cmp(2);
        if primal <= primal_tol && dual <= tol {
            converged = true;
            break;
        }

        if it % CERTIFY_EVERY == 0 {
            let support = support_of(&z, &mut ops);
            ops.cmp(support.len() + 1);
            if !support.is_empty() {
                let multiplier: Vec<f64> = v.iter().map(|e| -rho * e).collect();
                ops.mul(m);
                certified = certify(mat, y, cfg.epsilon, &z, &multiplier, &mut factored, &mut ops);
                if certified.is_some() {
                    converged = true;
                    break;
                }
            }
        }

        if it % BALANCE_EVERY != 0 || adaptations >= MAX_ADAPTATIONS {
            continue;
        }
        ops.cmp(2);
        let factor = if primal > BALANCE_RATIO * dual {
            2.0
        } else if dual > BALANCE_RATIO * primal {
            0.5
        } else {
            1.0
        };
        ops.mul(2);
        if factor != 1.0 {
            let next = (rho * factor).clamp(PENALTY_MIN, PENALTY_MAX);
            ops.cmp(2);
            if next != rho {
                let rescale = rho / next;
                u.iter_mut().chain(v.iter_mut()).for_each(|e| *e *= rescale);
                ops.mul(n + m + 1);
                rho = next;
                adaptations += 1;
            }
        }
    }

    if certified.is_none() {
        let multiplier: Vec<f64> = v.iter().map(|e| -rho * e).collect();
        ops.mul(m);
        certified = certify(mat, y, cfg.epsilon, &z, &multiplier, &mut factored, &mut ops);
    }
    let (support, alpha) = match certified {
        Some((_, alpha)) => {
            converged = true;
            // the refit can leave numerically zero entries on the tested support
            (support_of(&alpha, &mut ops), alpha)
        }
        None => (support_of(&z, &mut ops), z),
    };

    Ok(finish(
        SolverKind::BasisPursuit,
        a,
        y,
        alpha,
        support,
        ops,
        converged,
        iterations,
    ))
}

fn support_of(z: &[f64], ops: &mut CostCounter) -> Vec<usize> {
    let max = z.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    ops.cmp(2 * z.len());
    ops.mul(1);
    let threshold = TOLERANCES.bp_support_relative * max;
    z.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold && **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Exact minimizer of ‖α‖₁ s.t. ‖Aα − y‖₂ ≤ ε on the support and signs of `z`,
/// returned only if it satisfies the optimality conditions.
///
/// With G = A_SᵀA_S and s the signs, the candidate is α_S = G⁻¹(A_Sᵀy − t·s)
/// where t ≥ 0 puts the residual on the sphere of radius ε (t = 0 when ε = 0).
/// It is optimal iff sign(α_S) = s and |⟨a_j, r⟩| ≤ t off S. For ε = 0 the
/// dual is not unique: any λ with A_Sᵀλ = s and |⟨a_j, λ⟩| ≤ 1 off S will do.
/// The minimum-norm λ = A_S G⁻¹ s is tried first, then `multiplier` (the
/// ADMM estimate) projected onto A_Sᵀλ = s.
///
/// `factored` keeps the SVD of the last tested support, since the support
/// usually stays put between tests.
fn certify(
    mat: &Matrix,
    y: &[f64],
    epsilon: f64,
    z: &[f64],
    multiplier: &[f64],
    factored: &mut Option<(Vec<usize>, Svd)>,
    ops: &mut CostCounter,
) -> Option<(Vec<usize>, Vector)> {
    let (m, n) = (mat.rows(), mat.cols());
    let support = support_of(z, ops);
    let k = support.len();
    if k == 0 || k > m {
        return None;
    }
    let signs: Vec<f64> = support.iter().map(|&j| z[j].signum()).collect();
    let sub = mat.select_columns(&support);
    ops.cmp(k);
    if factored.as_ref().is_none_or(|(s, _)| *s != support) {
        *factored = Some((support.clone(), jacobi_svd(&sub, ops)));
    }
    let svd = &factored.as_ref().expect("just factored").1;
    let sigma_max = svd.sigma_max();
    let (_, sigma_min) = svd.argmin()?;
    ops.cmp(2 * k + 1);
    if sigma_min < TOLERANCES.rank_relative * sigma_max {
        return None;
    }
    // α_ls = G⁻¹A_Sᵀy and q = G⁻¹s from the thin SVD
    let mut alpha_ls = vec![0.0; k];
    let mut q = vec![0.0; k];
    for j in 0..k {
        let s2 = svd.singular_values[j] * svd.singular_values[j];
        let vj = &svd.right[j];
        let wy = svd.scaled_left[j].iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / s2;
        let vs = vj.iter().zip(&signs).map(|(a, b)| a * b).sum::<f64>() / s2;
        for i in 0..k {
            alpha_ls[i] += wy * vj[i];
            q[i] += vs * vj[i];
        }
    }
    ops.mul(k);
    ops.dot(k * (m + k) + 2 * k * k);
    ops.mul(2 * k);

    let r_ls = residual(&sub, &alpha_ls, y, ops);
    let r_ls_norm = counted_norm(&r_ls, ops);
    let direction = sub.mul_vec(&q);
    ops.dot(m * k);

    let (alpha_s, dual, bound) = if epsilon == 0.0 {
        let y_norm = counted_norm(y, ops);
        ops.cmp(1);
        if r_ls_norm > TOLERANCES.feasibility_slack * y_norm.max(1.0) {
            return None;
        }
        (alpha_ls, direction.into_inner(), 1.0)
    } else {
        ops.cmp(1);
        if r_ls_norm >= epsilon {
            return None;
        }
        let sq: f64 = signs.iter().zip(&q).map(|(a, b)| a * b).sum();
        ops.dot(k);
        ops.cmp(1);
        if sq <= 0.0 {
            return None;
        }
        let t = ((epsilon * epsilon - r_ls_norm * r_ls_norm) / sq).sqrt();
        ops.mul(4);
        ops.add(1);
        let alpha_s: Vec<f64> = alpha_ls.iter().zip(&q).map(|(a, b)| a - t * b).collect();
        let r: Vec<f64> = r_ls.iter().zip(direction.iter()).map(|(a, b)| a + t * b).collect();
        ops.dot(k + m);
        (alpha_s, r, t)
    };

    ops.mul(k);
    ops.cmp(k);
    if alpha_s.iter().zip(&signs).any(|(a, s)| a * s <= 0.0) {
        return None;
    }
    let mut on_support = vec![false; n];
    for &j in &support {
        on_support[j] = true;
    }
    let limit = bound * (1.0 + DUAL_SLACK);
    ops.mul(1);
    let dual_feasible = |lambda: &[f64], ops: &mut CostCounter| {
        let corr = mat.tr_mul_vec(lambda);
        ops.dot(m * n);
        ops.cmp(n);
        (0..n).all(|j| on_support[j] || corr[j].abs() <= limit)
    };
    let mut ok = dual_feasible(&dual, ops);
    if !ok && epsilon == 0.0 {
        // λ = λ₀ + A_S G⁻¹ (s − A_Sᵀλ₀)
        let gap: Vec<f64> = support
            .iter()
            .zip(&signs)
            .map(|(&j, s)| s - (0..m).map(|i| mat.get(i, j) * multiplier[i]).sum::<f64>())
            .collect();
        ops.dot(m * k);
        ops.add(k);
        let mut coef = vec![0.0; k];
        for j in 0..k {
            let s2 = svd.singular_values[j] * svd.singular_values[j];
            let vj = &svd.right[j];
            let c = vj.iter().zip(&gap).map(|(a, b)| a * b).sum::<f64>() / s2;
            for i in 0..k {
                coef[i] += c * vj[i];
            }
        }
        ops.dot(2 * k * k);
        ops.mul(2 * k);
        let shift = sub.mul_vec(&coef);
        ops.dot(m * k);
        let lambda: Vec<f64> = multiplier.iter().zip(shift.iter()).map(|(a, b)| a + b).collect();
        ops.add(m);
        ok = dual_feasible(&lambda, ops);
    }
    if !ok {
        return None;
    }

    let mut alpha = Vector::zeros(n);
    for (&j, v) in support.iter().zip(&alpha_s) {
        alpha[j] = *v;
    }
    Some((support, alpha))
}

#[inline]
fn soft(v: f64, kappa: f64) -> f64 {
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}

/// Lower-triangular Cholesky factor of I + AAᵀ (row-major, m × m).
struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

fn cholesky_gram(a: &Matrix, ops: &mut CostCounter) -> Result<Cholesky> {
    let (m, n) = (a.rows(), a.cols());
    let mut g = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let s: f64 = a.row(i).iter().zip(a.row(j)).map(|(p, q)| p * q).sum();
            g[i * m + j] = s + if i == j { 1.0 } else { 0.0 };
        }
    }
    ops.dot(m * (m + 1) / 2 * n);
    ops.add(m);

    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let mut d = g[j * m + j];
        for p in 0..j {
            d -= l[j * m + p] * l[j * m + p];
        }
        ops.dot(j);
        if d <= 0.0 {
            // I + AAᵀ has eigenvalues ≥ 1; this only triggers on non-finite input.
            return Err(Error::InvalidValue("Cholesky pivot is not positive".into()));
        }
        let djj = d.sqrt();
        l[j * m + j] = djj;
        ops.mul(1);
        for i in (j + 1)..m {
            let mut s = g[i * m + j];
            for p in 0..j {
                s -= l[i * m + p] * l[j * m + p];
            }
            l[i * m + j] = s / djj;
        }
        ops.dot((m - j - 1) * j);
        ops.mul(m - j - 1);
    }
    ops.cmp(m);
    Ok(Cholesky { n: m, l })
}

impl Cholesky {
    fn solve(&self, b: &[f64], ops: &mut CostCounter) -> Vector {
        let n = self.n;
        let l = &self.l;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for p in 0..i {
                s -= l[i * n + p] * x[p];
            }
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in (i + 1)..n {
                s -= l[p * n + i] * x[p];
            }
            x[i] = s / l[i * n + i];
        }
        ops.dot(n * (n - 1));
        ops.mul(2 * n);
        Vector::from(x)
    }
}
