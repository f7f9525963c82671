use super::matrix::{dot, Matrix, Vector};
use super::{CostCounter, TOLERANCES};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition M = W Vᵀ with W = U Σ.
///
/// `scaled_left[j]` is σ_j u_j (a column of M V), `right` holds the
/// right singular vectors as columns of length `cols(M)`. Values are not
/// sorted; when M has more columns than rows the surplus singular values
/// are (numerically) zero.
#[derive(Debug, Clone)]
pub struct Svd {
    pub singular_values: Vec<f64>,
    pub scaled_left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    /// Index and value of the smallest singular value; ties go to the lowest index.
    pub fn argmin(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (j, &s) in self.singular_values.iter().enumerate() {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((j, s));
            }
        }
        best
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Pairs of columns are rotated until every pair is orthogonal to machine
/// precision; this is the Jacobi eigen-iteration on MᵀM carried out without
/// forming MᵀM, so small singular values keep full absolute accuracy.
pub fn jacobi_svd(m: &Matrix, ops: &mut CostCounter) -> Svd {
    let rows = m.rows();
    let n = m.cols();
    let mut w = m.columns();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = w.iter().map(|c| dot(c, c)).collect();
    ops.dot(rows * n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                let gamma = dot(&w[p], &w[q]);
                ops.dot(rows);
                ops.cmp(2);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                ops.mul(10);
                ops.add(5);
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                ops.mul(4 * (rows + n));
                ops.add(2 * (rows + n));
                norms[p] = dot(&w[p], &w[p]);
                norms[q] = dot(&w[q], &w[q]);
                ops.dot(2 * rows);
            }
        }
        if !rotated {
            break;
        }
    }

    let singular_values = norms.iter().map(|s| s.sqrt()).collect();
    ops.mul(n);
    Svd {
        singular_values,
        scaled_left: w,
        right: v,
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// σ_min(M); zero is a legitimate answer.
pub fn smallest_singular_value(m: &Matrix) -> f64 {
    smallest_singular_pair(m, &mut CostCounter::new()).0
}

/// σ_min(M) together with a unit right singular vector attaining it.
pub fn smallest_singular_pair(m: &Matrix, ops: &mut CostCounter) -> (f64, Vector) {
    if m.cols() == 0 {
        return (0.0, Vector::zeros(0));
    }
    let svd = jacobi_svd(m, ops);
    let (j, s) = svd.argmin().expect("at least one column");
    (s, Vector::from(svd.right[j].clone()))
}

/// Least-squares coefficients of `y` on the columns of `a_sub`.
pub fn least_squares(a_sub: &Matrix, y: &[f64]) -> Result<Vector> {
    least_squares_counted(a_sub, y, &mut CostCounter::new())
}

/// [`least_squares`] with operation counting.
///
/// Solves through the pseudo-inverse V Σ⁻¹ Uᵀ y of the Jacobi SVD and fails
/// with `RankDeficient` when σ_min < 1e-12 · σ_max.
pub fn least_squares_counted(a_sub: &Matrix, y: &[f64], ops: &mut CostCounter) -> Result<Vector> {
    if a_sub.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "least squares with {} rows and rhs of length {}",
            a_sub.rows(),
            y.len()
        )));
    }
    let n = a_sub.cols();
    if n == 0 {
        return Ok(Vector::zeros(0));
    }
    let svd = jacobi_svd(a_sub, ops);
    let sigma_max = svd.sigma_max();
    let (_, sigma_min) = svd.argmin().expect("nonempty");
    ops.cmp(2 * n);
    if sigma_max == 0.0 || sigma_min < TOLERANCES.rank_relative * sigma_max {
        return Err(Error::RankDeficient {
            sigma_min,
            sigma_max,
        });
    }
    let mut coef = vec![0.0; n];
    for (j, wj) in svd.scaled_left.iter().enumerate() {
        let s2 = svd.singular_values[j] * svd.singular_values[j];
        let weight = dot(wj, y) / s2;
        ops.dot(y.len());
        ops.mul(2);
        for (c, vj) in coef.iter_mut().zip(&svd.right[j]) {
            *c += weight * vj;
        }
        ops.dot(n);
    }
    Ok(Vector::from(coef))
}
