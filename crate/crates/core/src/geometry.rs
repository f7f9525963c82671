//! Restricted distinguishability γ_r(A) = min over r-sparse h ≠ 0 of ‖Ah‖₂ / ‖h‖₂.
//!
//! The minimum over h with support S is σ_min(A_S), and enlarging S can only
//! lower it, so γ_r is the minimum of σ_min(A_S) over supports of size exactly
//! r. Three routes are exposed and always reported side by side:
//! exhaustive enumeration (exact), random supports (an upper bound) and the
//! Gershgorin coherence bound (a lower bound).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionaries::{matrix_coherence, EffectiveSensing};
use crate::error::{Error, Result};
use crate::numerics::{
    binomial, smallest_singular_pair, Combinations, CostCounter, Matrix, RandomStream, Vector,
    TOLERANCES,
};

/// Largest number of supports `gamma_exact` will enumerate.
pub const GAMMA_ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    Exact,
    Sampled,
    Bound,
}

impl FromStr for GammaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "sampled" => Ok(Self::Sampled),
            "bound" => Ok(Self::Bound),
            other => Err(Error::Parse(format!("unknown gamma mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Injectivity {
    Yes,
    No,
    Unknown,
}

impl fmt::Display for Injectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Yes => "yes",
            Self::No => "no",
            Self::Unknown => "unknown",
        })
    }
}

/// Outcome of a minimum search over supports.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSearch {
    /// Minimum σ_min(A_S), already snapped to 0 below the zero threshold.
    pub gamma: f64,
    /// First support (in search order) attaining the minimum.
    pub support: Vec<usize>,
    /// Kernel direction in R^N when `gamma` is 0.
    pub witness: Option<Vector>,
    pub supports_examined: u128,
}

fn check_r(a: &Matrix, r: usize) -> Result<()> {
    if r == 0 || r > a.cols() {
        return Err(Error::InvalidSparsity(format!(
            "r must lie in [1, {}], got {r}",
            a.cols()
        )));
    }
    Ok(())
}

fn zero_threshold(a: &Matrix) -> f64 {
    TOLERANCES.gamma_zero * a.max_column_norm()
}

fn search(a: &Matrix, supports: impl Iterator<Item = Vec<usize>>) -> SupportSearch {
    let mut ops = CostCounter::new();
    let mut best: Option<(f64, Vec<usize>, Vector)> = None;
    let mut examined: u128 = 0;
    for s in supports {
        examined += 1;
        let (sigma, v) = smallest_singular_pair(&a.select_columns(&s), &mut ops);
        if best.as_ref().is_none_or(|(b, _, _)| sigma < *b) {
            best = Some((sigma, s, v));
        }
    }
    let (sigma, support, v) = best.expect("at least one support");
    if sigma < zero_threshold(a) {
        let mut w = Vector::zeros(a.cols());
        for (slot, &j) in support.iter().enumerate() {
            w[j] = v[slot];
        }
        SupportSearch {
            gamma: 0.0,
            support,
            witness: Some(w),
            supports_examined: examined,
        }
    } else {
        SupportSearch {
            gamma: sigma,
            support,
            witness: None,
            supports_examined: examined,
        }
    }
}

/// Exhaustive γ_r over all supports in colex order, with witness when zero.
pub fn gamma_exact_search(a: &Matrix, r: usize) -> Result<SupportSearch> {
    check_r(a, r)?;
    let count = binomial(a.cols(), r);
    if count > GAMMA_ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            requested: count,
            limit: GAMMA_ENUMERATION_LIMIT,
        });
    }
    Ok(search(a, Combinations::new(a.cols(), r)))
}

/// γ_r(A) by enumeration; 0 exactly when A is not injective on r-sparse vectors.
pub fn gamma_exact(a: &EffectiveSensing, r: usize) -> Result<f64> {
    Ok(gamma_exact_search(a.a(), r)?.gamma)
}

/// Minimum over `trials` random supports: an upper bound on γ_r.
///
/// When `trials` reaches the number of supports, all of them are enumerated
/// instead, which makes the value exact.
pub fn gamma_sampled_search(
    a: &Matrix,
    r: usize,
    trials: usize,
    stream: &mut RandomStream,
) -> Result<SupportSearch> {
    check_r(a, r)?;
    if trials == 0 {
        return Err(Error::InvalidValue("gamma_sampled needs at least one trial".into()));
    }
    if trials as u128 >= binomial(a.cols(), r) {
        return Ok(search(a, Combinations::new(a.cols(), r)));
    }
    let n = a.cols();
    let draws = (0..trials).map(|_| {
        let mut s = stream.sample_without_replacement(n, r);
        s.sort_unstable();
        s
    });
    Ok(search(a, draws))
}

pub fn gamma_sampled(
    a: &EffectiveSensing,
    r: usize,
    trials: usize,
    stream: &mut RandomStream,
) -> Result<f64> {
    Ok(gamma_sampled_search(a.a(), r, trials, stream)?.gamma)
}

/// √max(0, 1 − (r−1)μ) for unit-norm columns (Gershgorin on the Gram matrix).
pub fn gamma_lower_coherence(a: &EffectiveSensing, r: usize) -> Result<f64> {
    a.require_normalized()?;
    check_r(a.a(), r)?;
    Ok(coherence_bound(a.a(), r))
}

/// Coherence bound for arbitrary column norms: writing A = B·D with unit
/// columns B, σ_min(A_S) ≥ σ_min(B_S)·min_j ‖a_j‖.
fn coherence_bound(a: &Matrix, r: usize) -> f64 {
    let min_norm = a.column_norms().into_iter().fold(f64::INFINITY, f64::min);
    if min_norm == 0.0 {
        return 0.0;
    }
    let mu = matrix_coherence(a);
    let unit = (1.0 - (r as f64 - 1.0) * mu).max(0.0).sqrt();
    if (min_norm - 1.0).abs() <= TOLERANCES.unit_norm {
        unit
    } else {
        unit * min_norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationOutcome {
    pub holds: bool,
    /// ‖A(z₁ − z₂)‖₂ / γ − ‖z₁ − z₂‖₂.
    pub slack: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Checks ‖z₁ − z₂‖₂ ≤ ‖A(z₁ − z₂)‖₂ / γ_{2k} with relative slack 1e-9.
pub fn perturbation_check(
    a: &EffectiveSensing,
    z1: &[f64],
    z2: &[f64],
    gamma_2k: f64,
) -> Result<PerturbationOutcome> {
    if gamma_2k <= TOLERANCES.gamma_zero {
        return Err(Error::DegenerateGamma { gamma: gamma_2k });
    }
    if z1.len() != a.n() || z2.len() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "perturbation vectors of length {}/{} for {} columns",
            z1.len(),
            z2.len(),
            a.n()
        )));
    }
    let h = Vector::from(z1.to_vec()).sub(z2);
    let lhs = h.norm2();
    let rhs = a.a().mul_vec(&h).norm2() / gamma_2k;
    let slack = rhs - lhs;
    let holds = slack >= -TOLERANCES.perturbation_relative * lhs.max(rhs);
    Ok(PerturbationOutcome {
        holds,
        slack,
        lhs,
        rhs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub r: usize,
    pub gamma_exact: Option<f64>,
    pub gamma_upper: f64,
    pub gamma_lower: f64,
    pub injective_on_r_sparse: Injectivity,
    pub witness: Option<Vector>,
    pub supports_examined: u128,
    pub method: String,
}

impl GeometryReport {
    /// Value used when a single γ is needed: exact if available, else the
    /// given side of the bracket.
    pub fn gamma_or(&self, fallback: f64) -> f64 {
        self.gamma_exact.unwrap_or(fallback)
    }

    pub const CSV_HEADER: &'static str =
        "r,gamma_exact,gamma_upper,gamma_lower,injective,supports_examined,method";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.r,
            self.gamma_exact.map(|g| g.to_string()).unwrap_or_default(),
            self.gamma_upper,
            self.gamma_lower,
            self.injective_on_r_sparse,
            self.supports_examined,
            self.method
        )
    }

    pub fn markdown(&self) -> String {
        let mut s = String::from("| quantity | value |\n|---|---|\n");
        s += &format!("| r | {} |\n", self.r);
        s += &format!(
            "| γ_r (exact) | {} |\n",
            self.gamma_exact.map_or("n/a".to_string(), |g| format!("{g:.12}"))
        );
        s += &format!("| γ_r upper (sampled) | {:.12} |\n", self.gamma_upper);
        s += &format!("| γ_r lower (coherence) | {:.12} |\n", self.gamma_lower);
        s += &format!("| injective on r-sparse | {} |\n", self.injective_on_r_sparse);
        s += &format!("| supports examined | {} |\n", self.supports_examined);
        s += &format!("| method | {} |\n", self.method);
        if let Some(w) = &self.witness {
            let entries: Vec<String> = w
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| format!("{i}:{v:.6}"))
                .collect();
            s += &format!("| kernel witness | {} |\n", entries.join(" "));
        }
        s
    }
}

/// Exact / sampled / coherence-bound triple for γ_r.
///
/// In `Exact` mode an oversized enumeration degrades to the two bounds and
/// says so in `method`; `Bound` mode uses γ_1 (smallest column norm) as the
/// upper end.
pub fn geometry_report(
    a: &EffectiveSensing,
    r: usize,
    mode: GammaMode,
    trials: usize,
    stream: &mut RandomStream,
) -> Result<GeometryReport> {
    let m = a.a();
    check_r(m, r)?;
    let gamma_lower = coherence_bound(m, r);
    let mut report = GeometryReport {
        r,
        gamma_exact: None,
        gamma_upper: 0.0,
        gamma_lower,
        injective_on_r_sparse: Injectivity::Unknown,
        witness: None,
        supports_examined: 0,
        method: String::new(),
    };

    let exact = if mode == GammaMode::Exact {
        match gamma_exact_search(m, r) {
            Ok(s) => Some(s),
            Err(Error::EnumerationTooLarge { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    match (mode, exact) {
        (_, Some(ex)) => {
            let sampled = gamma_sampled_search(m, r, trials.max(1), stream)?;
            report.gamma_exact = Some(ex.gamma);
            report.gamma_upper = sampled.gamma;
            report.injective_on_r_sparse = if ex.gamma > 0.0 {
                Injectivity::Yes
            } else {
                Injectivity::No
            };
            report.witness = ex.witness;
            report.supports_examined = ex.supports_examined;
            report.method = "exact".into();
        }
        (GammaMode::Bound, None) => {
            let gamma_1 = m.column_norms().into_iter().fold(f64::INFINITY, f64::min);
            report.gamma_upper = if gamma_1 < zero_threshold(m) { 0.0 } else { gamma_1 };
            report.method = "bound".into();
            if report.gamma_lower > 0.0 {
                report.injective_on_r_sparse = Injectivity::Yes;
            }
        }
        (_, None) => {
            let sampled = gamma_sampled_search(m, r, trials.max(1), stream)?;
            report.gamma_upper = sampled.gamma;
            report.supports_examined = sampled.supports_examined;
            report.method = if mode == GammaMode::Exact {
                "sampled+bound (exact enumeration too large)".into()
            } else {
                "sampled".into()
            };
            if report.gamma_lower > 0.0 {
                report.injective_on_r_sparse = Injectivity::Yes;
            } else if sampled.gamma == 0.0 {
                report.injective_on_r_sparse = Injectivity::No;
                report.witness = sampled.witness;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionaries::{build_sensing, compose, SensingKind};
    use crate::numerics::smallest_singular_value;
    use proptest::prelude::*;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn es(cols: &[Vec<f64>]) -> EffectiveSensing {
        EffectiveSensing::from_matrix(Matrix::from_columns(cols).unwrap())
    }

    fn three_column() -> EffectiveSensing {
        es(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![H, H]])
    }

    fn gaussian_a(m: usize, n: usize, seed: u64) -> EffectiveSensing {
        let phi = build_sensing(SensingKind::Gaussian, m, n, seed).unwrap();
        EffectiveSensing::from_matrix(phi.phi().clone()).normalized().unwrap()
    }

    /// Independent oracle: minimum over *all* supports of size ≤ r, without
    /// relying on the size-exactly-r reduction.
    fn gamma_oracle(a: &Matrix, r: usize) -> f64 {
        let n = a.cols();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) {
            if mask.count_ones() as usize > r {
                continue;
            }
            let s: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            best = best.min(smallest_singular_value(&a.select_columns(&s)));
        }
        best
    }

    #[test]
    fn identity_gamma_is_one() {
        let a = EffectiveSensing::from_matrix(Matrix::identity(4));
        assert!((gamma_exact(&a, 2).unwrap() - 1.0).abs() < 1e-15);
        let mut s = RandomStream::new(1, 1);
        assert!((gamma_sampled(&a, 2, 3, &mut s).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(gamma_lower_coherence(&a, 3).unwrap(), 1.0);
    }

    #[test]
    fn duplicate_columns_have_witness() {
        let a = es(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = gamma_exact_search(a.a(), 2).unwrap();
        assert_eq!(s.gamma, 0.0);
        assert_eq!(s.support, vec![0, 1]);
        let w = s.witness.unwrap();
        assert!(a.a().mul_vec(&w).norm2() <= 1e-10 * w.norm2());
        assert!((w[0] + w[1]).abs() < 1e-14 && w[2] == 0.0);
        assert!((w[0].abs() - H).abs() < 1e-14);
    }

    #[test]
    fn three_column_example() {
        let a = three_column();
        let expect = (1.0 - H).sqrt();
        assert!((gamma_exact(&a, 2).unwrap() - expect).abs() < 1e-12);
        assert!((gamma_oracle(a.a(), 2) - expect).abs() < 1e-12);
        let s3 = gamma_exact_search(a.a(), 3).unwrap();
        assert_eq!(s3.gamma, 0.0);
        let w = s3.witness.unwrap();
        // kernel ∝ (1, 1, −√2)
        let scale = w[0];
        assert!((w[1] - scale).abs() < 1e-12);
        assert!((w[2] + 2f64.sqrt() * scale).abs() < 1e-12);
        assert!((gamma_lower_coherence(&a, 2).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn coherence_bound_clamps() {
        // Five unit vectors with every pairwise inner product 0.3: columns of
        // the Cholesky factor of the equicorrelated Gram matrix.
        let g = Matrix::from_fn(5, 5, |i, j| if i == j { 1.0 } else { 0.3 });
        let a = EffectiveSensing::from_matrix(cholesky(&g).transpose());
        assert!((self_coherence_of(&a) - 0.3).abs() < 1e-12);
        assert!((gamma_lower_coherence(&a, 2).unwrap() - 0.7f64.sqrt()).abs() < 1e-12);
        assert_eq!(gamma_lower_coherence(&a, 5).unwrap(), 0.0);
        // the bound stays below the exact value: γ_5 = √0.7 (smallest Gram eigenvalue)
        assert!((gamma_exact(&a, 5).unwrap() - 0.7f64.sqrt()).abs() < 1e-12);
    }

    fn self_coherence_of(a: &EffectiveSensing) -> f64 {
        crate::dictionaries::self_coherence(a).unwrap()
    }

    fn cholesky(g: &Matrix) -> Matrix {
        let n = g.rows();
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = g.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    l.set(i, j, s.sqrt());
                } else {
                    l.set(i, j, s / l.get(j, j));
                }
            }
        }
        l
    }

    #[test]
    fn sampled_exhausts_when_trials_cover_supports() {
        for seed in 0..10 {
            let a = gaussian_a(8, 12, seed);
            let exact = gamma_exact(&a, 2).unwrap();
            let sampled = gamma_sampled(&a, 2, 66, &mut RandomStream::new(seed, 2)).unwrap();
            assert!((exact - sampled).abs() <= 1e-12);
            let partial = gamma_sampled(&a, 2, 10, &mut RandomStream::new(seed, 3)).unwrap();
            assert!(partial >= exact);
        }
    }

    #[test]
    fn error_paths() {
        let a = three_column();
        assert!(matches!(gamma_exact(&a, 0), Err(Error::InvalidSparsity(_))));
        assert!(matches!(gamma_exact(&a, 4), Err(Error::InvalidSparsity(_))));
        let big = gaussian_a(4, 64, 1);
        assert!(matches!(gamma_exact(&big, 6), Err(Error::EnumerationTooLarge { .. })));
        let raw = es(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(gamma_lower_coherence(&raw, 2), Err(Error::NotNormalized { .. })));
        assert!(matches!(
            perturbation_check(&a, &[0.0; 3], &[0.0; 3], 1e-11),
            Err(Error::DegenerateGamma { .. })
        ));
    }

    #[test]
    fn perturbation_examples() {
        let a = EffectiveSensing::from_matrix(Matrix::identity(4));
        let z = [1.0, 0.0, -2.0, 0.0];
        let same = perturbation_check(&a, &z, &z, 1.0).unwrap();
        assert!(same.holds && same.slack == 0.0 && same.lhs == 0.0);
        let other = [0.0, 3.0, -2.0, 0.0];
        let iso = perturbation_check(&a, &z, &other, 1.0).unwrap();
        assert!(iso.holds && iso.slack.abs() < 1e-15);
        let too_big = perturbation_check(&a, &z, &other, 2.0).unwrap();
        assert!(!too_big.holds);
    }

    #[test]
    fn report_modes() {
        let a = three_column();
        let mut s = RandomStream::new(3, 3);
        let exact = geometry_report(&a, 2, GammaMode::Exact, 2, &mut s).unwrap();
        assert_eq!(exact.method, "exact");
        assert_eq!(exact.injective_on_r_sparse, Injectivity::Yes);
        let g = exact.gamma_exact.unwrap();
        assert!(exact.gamma_lower <= g + 1e-12 && g <= exact.gamma_upper + 1e-15);

        let dep = geometry_report(&a, 3, GammaMode::Exact, 1, &mut s).unwrap();
        assert_eq!(dep.injective_on_r_sparse, Injectivity::No);
        assert!(dep.witness.is_some());

        let big = gaussian_a(4, 64, 1);
        let fallback = geometry_report(&big, 6, GammaMode::Exact, 50, &mut s).unwrap();
        assert!(fallback.gamma_exact.is_none());
        assert!(fallback.method.contains("too large"));
        // 6 columns in R^4 are always dependent
        assert_eq!(fallback.gamma_upper, 0.0);
        assert_eq!(fallback.injective_on_r_sparse, Injectivity::No);

        let bound = geometry_report(&a, 2, GammaMode::Bound, 1, &mut s).unwrap();
        assert!((bound.gamma_upper - 1.0).abs() < 1e-15);
        assert!(bound.gamma_lower > 0.0);
        assert!(exact.csv_row().starts_with("2,"));
    }

    #[test]
    fn adding_rows_never_decreases_gamma() {
        let psi = crate::dictionaries::build_dictionary(
            crate::dictionaries::DictionaryKind::RandomOrthonormal,
            10,
            4,
        )
        .unwrap();
        let mut prev = 0.0;
        for m in 1..=10 {
            let phi = build_sensing(SensingKind::RowSubsample, m, 10, 9).unwrap();
            let a = compose(&phi, &psi, false).unwrap();
            let g = gamma_exact(&a, 3).unwrap();
            assert!(g + 1e-12 >= prev, "m={m}: {g} < {prev}");
            prev = g;
        }
        assert!((prev - 1.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn exact_matches_oracle_and_orders(seed in 0u64..200, m in 2usize..6, n in 3usize..8) {
            let a = gaussian_a(m, n, seed);
            let mut prev = f64::INFINITY;
            for r in 1..=n.min(4) {
                let g = gamma_exact(&a, r).unwrap();
                let oracle = gamma_oracle(a.a(), r);
                let snapped = if oracle < 1e-10 { 0.0 } else { oracle };
                prop_assert!((g - snapped).abs() < 1e-10);
                prop_assert!(g <= prev + 1e-15);
                prop_assert!(gamma_lower_coherence(&a, r).unwrap() <= g + 1e-12);
                let mut s = RandomStream::new(seed, r as u64);
                prop_assert!(gamma_sampled(&a, r, 5, &mut s).unwrap() >= g);
                prev = g;
            }
            prop_assert!((gamma_exact(&a, 1).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn zero_gamma_iff_sparse_kernel(seed in 0u64..300, dup in any::<bool>()) {
            let mut cols = gaussian_a(4, 6, seed).a().columns();
            if dup {
                cols[5] = cols[1].iter().map(|v| -v).collect();
            }
            let a = es(&cols);
            let s = gamma_exact_search(a.a(), 2).unwrap();
            // Exhaustive null-space search: a 2-sparse kernel vector exists iff two columns are parallel.
            let mut parallel = false;
            for i in 0..6 {
                for j in (i + 1)..6 {
                    let ip: f64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
                    if (ip.abs() - 1.0).abs() < 1e-12 {
                        parallel = true;
                    }
                }
            }
            prop_assert_eq!(s.gamma == 0.0, parallel);
            prop_assert_eq!(s.witness.is_some(), parallel);
        }
    }
}
