//! The uncertainty functional 𝔘_k, its ln 2 floor, the measurement-inflation
//! ratio, the sample threshold and the regime classifier.
//!
//! Logarithms are natural throughout. Both log(d/r) factors are regularized
//! as ln(d/r) + 1 so that dense signals (r = d) still need m = d.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometryReport;
use crate::numerics::TOLERANCES;

/// 𝔘_k = K_Ψ · (1/γ_{2k}) · ln(1 + C).
pub fn uncertainty_functional(k_psi: usize, gamma_2k: f64, cost: u64) -> Result<f64> {
    check_gamma(gamma_2k)?;
    if k_psi == 0 {
        return Err(Error::InvalidSparsity("K_psi must be >= 1".into()));
    }
    if cost == 0 {
        return Err(Error::InvalidValue("cost must be >= 1".into()));
    }
    Ok(k_psi as f64 / gamma_2k * (cost as f64).ln_1p())
}

/// (K_Ψ / γ_{2k}) · ln 2, the value of 𝔘_k at the smallest admissible cost.
pub fn nonvanishing_bound(k_psi: usize, gamma_2k: f64) -> Result<f64> {
    check_gamma(gamma_2k)?;
    Ok(k_psi as f64 / gamma_2k * std::f64::consts::LN_2)
}

fn check_gamma(gamma_2k: f64) -> Result<()> {
    if gamma_2k.is_nan() {
        return Err(Error::InvalidValue("gamma is NaN".into()));
    }
    if gamma_2k <= TOLERANCES.gamma_zero {
        return Err(Error::DegenerateGamma { gamma: gamma_2k });
    }
    Ok(())
}

/// k_eff (ln(d/k_eff) + 1) / (k (ln(d/k) + 1)).
pub fn inflation_ratio(k: usize, k_eff: usize, d: usize) -> Result<f64> {
    if k == 0 || k > k_eff || k_eff > d {
        return Err(Error::InvalidSparsity(format!(
            "need 1 <= k <= k_eff <= d, got k = {k}, k_eff = {k_eff}, d = {d}"
        )));
    }
    Ok(covering(k_eff, d) / covering(k, d))
}

/// ceil(c0 · k · (ln(n/k) + 1)).
pub fn sample_threshold(k: usize, n: usize, c0: f64) -> Result<usize> {
    if k == 0 || k > n {
        return Err(Error::InvalidSparsity(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidValue(format!("c0 must be positive, got {c0}")));
    }
    Ok((c0 * covering(k, n)).ceil() as usize)
}

fn covering(r: usize, d: usize) -> f64 {
    r as f64 * ((d as f64 / r as f64).ln() + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeThresholds {
    pub gamma_zero_tol: f64,
    /// The constant c in γ_{2k} ≥ c.
    pub stable_c: f64,
    /// Constant in front of k (ln(N/k) + 1).
    pub sample_c0: f64,
    pub battery_success_min: f64,
    pub battery_fail_max: f64,
    /// Minimum number of planted trials behind the battery rates.
    pub trials: usize,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            gamma_zero_tol: 1e-10,
            stable_c: 0.1,
            sample_c0: 1.0,
            battery_success_min: 0.9,
            battery_fail_max: 0.5,
            trials: 20,
        }
    }
}

impl RegimeThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.battery_fail_max
            && self.battery_fail_max < self.battery_success_min
            && self.battery_success_min <= 1.0;
        if !ok {
            return Err(Error::InvalidValue(format!(
                "need 0 < battery_fail_max < battery_success_min <= 1, got {} and {}",
                self.battery_fail_max, self.battery_success_min
            )));
        }
        if !(self.gamma_zero_tol >= 0.0 && self.stable_c > 0.0 && self.sample_c0 > 0.0) {
            return Err(Error::InvalidValue(
                "gamma_zero_tol must be >= 0, stable_c and sample_c0 > 0".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidValue("trials must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    NonUnique,
    Opaque,
    Stable,
    Indeterminate,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NonUnique => "non-unique",
            Self::Opaque => "opaque",
            Self::Stable => "stable",
            Self::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non-unique" => Ok(Self::NonUnique),
            "opaque" => Ok(Self::Opaque),
            "stable" => Ok(Self::Stable),
            "indeterminate" => Ok(Self::Indeterminate),
            other => Err(Error::Parse(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeLabel {
    pub regime: Regime,
    pub evidence: String,
}

/// Success rates of a battery over planted instances. A solver that was not
/// run has no rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatteryStats {
    pub trials: usize,
    pub l0: Option<f64>,
    pub omp: Option<f64>,
    pub bp: Option<f64>,
}

impl BatteryStats {
    /// Rates from success counts out of `trials`.
    pub fn from_counts(trials: usize, l0: Option<usize>, omp: Option<usize>, bp: Option<usize>) -> Self {
        let rate = |c: Option<usize>| c.map(|c| if trials == 0 { 0.0 } else { c as f64 / trials as f64 });
        Self {
            trials,
            l0: rate(l0),
            omp: rate(omp),
            bp: rate(bp),
        }
    }

    /// Best rate among the polynomial-time solvers.
    pub fn best_polynomial(&self) -> Option<f64> {
        match (self.omp, self.bp) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Decision procedure, first match wins:
/// 1. γ_{2k} ≤ gamma_zero_tol → non-unique;
/// 2. γ_{2k} ≥ stable_c, m ≥ sample threshold and best polynomial success
///    ≥ battery_success_min → stable;
/// 3. ℓ0 success ≥ battery_success_min and best polynomial success
///    ≤ battery_fail_max → opaque;
/// 4. indeterminate.
///
/// Without an exact γ the non-unique test uses the upper end of the bracket
/// and the stable test the lower end.
pub fn classify_regime(
    geom: &GeometryReport,
    m: usize,
    n: usize,
    k: usize,
    stats: &BatteryStats,
    thresholds: &RegimeThresholds,
) -> Result<RegimeLabel> {
    thresholds.validate()?;
    if geom.r != 2 * k {
        return Err(Error::InvalidValue(format!(
            "geometry computed at r = {} but k = {k} needs r = {}",
            geom.r,
            2 * k
        )));
    }
    if stats.trials < thresholds.trials {
        return Err(Error::InsufficientEvidence {
            have: stats.trials,
            need: thresholds.trials,
        });
    }
    let gamma_high = geom.gamma_or(geom.gamma_upper);
    let gamma_low = geom.gamma_or(geom.gamma_lower);
    let gamma_note = match geom.gamma_exact {
        Some(g) => format!("γ_{} = {g:.6}", geom.r),
        None => format!("γ_{} ∈ [{gamma_low:.6}, {gamma_high:.6}]", geom.r),
    };

    if gamma_high <= thresholds.gamma_zero_tol {
        let witness = if geom.witness.is_some() { " (kernel witness found)" } else { "" };
        return Ok(RegimeLabel {
            regime: Regime::NonUnique,
            evidence: format!("{gamma_note} ≤ {:e}{witness}", thresholds.gamma_zero_tol),
        });
    }

    let threshold = sample_threshold(k, n, thresholds.sample_c0)?;
    let best = stats.best_polynomial();
    let fmt_rate = |r: Option<f64>| r.map_or("n/a".to_string(), |r| format!("{r:.3}"));
    let rates = format!(
        "l0 {}, omp {}, bp {} over {} trials",
        fmt_rate(stats.l0),
        fmt_rate(stats.omp),
        fmt_rate(stats.bp),
        stats.trials
    );

    let geometry_ok = gamma_low >= thresholds.stable_c;
    let budget_ok = m >= threshold;
    let efficient = best.is_some_and(|b| b >= thresholds.battery_success_min);
    if geometry_ok && budget_ok && efficient {
        return Ok(RegimeLabel {
            regime: Regime::Stable,
            evidence: format!("{gamma_note} ≥ {}, m = {m} ≥ {threshold}, {rates}", thresholds.stable_c),
        });
    }

    let oracle_ok = stats.l0.is_some_and(|r| r >= thresholds.battery_success_min);
    let poly_fail = best.is_some_and(|b| b <= thresholds.battery_fail_max);
    if oracle_ok && poly_fail {
        return Ok(RegimeLabel {
            regime: Regime::Opaque,
            evidence: format!(
                "{gamma_note} > 0, oracle succeeds but polynomial solvers fail (empirical surrogate); {rates}"
            ),
        });
    }

    let mut missing = Vec::new();
    if !geometry_ok {
        missing.push(format!("γ lower {gamma_low:.6} < {}", thresholds.stable_c));
    }
    if !budget_ok {
        missing.push(format!("m = {m} < threshold {threshold}"));
    }
    if !efficient {
        missing.push("polynomial solvers below success_min".to_string());
    }
    if !oracle_ok {
        missing.push("oracle below success_min".to_string());
    }
    Ok(RegimeLabel {
        regime: Regime::Indeterminate,
        evidence: format!("{gamma_note}; {}; {rates}", missing.join("; ")),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyReport {
    pub k: usize,
    pub k_psi: usize,
    pub gamma_2k: f64,
    pub cost: u64,
    /// +∞ when γ_{2k} is degenerate.
    pub u_value: f64,
    pub lower_bound: f64,
    pub regime: Regime,
}

impl UncertaintyReport {
    /// Evaluates 𝔘_k and its floor. A degenerate γ_{2k} yields an infinite
    /// value and forces the non-unique label.
    pub fn new(k: usize, k_psi: usize, gamma_2k: f64, cost: u64, regime: Regime) -> Result<Self> {
        match uncertainty_functional(k_psi, gamma_2k, cost) {
            Ok(u_value) => Ok(Self {
                k,
                k_psi,
                gamma_2k,
                cost,
                u_value,
                lower_bound: nonvanishing_bound(k_psi, gamma_2k)?,
                regime,
            }),
            Err(Error::DegenerateGamma { .. }) => Ok(Self {
                k,
                k_psi,
                gamma_2k,
                cost,
                u_value: f64::INFINITY,
                lower_bound: f64::INFINITY,
                regime: Regime::NonUnique,
            }),
            Err(e) => Err(e),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.u_value.is_infinite()
    }

    /// Positivity and the ln 2 floor.
    pub fn satisfies_bounds(&self) -> bool {
        self.u_value > 0.0 && self.u_value >= self.lower_bound
    }

    pub const CSV_HEADER: &'static str = "k,k_psi,gamma_2k,cost,u_value,lower_bound,regime";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.k, self.k_psi, self.gamma_2k, self.cost, self.u_value, self.lower_bound, self.regime
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionaries::EffectiveSensing;
    use crate::geometry::{geometry_report, GammaMode, Injectivity};
    use crate::numerics::{Matrix, RandomStream};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn functional_minimal_input_is_ln2() {
        assert!((uncertainty_functional(1, 1.0, 1).unwrap() - LN_2).abs() <= 1e-12);
        assert!((nonvanishing_bound(1, 1.0).unwrap() - LN_2).abs() <= 1e-12);
    }

    #[test]
    fn functional_worked_value() {
        // 4 ln 101 = 18.460482..., evaluated here through ln(101) = ln(100) + ln(1.01)
        let oracle = 4.0 * (2.0 * 10f64.ln() + 0.01f64.ln_1p());
        let u = uncertainty_functional(2, 0.5, 100).unwrap();
        assert!((u - oracle).abs() <= 1e-12);
        assert!((u - 18.4604821).abs() <= 1e-7);
        let floor = nonvanishing_bound(2, 0.5).unwrap();
        assert!((floor - 4.0 * LN_2).abs() <= 1e-12);
        assert!((floor - 2.77259).abs() < 1e-5);
        assert!(u >= floor);
    }

    #[test]
    fn functional_diverges_at_zero_gamma() {
        assert!(matches!(
            uncertainty_functional(1, 1e-12, 10),
            Err(Error::DegenerateGamma { .. })
        ));
        assert!(matches!(nonvanishing_bound(3, 0.0), Err(Error::DegenerateGamma { .. })));
        let r = UncertaintyReport::new(1, 1, 1e-12, 10, Regime::Stable).unwrap();
        assert!(r.is_degenerate());
        assert_eq!(r.regime, Regime::NonUnique);
        assert!(r.satisfies_bounds());
    }

    #[test]
    fn functional_rejects_bad_counts() {
        assert!(uncertainty_functional(0, 1.0, 1).is_err());
        assert!(uncertainty_functional(1, 1.0, 0).is_err());
        assert!(uncertainty_functional(1, f64::NAN, 1).is_err());
    }

    #[test]
    fn mismatch_bound_scales_with_d() {
        for d in [8usize, 32, 64] {
            let gamma = 0.37;
            let b = nonvanishing_bound(d, gamma).unwrap();
            assert!((b - d as f64 / gamma * LN_2).abs() <= 1e-12 * b);
            let report = UncertaintyReport::new(1, d, gamma, 1, Regime::Indeterminate).unwrap();
            assert_eq!(report.lower_bound, b);
        }
    }

    #[test]
    fn inflation_examples() {
        assert_eq!(inflation_ratio(4, 4, 64).unwrap(), 1.0);
        let dense = inflation_ratio(4, 64, 64).unwrap();
        assert!((dense - 64.0 / (4.0 * (16f64.ln() + 1.0))).abs() <= 1e-12);
        assert!((dense - 4.2411196).abs() < 1e-6);
        let mid = inflation_ratio(4, 16, 64).unwrap();
        assert!((mid - 16.0 * (4f64.ln() + 1.0) / (4.0 * (16f64.ln() + 1.0))).abs() <= 1e-12);
        assert!((mid - 2.5301400).abs() < 1e-6);
        assert!(inflation_ratio(0, 1, 4).is_err());
        assert!(inflation_ratio(5, 4, 64).is_err());
        assert!(inflation_ratio(4, 65, 64).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(sample_threshold(64, 64, 1.0).unwrap(), 64);
        assert_eq!(sample_threshold(3, 64, 1.0).unwrap(), 13);
        // ceil(2 · 12.18...) rounds once, after doubling
        let oracle = (2.0 * 3.0 * ((64.0f64 / 3.0).ln() + 1.0)).ceil() as usize;
        assert_eq!(sample_threshold(3, 64, 2.0).unwrap(), oracle);
        assert_eq!(oracle, 25);
        assert!(sample_threshold(0, 64, 1.0).is_err());
        assert!(sample_threshold(65, 64, 1.0).is_err());
        assert!(sample_threshold(3, 64, 0.0).is_err());
    }

    #[test]
    fn functional_monotone_on_grid() {
        let gammas = [0.05, 0.1, 0.3, 0.7, 1.0, 1.5];
        let costs = [1u64, 10, 1_000, 1_000_000];
        for k_psi in 1..6 {
            for &c in &costs {
                for w in gammas.windows(2) {
                    let hi = uncertainty_functional(k_psi, w[0], c).unwrap();
                    let lo = uncertainty_functional(k_psi, w[1], c).unwrap();
                    assert!(hi > lo);
                }
            }
            for &g in &gammas {
                for w in costs.windows(2) {
                    assert!(uncertainty_functional(k_psi, g, w[0]).unwrap() < uncertainty_functional(k_psi, g, w[1]).unwrap());
                }
                assert!(uncertainty_functional(k_psi, g, 50).unwrap() < uncertainty_functional(k_psi + 1, g, 50).unwrap());
            }
        }
    }

    #[test]
    fn thresholds_validate() {
        assert!(RegimeThresholds::default().validate().is_ok());
        let mut t = RegimeThresholds::default();
        t.battery_fail_max = 0.95;
        assert!(t.validate().is_err());
        t = RegimeThresholds::default();
        t.battery_success_min = 1.2;
        assert!(t.validate().is_err());
        t = RegimeThresholds::default();
        t.battery_fail_max = 0.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn thresholds_from_toml_reject_unknown_keys() {
        let t: RegimeThresholds = toml::from_str("stable_c = 0.2\ntrials = 5").unwrap();
        assert_eq!(t.stable_c, 0.2);
        assert_eq!(t.trials, 5);
        assert_eq!(t.sample_c0, 1.0);
        assert!(toml::from_str::<RegimeThresholds>("stable = 0.2").is_err());
    }

    fn exact_report(a: &Matrix, r: usize) -> GeometryReport {
        let a = EffectiveSensing::from_matrix(a.clone());
        geometry_report(&a, r, GammaMode::Exact, 10, &mut RandomStream::new(1, 0)).unwrap()
    }

    fn all_succeed(trials: usize) -> BatteryStats {
        BatteryStats::from_counts(trials, Some(trials), Some(trials), Some(trials))
    }

    #[test]
    fn identity_is_stable() {
        let geom = exact_report(&Matrix::identity(64), 2);
        let label = classify_regime(&geom, 64, 64, 1, &all_succeed(20), &RegimeThresholds::default()).unwrap();
        assert_eq!(label.regime, Regime::Stable, "{}", label.evidence);
    }

    #[test]
    fn duplicate_columns_are_non_unique() {
        let e1 = vec![1.0, 0.0, 0.0];
        let a = Matrix::from_columns(&[e1.clone(), vec![0.0, 1.0, 0.0], e1, vec![0.0, 0.0, 1.0]]).unwrap();
        let geom = exact_report(&a, 2);
        assert_eq!(geom.injective_on_r_sparse, Injectivity::No);
        let label = classify_regime(&geom, 3, 4, 1, &all_succeed(20), &RegimeThresholds::default()).unwrap();
        assert_eq!(label.regime, Regime::NonUnique);
        assert!(label.evidence.contains("witness"));
    }

    #[test]
    fn opaque_and_indeterminate() {
        let geom = exact_report(&Matrix::identity(8), 6);
        let t = RegimeThresholds::default();
        // m below the sample threshold, oracle succeeds, polynomial solvers fail
        let stats = BatteryStats::from_counts(20, Some(20), Some(4), Some(6));
        let label = classify_regime(&geom, 8, 64, 3, &stats, &t).unwrap();
        assert_eq!(label.regime, Regime::Opaque);
        let stats = BatteryStats::from_counts(20, Some(20), Some(14), Some(15));
        let label = classify_regime(&geom, 8, 64, 3, &stats, &t).unwrap();
        assert_eq!(label.regime, Regime::Indeterminate);
        assert!(label.evidence.contains("threshold 13"));
    }

    #[test]
    fn classifier_errors() {
        let geom = exact_report(&Matrix::identity(8), 2);
        let t = RegimeThresholds::default();
        assert!(matches!(
            classify_regime(&geom, 8, 8, 1, &all_succeed(5), &t),
            Err(Error::InsufficientEvidence { have: 5, need: 20 })
        ));
        assert!(classify_regime(&geom, 8, 8, 2, &all_succeed(20), &t).is_err());
    }

    #[test]
    fn bracket_used_without_exact_gamma() {
        let mut geom = exact_report(&Matrix::identity(8), 2);
        geom.gamma_exact = None;
        geom.gamma_upper = 1.0;
        geom.gamma_lower = 0.05;
        let t = RegimeThresholds::default();
        let label = classify_regime(&geom, 8, 8, 1, &all_succeed(20), &t).unwrap();
        assert_eq!(label.regime, Regime::Indeterminate);
        geom.gamma_lower = 0.2;
        let label = classify_regime(&geom, 8, 8, 1, &all_succeed(20), &t).unwrap();
        assert_eq!(label.regime, Regime::Stable);
        geom.gamma_upper = 0.0;
        geom.gamma_lower = 0.0;
        let label = classify_regime(&geom, 8, 8, 1, &all_succeed(20), &t).unwrap();
        assert_eq!(label.regime, Regime::NonUnique);
    }

    #[test]
    fn regime_labels_round_trip() {
        for r in [Regime::NonUnique, Regime::Opaque, Regime::Stable, Regime::Indeterminate] {
            assert_eq!(r.as_str().parse::<Regime>().unwrap(), r);
        }
    }

    proptest! {
        #[test]
        fn report_respects_floor(k_psi in 1usize..200, gamma in 1e-9f64..10.0, cost in 1u64..u64::MAX / 2) {
            let r = UncertaintyReport::new(1, k_psi, gamma, cost, Regime::Indeterminate).unwrap();
            prop_assert!(r.satisfies_bounds());
            let direct = k_psi as f64 / gamma * (1.0 + cost as f64).ln();
            prop_assert!((r.u_value - direct).abs() <= 1e-12 * direct);
        }

        #[test]
        fn matched_inflation_is_one(d in 1usize..500, frac in 0.0f64..1.0) {
            let k = 1 + ((d - 1) as f64 * frac) as usize;
            prop_assert_eq!(inflation_ratio(k, k, d).unwrap(), 1.0);
        }

        #[test]
        fn never_stable_when_degenerate(
            gamma in prop_oneof![Just(0.0), 0.0f64..1e-10, 1e-10f64..2.0],
            m in 1usize..80,
            l0 in 0usize..=20, omp in 0usize..=20, bp in 0usize..=20,
        ) {
            let mut geom = exact_report(&Matrix::identity(4), 2);
            geom.gamma_exact = Some(gamma);
            let stats = BatteryStats::from_counts(20, Some(l0), Some(omp), Some(bp));
            let t = RegimeThresholds::default();
            let first = classify_regime(&geom, m, 64, 1, &stats, &t).unwrap();
            let second = classify_regime(&geom, m, 64, 1, &stats, &t).unwrap();
            prop_assert_eq!(&first, &second);
            if gamma <= 1e-10 {
                prop_assert_eq!(first.regime, Regime::NonUnique);
            }
        }
    }
}
