//! Representation complexity, effective sparsity and planted instances.

use crate::dictionaries::{Dictionary, SensingOperator};
use crate::error::{Error, Result};
use crate::numerics::{
    binomial, gaussian, least_squares, parse_matrix_block, write_matrix, write_vector,
    Combinations, RandomStream, Vector, TOLERANCES,
};

/// Cumulative support budget for the general-dictionary search.
pub const REPRESENTATION_ENUMERATION_LIMIT: u128 = 1 << 24;

/// Smallest magnitude of a planted nonzero coefficient.
pub const MIN_PLANTED_MAGNITUDE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub k_psi: usize,
    pub support: Vec<usize>,
    pub tau: f64,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1e-3) {
        return Err(Error::InvalidTolerance(format!("tau must lie in (0, 1e-3], got {tau:e}")));
    }
    Ok(())
}

fn nonzero_norm(x: &[f64]) -> Result<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(n)
}

/// K_Ψ(x): fewest atoms of Ψ that reproduce x to within τ‖x‖₂.
///
/// Orthonormal Ψ has a unique expansion, so this counts entries of Ψᵀx above
/// τ‖x‖₂. Any other Ψ is searched exhaustively by support size.
pub fn representation_complexity(x: &[f64], psi: &Dictionary, tau: f64) -> Result<SparsityReport> {
    check_tau(tau)?;
    if x.len() != psi.d() {
        return Err(Error::DimensionMismatch(format!(
            "signal of length {} against a dictionary in R^{}",
            x.len(),
            psi.d()
        )));
    }
    let norm = nonzero_norm(x)?;
    let threshold = tau * norm;
    if psi.is_orthonormal() {
        let support = psi.analyze(x).support_above(threshold);
        return Ok(SparsityReport {
            k_psi: support.len(),
            support,
            tau,
        });
    }

    let n = psi.n();
    let mut examined: u128 = 0;
    for size in 1..=n {
        let count = binomial(n, size);
        if examined.saturating_add(count) > REPRESENTATION_ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge {
                requested: examined.saturating_add(count),
                limit: REPRESENTATION_ENUMERATION_LIMIT,
            });
        }
        examined += count;
        for support in Combinations::new(n, size) {
            let sub = psi.psi().select_columns(&support);
            // Rank-deficient supports are dominated by a smaller independent subset.
            let Ok(coef) = least_squares(&sub, x) else {
                continue;
            };
            let residual = Vector::from(x.to_vec()).sub(&sub.mul_vec(&coef)).norm2();
            if residual <= threshold {
                return Ok(SparsityReport {
                    k_psi: size,
                    support,
                    tau,
                });
            }
        }
    }
    Err(Error::InvalidValue("signal lies outside the span of the dictionary".into()))
}

/// k_eff(x; Ψ) = ‖Ψᵀx‖₀ under the relative threshold τ.
pub fn effective_sparsity(x: &[f64], psi: &Dictionary, tau: f64) -> Result<usize> {
    check_tau(tau)?;
    psi.require_orthonormal()?;
    if x.len() != psi.d() {
        return Err(Error::DimensionMismatch(format!(
            "signal of length {} against a basis of R^{}",
            x.len(),
            psi.d()
        )));
    }
    let norm = nonzero_norm(x)?;
    Ok(psi.analyze(x).support_above(tau * norm).len())
}

/// Ground truth x = Ψ⋆α⋆ with exactly k nonzero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    truth_basis: Dictionary,
    alpha_star: Vector,
    x: Vector,
    k: usize,
}

impl PlantedInstance {
    /// Validates ‖α⋆‖₀ = k, nonzero magnitudes ≥ 0.1 and recomputes x.
    pub fn from_parts(truth_basis: Dictionary, alpha_star: Vector) -> Result<Self> {
        if alpha_star.len() != truth_basis.n() {
            return Err(Error::DimensionMismatch(format!(
                "alpha of length {} for a dictionary with {} atoms",
                alpha_star.len(),
                truth_basis.n()
            )));
        }
        if let Some(v) = alpha_star
            .iter()
            .find(|v| **v != 0.0 && v.abs() < MIN_PLANTED_MAGNITUDE)
        {
            return Err(Error::InvalidValue(format!(
                "planted coefficient {v:e} is below the minimum magnitude {MIN_PLANTED_MAGNITUDE}"
            )));
        }
        let k = alpha_star.iter().filter(|v| **v != 0.0).count();
        if k == 0 {
            return Err(Error::InvalidSparsity("planted coefficient vector is zero".into()));
        }
        let x = truth_basis.synthesize(&alpha_star);
        Ok(Self {
            truth_basis,
            alpha_star,
            x,
            k,
        })
    }

    pub fn truth_basis(&self) -> &Dictionary {
        &self.truth_basis
    }

    pub fn alpha_star(&self) -> &Vector {
        &self.alpha_star
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn support(&self) -> Vec<usize> {
        self.alpha_star.support_above(0.0)
    }

    /// Basis matrix block followed by the α⋆ block, in the numerics text format.
    pub fn to_bundle(&self) -> String {
        let mut s = write_matrix(self.truth_basis.psi());
        s.push_str(&write_vector(&self.alpha_star));
        s
    }

    pub fn from_bundle(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let psi = parse_matrix_block(&mut lines)?;
        let alpha = parse_matrix_block(&mut lines)?;
        if alpha.cols() != 1 {
            return Err(Error::Parse("alpha block must be an n x 1 column".into()));
        }
        let basis = Dictionary::from_matrix(psi)?;
        Self::from_parts(basis, Vector::from(alpha.data().to_vec()))
    }
}

/// Draws a k-sparse α⋆ over `truth_basis`: uniform support, coefficients
/// sign · (0.1 + |N(0,1)|).
pub fn plant(truth_basis: &Dictionary, k: usize, stream: &mut RandomStream) -> Result<PlantedInstance> {
    let n = truth_basis.n();
    if k == 0 || k > n {
        return Err(Error::InvalidSparsity(format!("k must lie in [1, {n}], got {k}")));
    }
    let mut support = stream.sample_without_replacement(n, k);
    support.sort_unstable();
    let mut alpha = Vector::zeros(n);
    for &i in &support {
        let sign = stream.sign();
        alpha[i] = sign * (MIN_PLANTED_MAGNITUDE + stream.standard_normal().abs());
    }
    let x = truth_basis.synthesize(&alpha);
    Ok(PlantedInstance {
        truth_basis: truth_basis.clone(),
        alpha_star: alpha,
        x,
        k,
    })
}

/// Data y = Φx + e with e uniform on the sphere of radius ε.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: Vector,
    pub epsilon: f64,
    pub noise_realization: Vector,
}

pub fn observe(
    x: &[f64],
    phi: &SensingOperator,
    epsilon: f64,
    stream: &mut RandomStream,
) -> Result<Observation> {
    if phi.d() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "operator on R^{} applied to a signal of length {}",
            phi.d(),
            x.len()
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidValue(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let clean = phi.apply(x);
    let noise = if epsilon > 0.0 {
        let mut g = gaussian(stream, phi.m());
        while g.norm2() == 0.0 {
            g = gaussian(stream, phi.m());
        }
        g.scaled(epsilon / g.norm2())
    } else {
        Vector::zeros(phi.m())
    };
    let y = clean.iter().zip(noise.iter()).map(|(a, b)| a + b).collect();
    Ok(Observation {
        y,
        epsilon,
        noise_realization: noise,
    })
}

/// Default relative zero threshold τ.
pub fn default_tau() -> f64 {
    TOLERANCES.zero_threshold
}
