//! Representation systems Ψ, observation operators Φ and their composition A = ΦΨ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RandomStream, Vector, TOLERANCES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryKind {
    Identity,
    Hadamard,
    Dct,
    RandomOrthonormal,
    /// Loaded or hand-built; not necessarily square or orthonormal.
    Custom,
}

impl DictionaryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Hadamard => "hadamard",
            Self::Dct => "dct",
            Self::RandomOrthonormal => "random-orthonormal",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for DictionaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DictionaryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "hadamard" => Ok(Self::Hadamard),
            "dct" => Ok(Self::Dct),
            "random-orthonormal" => Ok(Self::RandomOrthonormal),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Parse(format!("unknown dictionary kind `{other}`"))),
        }
    }
}

/// A d × N dictionary with unit-norm columns (atoms).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    psi: Matrix,
    kind: DictionaryKind,
}

impl Dictionary {
    /// Wraps an arbitrary matrix with unit-norm columns.
    pub fn from_matrix(psi: Matrix) -> Result<Self> {
        let deviation = psi.unit_norm_deviation();
        if deviation > TOLERANCES.unit_norm {
            return Err(Error::NotNormalized { deviation });
        }
        Ok(Self {
            psi,
            kind: DictionaryKind::Custom,
        })
    }

    pub fn psi(&self) -> &Matrix {
        &self.psi
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.psi.rows()
    }

    pub fn n(&self) -> usize {
        self.psi.cols()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.d() == self.n() && self.psi.orthonormality_deviation() <= TOLERANCES.orthonormal
    }

    pub(crate) fn require_orthonormal(&self) -> Result<()> {
        if self.d() != self.n() {
            return Err(Error::NotOrthonormal {
                deviation: f64::INFINITY,
            });
        }
        let deviation = self.psi.orthonormality_deviation();
        if deviation > TOLERANCES.orthonormal {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(())
    }

    /// Analysis coefficients Ψᵀx.
    pub fn analyze(&self, x: &[f64]) -> Vector {
        self.psi.tr_mul_vec(x)
    }

    /// Synthesis Ψα.
    pub fn synthesize(&self, alpha: &[f64]) -> Vector {
        self.psi.mul_vec(alpha)
    }
}

/// Builds an orthonormal basis of R^d (N = d).
pub fn build_dictionary(kind: DictionaryKind, d: usize, seed: u64) -> Result<Dictionary> {
    if d == 0 {
        return Err(Error::UnsupportedDimension("dictionary dimension must be positive".into()));
    }
    let psi = match kind {
        DictionaryKind::Identity => Matrix::identity(d),
        DictionaryKind::Hadamard => hadamard(d)?,
        DictionaryKind::Dct => dct_ii(d)?,
        DictionaryKind::RandomOrthonormal => random_orthonormal(d, seed),
        DictionaryKind::Custom => {
            return Err(Error::UnsupportedDimension(
                "custom dictionaries are loaded, not built".into(),
            ))
        }
    };
    Ok(Dictionary { psi, kind })
}

/// Sylvester–Walsh basis: entry (i, j) = (−1)^popcount(i & j) / √d.
fn hadamard(d: usize) -> Result<Matrix> {
    if !d.is_power_of_two() {
        return Err(Error::UnsupportedDimension(format!(
            "hadamard basis needs a power of two, got {d}"
        )));
    }
    let s = 1.0 / (d as f64).sqrt();
    Ok(Matrix::from_fn(d, d, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            s
        } else {
            -s
        }
    }))
}

/// Orthonormal DCT-II atoms as columns: ψ_k(n) = c_k cos(π (2n + 1) k / 2d).
fn dct_ii(d: usize) -> Result<Matrix> {
    if d < 2 {
        return Err(Error::UnsupportedDimension(format!("dct basis needs d >= 2, got {d}")));
    }
    let df = d as f64;
    Ok(Matrix::from_fn(d, d, |n, k| {
        let c = if k == 0 { (1.0 / df).sqrt() } else { (2.0 / df).sqrt() };
        c * libm::cos(std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2.0 * df))
    }))
}

/// Gram–Schmidt (applied twice) on a Gaussian matrix: Haar-distributed.
fn random_orthonormal(d: usize, seed: u64) -> Matrix {
    let mut stream = RandomStream::new(seed, 0);
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| stream.standard_normal()).collect())
        .collect();
    for j in 0..d {
        for _ in 0..2 {
            for i in 0..j {
                let proj: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                let (done, rest) = cols.split_at_mut(j);
                for (x, q) in rest[0].iter_mut().zip(&done[i]) {
                    *x -= proj * q;
                }
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    Matrix::from_fn(d, d, |i, j| cols[j][i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensingKind {
    Gaussian,
    Bernoulli,
    RowSubsample,
    Identity,
    Custom,
}

impl SensingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Bernoulli => "bernoulli",
            Self::RowSubsample => "row-subsample",
            Self::Identity => "identity",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for SensingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "bernoulli" => Ok(Self::Bernoulli),
            "row-subsample" => Ok(Self::RowSubsample),
            "identity" => Ok(Self::Identity),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Parse(format!("unknown sensing kind `{other}`"))),
        }
    }
}

/// Linear observation operator Φ (m × d).
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    phi: Matrix,
    kind: SensingKind,
}

impl SensingOperator {
    pub fn from_matrix(phi: Matrix) -> Self {
        Self {
            phi,
            kind: SensingKind::Custom,
        }
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn kind(&self) -> SensingKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.phi.rows()
    }

    pub fn d(&self) -> usize {
        self.phi.cols()
    }

    pub fn apply(&self, x: &[f64]) -> Vector {
        self.phi.mul_vec(x)
    }
}

/// Builds Φ. Gaussian rows are drawn in order from one stream, so for a fixed
/// seed the first rows agree across m up to the 1/√m scale; row-subsample
/// takes the first m entries of one seeded permutation, so smaller m selects
/// a subset of the rows chosen for larger m.
pub fn build_sensing(kind: SensingKind, m: usize, d: usize, seed: u64) -> Result<SensingOperator> {
    if m == 0 || d == 0 {
        return Err(Error::UnsupportedDimension(format!("sensing needs m, d >= 1 (m={m}, d={d})")));
    }
    let mut stream = RandomStream::new(seed, 1);
    let phi = match kind {
        SensingKind::Identity => {
            if m != d {
                return Err(Error::UnsupportedDimension(format!(
                    "identity sensing needs m == d (m={m}, d={d})"
                )));
            }
            Matrix::identity(d)
        }
        SensingKind::Gaussian => {
            let s = 1.0 / (m as f64).sqrt();
            Matrix::from_fn(m, d, |_, _| s * stream.standard_normal())
        }
        SensingKind::Bernoulli => {
            let s = 1.0 / (m as f64).sqrt();
            Matrix::from_fn(m, d, |_, _| s * stream.sign())
        }
        SensingKind::RowSubsample => {
            if m > d {
                return Err(Error::UnsupportedDimension(format!(
                    "row-subsample needs m <= d (m={m}, d={d})"
                )));
            }
            let mut rows = stream.permutation(d);
            rows.truncate(m);
            rows.sort_unstable();
            Matrix::identity(d).select_rows(&rows)
        }
        SensingKind::Custom => {
            return Err(Error::UnsupportedDimension(
                "custom sensing operators are loaded, not built".into(),
            ))
        }
    };
    Ok(SensingOperator { phi, kind })
}

/// The effective matrix A through which coefficients are observed.
///
/// When columns were normalized, A = ΦΨD⁻¹ with D = diag(scales), and
/// `synthesis` holds ΨD⁻¹ so that a coefficient vector β in A's coordinates
/// maps to the signal x = ΨD⁻¹β. Without a parent dictionary the synthesis
/// operator is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSensing {
    a: Matrix,
    column_normalized: bool,
    scales: Vec<f64>,
    synthesis: Option<Matrix>,
}

impl EffectiveSensing {
    /// Wraps a raw matrix (Ψ = I). The normalized flag is detected.
    pub fn from_matrix(a: Matrix) -> Self {
        let column_normalized = a.unit_norm_deviation() <= TOLERANCES.unit_norm;
        Self {
            scales: vec![1.0; a.cols()],
            a,
            column_normalized,
            synthesis: None,
        }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn column_normalized(&self) -> bool {
        self.column_normalized
    }

    /// Column j of the normalized matrix was divided by `scales[j]`.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        let deviation = self.a.unit_norm_deviation();
        if deviation > TOLERANCES.unit_norm {
            return Err(Error::NotNormalized { deviation });
        }
        Ok(())
    }

    /// Column-normalized copy; scales compose with any earlier normalization.
    pub fn normalized(&self) -> Result<EffectiveSensing> {
        let norms = self.a.column_norms();
        if let Some(j) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::InvalidValue(format!("column {j} is zero and cannot be normalized")));
        }
        let inv: Vec<f64> = norms.iter().map(|n| 1.0 / n).collect();
        let synthesis = match &self.synthesis {
            Some(s) => s.scale_columns(&inv),
            None => Matrix::from_fn(self.n(), self.n(), |i, j| if i == j { inv[j] } else { 0.0 }),
        };
        Ok(Self {
            a: self.a.scale_columns(&inv),
            column_normalized: true,
            scales: self.scales.iter().zip(&norms).map(|(s, n)| s * n).collect(),
            synthesis: Some(synthesis),
        })
    }

    /// x = (synthesis) β for coefficients β in A's coordinates.
    pub fn signal(&self, beta: &[f64]) -> Vector {
        match &self.synthesis {
            Some(s) => s.mul_vec(beta),
            None => Vector::from(beta.to_vec()),
        }
    }

    /// Converts coefficients in A's coordinates back to the parent basis (β / scales).
    pub fn to_basis_coefficients(&self, beta: &[f64]) -> Vector {
        beta.iter().zip(&self.scales).map(|(b, s)| b / s).collect()
    }

    /// Converts parent-basis coefficients into A's coordinates (α · scales).
    pub fn from_basis_coefficients(&self, alpha: &[f64]) -> Vector {
        alpha.iter().zip(&self.scales).map(|(a, s)| a * s).collect()
    }
}

/// A = ΦΨ, optionally with unit-norm columns.
pub fn compose(phi: &SensingOperator, psi: &Dictionary, normalize: bool) -> Result<EffectiveSensing> {
    if phi.d() != psi.d() {
        return Err(Error::DimensionMismatch(format!(
            "sensing acts on R^{} but dictionary lives in R^{}",
            phi.d(),
            psi.d()
        )));
    }
    let a = phi.phi().matmul(psi.psi())?;
    let raw = EffectiveSensing {
        column_normalized: a.unit_norm_deviation() <= TOLERANCES.unit_norm,
        scales: vec![1.0; a.cols()],
        a,
        synthesis: Some(psi.psi().clone()),
    };
    if normalize {
        raw.normalized()
    } else {
        Ok(raw)
    }
}

/// max_{i,j} |⟨ψ₁ᵢ, ψ₂ⱼ⟩| between two orthonormal bases.
pub fn mutual_coherence(psi1: &Dictionary, psi2: &Dictionary) -> Result<f64> {
    if psi1.d() != psi2.d() {
        return Err(Error::DimensionMismatch(format!(
            "bases of R^{} and R^{}",
            psi1.d(),
            psi2.d()
        )));
    }
    psi1.require_orthonormal()?;
    psi2.require_orthonormal()?;
    let cross = psi1.psi().transpose().matmul(psi2.psi())?;
    Ok(cross.data().iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// max_{i≠j} |⟨aᵢ, aⱼ⟩| for a column-normalized matrix.
pub fn self_coherence(a: &EffectiveSensing) -> Result<f64> {
    a.require_normalized()?;
    Ok(matrix_coherence(a.a()))
}

/// Largest off-diagonal |⟨aᵢ, aⱼ⟩| / (‖aᵢ‖‖aⱼ‖); zero columns are ignored.
pub(crate) fn matrix_coherence(a: &Matrix) -> f64 {
    let cols = a.columns();
    let norms = a.column_norms();
    let mut mu: f64 = 0.0;
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let ip: f64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
            mu = mu.max(ip.abs() / (norms[i] * norms[j]));
        }
    }
    mu.min(1.0)
}
