//! Measurement-model operators.
//!
//! A pixel spectrum `f` (length `N`) is represented in the transform domain
//! as `x = Ψ⁻¹ f`, where `Ψ` is the unitary DFT matrix. A random real matrix
//! `Φ` (`M × N`, `M < N`) compresses the spectrum to `y = Φ f`, and the
//! dictionary `A = Φ Ψ` maps transform coefficients straight to measurements,
//! so `y = A x`.
//!
//! Both DFT directions carry the `1/√N` factor, which makes `Ψ` an isometry
//! with `Ψ⁻¹ = Ψ*`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::linalg::{self, conj_transpose, CMatrix, CVector, LinalgError};

/// Imaginary residue (relative to `‖Ψx‖∞`) above which a synthesized spectrum
/// is flagged as coming from a non-conjugate-symmetric coefficient vector.
pub const SYMMETRY_WARNING_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensingError {
    #[error("{0}")]
    InvalidArgument(String),
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("dictionary atom {index} is the zero column")]
    ZeroAtom { index: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SensingError>;

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(SensingError::NonFinite { index }),
        None => Ok(()),
    }
}

/// A real acquisition-domain pixel spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SensingError::InvalidArgument("empty spectrum".into()));
        }
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// A real measurement vector `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement(Vec<f64>);

impl Measurement {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SensingError::InvalidArgument("empty measurement".into()));
        }
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// The measurement lifted to a complex vector.
    pub fn to_cvector(&self) -> CVector {
        CVector::from_real(&self.0).expect("measurement values are finite and nonempty")
    }
}

/// The unitary DFT matrix `Ψ` and its inverse.
#[derive(Debug, Clone)]
pub struct TransformBasis {
    n: usize,
    matrix: CMatrix,
    inverse: CMatrix,
}

impl TransformBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &CMatrix {
        &self.inverse
    }
}

/// `Ψ[j, k] = exp(−2πi·j·k/n)/√n`.
pub fn build_dft_basis(n: usize) -> Result<TransformBasis> {
    if n < 2 {
        return Err(SensingError::InvalidArgument(format!(
            "DFT basis needs n >= 2, got {n}"
        )));
    }
    let norm = 1.0 / (n as f64).sqrt();
    // reduce j·k mod n first so large products do not lose phase accuracy
    let matrix = CMatrix::from_fn(n, n, |j, k| {
        let angle = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
        Complex64::from_polar(norm, angle)
    })?;
    let inverse = conj_transpose(&matrix);
    Ok(TransformBasis { n, matrix, inverse })
}

/// Real random measurement matrix `Φ` (`M × N`).
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    m: usize,
    n: usize,
    matrix: CMatrix,
    seed: Option<u64>,
}

impl MeasurementMatrix {
    /// Wraps an explicit real `m × n` row-major matrix, e.g. a row selector.
    pub fn from_real(m: usize, n: usize, data: &[f64]) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(SensingError::InvalidArgument(format!(
                "measurement matrix needs 1 <= m < n, got m = {m}, n = {n}"
            )));
        }
        check_finite(data)?;
        let matrix = CMatrix::from_real(m, n, data)?;
        Ok(Self {
            m,
            n,
            matrix,
            seed: None,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Seed the matrix was drawn from, `None` for explicitly supplied matrices.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Draws `Φ` with i.i.d. `N(0, 1/m)` entries from a ChaCha8 stream seeded by `seed`.
pub fn build_measurement_matrix(m: usize, n: usize, seed: u64) -> Result<MeasurementMatrix> {
    if m == 0 || m >= n {
        return Err(SensingError::InvalidArgument(format!(
            "measurement matrix needs 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    gaussian_matrix(m, n, seed)
}

/// The Gaussian draw behind [`build_measurement_matrix`] without the `m < n`
/// requirement, for studies that include the uncompressed case `m = n`.
///
/// For `m < n` both functions return the same matrix.
pub fn gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<MeasurementMatrix> {
    if m == 0 || n == 0 || m > n {
        return Err(SensingError::InvalidArgument(format!(
            "Gaussian matrix needs 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt()).expect("positive standard deviation");
    let data: Vec<f64> = (0..m * n).map(|_| normal.sample(&mut rng)).collect();
    let matrix = CMatrix::from_real(m, n, &data)?;
    Ok(MeasurementMatrix {
        m,
        n,
        matrix,
        seed: Some(seed),
    })
}

/// Number of measurements for a compression factor: `round(n / factor)`,
/// kept within `[1, n − 1]`.
pub fn measurements_for(n: usize, compression_factor: f64) -> Result<usize> {
    if !(compression_factor.is_finite() && compression_factor > 1.0) {
        return Err(SensingError::InvalidArgument(format!(
            "compression factor must be > 1, got {compression_factor}"
        )));
    }
    if n < 2 {
        return Err(SensingError::InvalidArgument(format!(
            "spectral length must be >= 2, got {n}"
        )));
    }
    let m = (n as f64 / compression_factor).round() as usize;
    Ok(m.clamp(1, n - 1))
}

/// Derives an independent seed for the pixel at `index` from the run seed.
///
/// Two rounds of the SplitMix64 finalizer: one over the index, one over the
/// global seed XORed with the mixed index.
pub fn derive_seed(global_seed: u64, index: u64) -> u64 {
    splitmix64(global_seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The dictionary `A = Φ Ψ`, with its adjoint cached for the projection step.
#[derive(Debug, Clone)]
pub struct Dictionary {
    matrix: CMatrix,
    adjoint: CMatrix,
    atom_norms: Vec<f64>,
}

impl Dictionary {
    /// Uses `matrix` directly as the dictionary.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let atom_norms: Vec<f64> = (0..matrix.cols())
            .map(|j| linalg::l2_norm(&matrix.column(j)))
            .collect();
        if let Some(index) = atom_norms.iter().position(|&n| n == 0.0) {
            return Err(SensingError::ZeroAtom { index });
        }
        let adjoint = conj_transpose(&matrix);
        Ok(Self {
            matrix,
            adjoint,
            atom_norms,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn adjoint(&self) -> &CMatrix {
        &self.adjoint
    }

    pub fn atom_norms(&self) -> &[f64] {
        &self.atom_norms
    }

    /// Measurement count `M`.
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    /// Atom count `N`.
    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn atom(&self, index: usize) -> CVector {
        self.matrix.column(index)
    }
}

pub fn compose_dictionary(phi: &MeasurementMatrix, psi: &TransformBasis) -> Result<Dictionary> {
    if phi.n != psi.n {
        return Err(SensingError::DimensionMismatch {
            op: "compose_dictionary",
            expected: psi.n,
            found: phi.n,
        });
    }
    Dictionary::from_matrix(phi.matrix.matmul(&psi.matrix)?)
}

/// `y = Φ f`.
pub fn compress(phi: &MeasurementMatrix, f: &Spectrum) -> Result<Measurement> {
    if phi.n != f.len() {
        return Err(SensingError::DimensionMismatch {
            op: "compress",
            expected: phi.n,
            found: f.len(),
        });
    }
    let values = (0..phi.m)
        .map(|i| {
            phi.matrix
                .row(i)
                .iter()
                .zip(f.values())
                .map(|(a, v)| a.re * v)
                .sum()
        })
        .collect();
    Measurement::new(values)
}

/// Transform-domain coefficients `x = Ψ⁻¹ f`.
pub fn analyze(psi: &TransformBasis, f: &Spectrum) -> Result<CVector> {
    if psi.n != f.len() {
        return Err(SensingError::DimensionMismatch {
            op: "analyze",
            expected: psi.n,
            found: f.len(),
        });
    }
    let lifted = CVector::from_real(f.values())?;
    Ok(linalg::matvec(&psi.inverse, &lifted)?)
}

/// Result of mapping coefficients back to the acquisition domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    /// Real part of `Ψ x`.
    pub spectrum: Spectrum,
    /// Largest `|Im(Ψ x)_j|`.
    pub max_imaginary: f64,
    /// Set when the imaginary residue exceeds [`SYMMETRY_WARNING_RATIO`]
    /// of `‖Ψ x‖∞`, i.e. `x` is noticeably not conjugate-symmetric.
    pub symmetry_warning: bool,
}

/// `f = Re(Ψ x)` together with the discarded imaginary residue.
pub fn synthesize(psi: &TransformBasis, x: &CVector) -> Result<Synthesis> {
    if psi.n != x.len() {
        return Err(SensingError::DimensionMismatch {
            op: "synthesize",
            expected: psi.n,
            found: x.len(),
        });
    }
    let full = linalg::matvec(&psi.matrix, x)?;
    let max_imaginary = full.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let peak = full.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let symmetry_warning = max_imaginary > SYMMETRY_WARNING_RATIO * peak;
    let spectrum = Spectrum::new(full.iter().map(|z| z.re).collect())?;
    Ok(Synthesis {
        spectrum,
        max_imaginary,
        symmetry_warning,
    })
}
