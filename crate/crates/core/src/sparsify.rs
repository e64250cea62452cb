//! Hard thresholding of transform-domain spectra.
//!
//! Coefficients whose modulus is strictly below `T/100 · max|x|` are zeroed.
//! Surviving coefficients are copied untouched, so the maximum always
//! survives and a second pass with the same `T` changes nothing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CVector;

/// Resolution of [`calibrate_threshold`], in percent.
pub const CALIBRATION_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SparsifyError {
    #[error("threshold T = {0} is outside [0, 100]")]
    ThresholdOutOfRange(f64),
    #[error("target sparsity {target} is outside [1, {nonzeros}] (nonzero count)")]
    TargetOutOfRange { target: usize, nonzeros: usize },
    #[error("no threshold reaches sparsity {target}: {minimum} coefficients tie at the maximum")]
    Unattainable { target: usize, minimum: usize },
}

/// A transform-domain vector whose zeros are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    values: CVector,
    kappa: usize,
}

impl SparseVector {
    /// Wraps `values`, counting its nonzero entries.
    pub fn new(values: CVector) -> Self {
        let kappa = sparsity_level(&values);
        Self { values, kappa }
    }

    pub fn values(&self) -> &CVector {
        &self.values
    }

    pub fn into_values(self) -> CVector {
        self.values
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsifyReport {
    /// Threshold `T` in percent of the maximum modulus.
    pub threshold: f64,
    pub kappa: usize,
    /// Percentage of exactly-zero coefficients.
    pub sparsity_ratio: f64,
}

/// Number of entries with nonzero modulus.
pub fn sparsity_level(x: &CVector) -> usize {
    x.iter().filter(|z| z.norm() != 0.0).count()
}

/// Percentage of zero entries: `100 · zeros / len`.
pub fn sparsity_ratio(x: &CVector) -> f64 {
    ratio_from_kappa(x.len(), sparsity_level(x))
}

fn ratio_from_kappa(len: usize, kappa: usize) -> f64 {
    100.0 * (len - kappa) as f64 / len as f64
}

fn check_threshold(t: f64) -> Result<(), SparsifyError> {
    if (0.0..=100.0).contains(&t) {
        Ok(())
    } else {
        Err(SparsifyError::ThresholdOutOfRange(t))
    }
}

fn cutoff(moduli: &[f64], t: f64) -> f64 {
    let max = moduli.iter().copied().fold(0.0, f64::max);
    t / 100.0 * max
}

/// Zeroes every coefficient with `|x_j| < T/100 · max|x|`.
pub fn sparsify(x: &CVector, t: f64) -> Result<(SparseVector, SparsifyReport), SparsifyError> {
    check_threshold(t)?;
    let moduli = x.moduli();
    let cut = cutoff(&moduli, t);
    let zero = Complex64::new(0.0, 0.0);
    let values: Vec<Complex64> = x
        .iter()
        .zip(&moduli)
        .map(|(&z, &m)| if m < cut { zero } else { z })
        .collect();
    let sparse = SparseVector::new(CVector::new(values).expect("subset of a valid vector"));
    let report = SparsifyReport {
        threshold: t,
        kappa: sparse.kappa,
        sparsity_ratio: ratio_from_kappa(sparse.len(), sparse.kappa),
    };
    Ok((sparse, report))
}

fn kappa_at(moduli: &[f64], t: f64) -> usize {
    let cut = cutoff(moduli, t);
    moduli.iter().filter(|&&m| m != 0.0 && m >= cut).count()
}

/// Smallest `T` (to [`CALIBRATION_RESOLUTION`]) whose sparsification leaves at
/// most `kappa_target` nonzeros.
///
/// `κ(T)` is a non-increasing step function, so plain bisection on the
/// predicate `κ(T) ≤ target` converges to the breakpoint from above.
pub fn calibrate_threshold(x: &CVector, kappa_target: usize) -> Result<f64, SparsifyError> {
    let moduli = x.moduli();
    let nonzeros = moduli.iter().filter(|&&m| m != 0.0).count();
    if kappa_target == 0 || kappa_target > nonzeros {
        return Err(SparsifyError::TargetOutOfRange {
            target: kappa_target,
            nonzeros,
        });
    }
    if kappa_at(&moduli, 0.0) <= kappa_target {
        return Ok(0.0);
    }
    let ceiling = kappa_at(&moduli, 100.0);
    if ceiling > kappa_target {
        return Err(SparsifyError::Unattainable {
            target: kappa_target,
            minimum: ceiling,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 100.0f64);
    while hi - lo > CALIBRATION_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if kappa_at(&moduli, mid) <= kappa_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
