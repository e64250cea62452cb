//! Reconstruction quality and solver performance figures.
//!
//! PSNR uses the peak of the *reference* (`R = max(ref)`), so it is not
//! symmetric in its arguments. SSI is the usual luminance × contrast ×
//! structure product averaged over uniform sliding windows (8×8 on image
//! bands, length 11 on 1-D spectra), with `C₁ = (0.01·L)²`, `C₂ = (0.03·L)²`
//! and `L = max(ref) − min(ref)`. Negative window averages are clamped to 0;
//! the raw mean is kept alongside.
//!
//! Cube metrics are computed per spectral band and then averaged.

use ndarray::{ArrayView2, ArrayView3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stand-in for `+∞` band PSNRs when averaging over bands.
pub const DEFAULT_PSNR_CAP_DB: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("metric input is empty")]
    Empty,
    #[error("invalid metric parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsiParams {
    /// Side of the square window used on 2-D bands.
    pub window_2d: usize,
    /// Window length used on 1-D signals.
    pub window_1d: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsiParams {
    fn default() -> Self {
        Self {
            window_2d: 8,
            window_1d: 11,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsiParams {
    fn validate(&self) -> Result<()> {
        if self.window_2d == 0 || self.window_1d == 0 {
            return Err(MetricError::InvalidParameter("window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Clamped SSI with the pre-clamp mean kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ssi {
    pub value: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Band-averaged PSNR in dB; `+∞` only when every band matches exactly.
    pub psnr_db: f64,
    pub ssi: f64,
    pub ssi_raw: f64,
    /// Bands whose infinite PSNR was replaced by the cap before averaging.
    pub capped_bands: usize,
    /// Bands whose reference peak is zero while the error is not.
    pub degenerate_bands: usize,
}

impl QualityReport {
    /// PSNR with infinities replaced by `±cap`, for textual and JSON output.
    pub fn psnr_finite(&self, cap: f64) -> f64 {
        if self.psnr_db == f64::INFINITY {
            cap
        } else if self.psnr_db == f64::NEG_INFINITY {
            -cap
        } else {
            self.psnr_db
        }
    }
}

/// Iteration and timing totals for a recovered cube.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// Iterations summed over all recovered pixels, `J`.
    pub total_iterations: usize,
    /// Wall-clock recovery time `t` in seconds.
    pub recovery_time_s: f64,
    pub pixels_recovered: usize,
    pub pixels_failed: usize,
}

fn check_same_len(a: &[f64], reference: &[f64]) -> Result<()> {
    if a.len() != reference.len() {
        return Err(MetricError::ShapeMismatch {
            left: vec![a.len()],
            right: vec![reference.len()],
        });
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn mse(a: &[f64], reference: &[f64]) -> Result<f64> {
    check_same_len(a, reference)?;
    let sum: f64 = a.iter().zip(reference).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// `10·log₁₀(R² / MSE)` with `R = max(reference)`.
///
/// Returns `+∞` when the inputs are identical and `−∞` (with a warning) when
/// the reference peak is zero but the error is not.
pub fn psnr(a: &[f64], reference: &[f64]) -> Result<f64> {
    let err = mse(a, reference)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == 0.0 {
        log::warn!("PSNR reference peak is zero; returning -inf");
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// Real and imaginary parts concatenated, `[re₀ … re_{n−1}, im₀ … im_{n−1}]`.
pub fn stack_complex(v: &[Complex64]) -> Vec<f64> {
    v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect()
}

struct Stabilizers {
    c1: f64,
    c2: f64,
}

impl Stabilizers {
    fn for_reference(reference: impl Iterator<Item = f64> + Clone, params: &SsiParams) -> Self {
        let max = reference.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = reference.fold(f64::INFINITY, f64::min);
        let mut range = max - min;
        if !(range > 0.0) {
            // flat reference: fall back to a unit dynamic range
            range = 1.0;
        }
        Self {
            c1: (params.k1 * range).powi(2),
            c2: (params.k2 * range).powi(2),
        }
    }

    fn index(&self, mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
        let num = (2.0 * mu_a * mu_b + self.c1) * (2.0 * cov + self.c2);
        let den = (mu_a * mu_a + mu_b * mu_b + self.c1) * (var_a + var_b + self.c2);
        num / den
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

/// Summed-area table with one row and column of zero padding.
struct Integral {
    cols: usize,
    table: Vec<f64>,
}

impl Integral {
    fn new(rows: usize, cols: usize, value: impl Fn(usize, usize) -> f64) -> Self {
        let stride = cols + 1;
        let mut table = vec![0.0; (rows + 1) * stride];
        for i in 0..rows {
            let mut row_sum = 0.0;
            for j in 0..cols {
                row_sum += value(i, j);
                table[(i + 1) * stride + j + 1] = table[i * stride + j + 1] + row_sum;
            }
        }
        Self { cols, table }
    }

    /// Sum over rows `[r0, r1)` and columns `[c0, c1)`.
    fn sum(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
        let s = self.cols + 1;
        self.table[r1 * s + c1] - self.table[r0 * s + c1] - self.table[r1 * s + c0]
            + self.table[r0 * s + c0]
    }
}

fn ssi_windows(
    a: ArrayView2<'_, f64>,
    reference: ArrayView2<'_, f64>,
    win_rows: usize,
    win_cols: usize,
    stab: &Stabilizers,
) -> f64 {
    let (rows, cols) = a.dim();
    // window statistics come from sums of centred data; the shift is added
    // back to the means, variances and covariance are shift-invariant
    let shift_a = mean(a.iter().copied());
    let shift_b = mean(reference.iter().copied());
    let da = |i: usize, j: usize| a[[i, j]] - shift_a;
    let db = |i: usize, j: usize| reference[[i, j]] - shift_b;
    let sa = Integral::new(rows, cols, da);
    let sb = Integral::new(rows, cols, db);
    let saa = Integral::new(rows, cols, |i, j| da(i, j) * da(i, j));
    let sbb = Integral::new(rows, cols, |i, j| db(i, j) * db(i, j));
    let sab = Integral::new(rows, cols, |i, j| da(i, j) * db(i, j));

    let n = (win_rows * win_cols) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(rows - win_rows) {
        for c0 in 0..=(cols - win_cols) {
            let (r1, c1) = (r0 + win_rows, c0 + win_cols);
            let ma = sa.sum(r0, c0, r1, c1) / n;
            let mb = sb.sum(r0, c0, r1, c1) / n;
            let var_a = (saa.sum(r0, c0, r1, c1) / n - ma * ma).max(0.0);
            let var_b = (sbb.sum(r0, c0, r1, c1) / n - mb * mb).max(0.0);
            let cov = sab.sum(r0, c0, r1, c1) / n - ma * mb;
            total += stab.index(ma + shift_a, mb + shift_b, var_a, var_b, cov);
            count += 1;
        }
    }
    total / count as f64
}

fn clamp_ssi(raw: f64) -> Ssi {
    Ssi {
        value: raw.clamp(0.0, 1.0),
        raw,
    }
}

/// Mean windowed SSI between two equally sized 2-D bands.
///
/// A band smaller than the window in either direction is evaluated as one
/// window covering the whole band.
pub fn ssi(a: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>, params: &SsiParams) -> Result<Ssi> {
    params.validate()?;
    if a.dim() != reference.dim() {
        return Err(MetricError::ShapeMismatch {
            left: a.shape().to_vec(),
            right: reference.shape().to_vec(),
        });
    }
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return Err(MetricError::Empty);
    }
    let w = params.window_2d;
    let (wr, wc) = if rows < w || cols < w { (rows, cols) } else { (w, w) };
    let stab = Stabilizers::for_reference(reference.iter().copied(), params);
    Ok(clamp_ssi(ssi_windows(a, reference, wr, wc, &stab)))
}

/// Mean SSI over a sliding 1-D window; signals shorter than the window are
/// evaluated as a single window.
pub fn ssi_1d(a: &[f64], reference: &[f64], params: &SsiParams) -> Result<Ssi> {
    params.validate()?;
    check_same_len(a, reference)?;
    let len = a.len();
    let w = params.window_1d.min(len);
    let a2 = ArrayView2::from_shape((1, len), a).expect("contiguous slice");
    let r2 = ArrayView2::from_shape((1, len), reference).expect("contiguous slice");
    let stab = Stabilizers::for_reference(reference.iter().copied(), params);
    Ok(clamp_ssi(ssi_windows(a2, r2, 1, w, &stab)))
}

/// Averages band PSNRs, substituting `±cap` for infinite entries.
///
/// Returns `(mean, capped, degenerate)`; the mean is `+∞` when every band is `+∞`.
pub fn average_psnr(bands: &[f64], cap: f64) -> (f64, usize, usize) {
    if bands.is_empty() {
        return (f64::NAN, 0, 0);
    }
    if bands.iter().all(|&p| p == f64::INFINITY) {
        return (f64::INFINITY, bands.len(), 0);
    }
    let mut capped = 0;
    let mut degenerate = 0;
    let sum: f64 = bands
        .iter()
        .map(|&p| {
            if p == f64::INFINITY {
                capped += 1;
                cap
            } else if p == f64::NEG_INFINITY {
                degenerate += 1;
                -cap
            } else {
                p
            }
        })
        .sum();
    (sum / bands.len() as f64, capped, degenerate)
}

/// Per-band PSNR and SSI over `(x, y, band)` cubes, averaged across bands.
pub fn bandwise_average(
    a: ArrayView3<'_, f64>,
    reference: ArrayView3<'_, f64>,
    params: &SsiParams,
    psnr_cap: f64,
) -> Result<QualityReport> {
    if a.dim() != reference.dim() {
        return Err(MetricError::ShapeMismatch {
            left: a.shape().to_vec(),
            right: reference.shape().to_vec(),
        });
    }
    let bands = a.len_of(Axis(2));
    if bands == 0 || a.is_empty() {
        return Err(MetricError::Empty);
    }
    let per_band: Vec<(f64, Ssi)> = (0..bands)
        .into_par_iter()
        .map(|b| {
            let band_a = a.index_axis(Axis(2), b);
            let band_r = reference.index_axis(Axis(2), b);
            let flat_a: Vec<f64> = band_a.iter().copied().collect();
            let flat_r: Vec<f64> = band_r.iter().copied().collect();
            let p = psnr(&flat_a, &flat_r)?;
            let s = ssi(band_a, band_r, params)?;
            Ok((p, s))
        })
        .collect::<Result<_>>()?;

    let psnrs: Vec<f64> = per_band.iter().map(|(p, _)| *p).collect();
    let (psnr_db, capped_bands, degenerate_bands) = average_psnr(&psnrs, psnr_cap);
    let ssi = per_band.iter().map(|(_, s)| s.value).sum::<f64>() / bands as f64;
    let ssi_raw = per_band.iter().map(|(_, s)| s.raw).sum::<f64>() / bands as f64;
    Ok(QualityReport {
        psnr_db,
        ssi,
        ssi_raw,
        capped_bands,
        degenerate_bands,
    })
}
