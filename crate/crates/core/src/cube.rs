//! Hyperspectral cubes and the per-pixel compress/recover pipeline.
//!
//! A cube holds `x_dim × y_dim` pixels of `z_dim` spectral samples, stored
//! pixel-interleaved: `data[[x, y, band]]`, band fastest.
//!
//! [`run_pipeline`] treats every pixel independently:
//!
//! 1. transform to the DFT domain, threshold at `T`, transform back (`I_spf`);
//! 2. compress the sparsified spectrum with `Φ` (`M = round(N / factor)`);
//! 3. recover the coefficients with gOMP and synthesize `I_rec`.
//!
//! Pixels run on a rayon pool; results are gathered in pixel order so the
//! aggregates do not depend on scheduling.
//!
//! # File format
//!
//! Little-endian throughout:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0 | 8 | magic `HSICUBE\0` |
//! | 8 | 2 | format version, `1` |
//! | 10 | 1 | value type: `1` = f32, `2` = f64 |
//! | 11 | 1 | reserved, `0` |
//! | 12 | 4 | `x_dim` (u32) |
//! | 16 | 4 | `y_dim` (u32) |
//! | 20 | 4 | `z_dim` (u32) |
//! | 24 | 4 | name length in bytes (u32) |
//! | 28 | name length | UTF-8 name |
//! | … | `x·y·z·size` | samples in `(x, y, band)` order, band fastest |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gomp::{gomp_recover, Epsilon, GompConfig, GompError};
use crate::linalg::CVector;
use crate::metrics::{self, MetricError, PerfReport, QualityReport, SsiParams};
use crate::sensing::{
    self, analyze, build_dft_basis, build_measurement_matrix, compose_dictionary, compress,
    derive_seed, synthesize, Dictionary, SensingError, Spectrum, TransformBasis,
};
use crate::sparsify::{self, SparsifyError};

pub const MAGIC: [u8; 8] = *b"HSICUBE\0";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 28;

#[derive(Debug, Error)]
pub enum CubeError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed cube header: {field}: {reason}")]
    Malformed { field: &'static str, reason: String },
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("non-finite sample at pixel ({x}, {y}) band {band}")]
    NonFinite { x: usize, y: usize, band: usize },
    #[error("cube dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("pixel ({x}, {y}) outside {x_dim}×{y_dim}")]
    OutOfRange {
        x: usize,
        y: usize,
        x_dim: usize,
        y_dim: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Sparsify(#[from] SparsifyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T> = std::result::Result<T, CubeError>;

/// A hyperspectral data cube indexed `(x, y, band)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    name: String,
    data: Array3<f64>,
}

impl HsiCube {
    pub fn new(name: impl Into<String>, data: Array3<f64>) -> Result<Self> {
        let (x, y, z) = data.dim();
        if x == 0 || y == 0 || z == 0 {
            return Err(CubeError::Malformed {
                field: "dims",
                reason: format!("all dimensions must be positive, got {x}×{y}×{z}"),
            });
        }
        if let Some(((x, y, band), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(CubeError::NonFinite { x, y, band });
        }
        Ok(Self {
            name: name.into(),
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(name: impl Into<String>, x_dim: usize, y_dim: usize, z_dim: usize) -> Self {
        Self::new(name, Array3::zeros((x_dim, y_dim, z_dim))).expect("positive dimensions")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn x_dim(&self) -> usize {
        self.data.dim().0
    }

    pub fn y_dim(&self) -> usize {
        self.data.dim().1
    }

    /// Spectral length `N`.
    pub fn z_dim(&self) -> usize {
        self.data.dim().2
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.x_dim() * self.y_dim()
    }

    fn check_pixel(&self, x: usize, y: usize) -> Result<()> {
        if x >= self.x_dim() || y >= self.y_dim() {
            return Err(CubeError::OutOfRange {
                x,
                y,
                x_dim: self.x_dim(),
                y_dim: self.y_dim(),
            });
        }
        Ok(())
    }

    fn pixel_slice(&self, x: usize, y: usize) -> &[f64] {
        let z = self.z_dim();
        let start = (x * self.y_dim() + y) * z;
        &self.data.as_slice().expect("standard layout")[start..start + z]
    }

    /// Copies out the spectrum at `(x, y)`.
    pub fn extract_pixel(&self, x: usize, y: usize) -> Result<Spectrum> {
        self.check_pixel(x, y)?;
        Ok(Spectrum::new(self.pixel_slice(x, y).to_vec())?)
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, spectrum: &Spectrum) -> Result<()> {
        self.check_pixel(x, y)?;
        if spectrum.len() != self.z_dim() {
            return Err(CubeError::DimensionMismatch {
                left: self.dims(),
                right: (x, y, spectrum.len()),
            });
        }
        let z = self.z_dim();
        let start = (x * self.y_dim() + y) * z;
        self.data.as_slice_mut().expect("standard layout")[start..start + z]
            .copy_from_slice(spectrum.values());
        Ok(())
    }

    fn from_pixels(name: &str, x_dim: usize, y_dim: usize, z_dim: usize, pixels: Vec<Vec<f64>>) -> Self {
        let flat: Vec<f64> = pixels.into_iter().flatten().collect();
        let data = Array3::from_shape_vec((x_dim, y_dim, z_dim), flat).expect("pixel count matches");
        Self {
            name: name.to_string(),
            data,
        }
    }
}

/// Sample encoding of the cube payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    #[default]
    F32,
    F64,
}

impl ValueType {
    fn code(self) -> u8 {
        match self {
            ValueType::F32 => 1,
            ValueType::F64 => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ValueType::F32),
            2 => Some(ValueType::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            ValueType::F32 => 4,
            ValueType::F64 => 8,
        }
    }
}

fn dim_u32(field: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| CubeError::Malformed {
        field,
        reason: format!("{v} does not fit in 32 bits"),
    })
}

/// Serializes `cube` in the binary cube format.
///
/// `F32` rounds each sample to single precision.
pub fn write_cube(cube: &HsiCube, mut out: impl Write, value_type: ValueType) -> Result<()> {
    let (x, y, z) = cube.dims();
    let name = cube.name.as_bytes();
    let mut header = Vec::with_capacity(HEADER_LEN + name.len());
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.push(value_type.code());
    header.push(0);
    header.extend_from_slice(&dim_u32("x_dim", x)?.to_le_bytes());
    header.extend_from_slice(&dim_u32("y_dim", y)?.to_le_bytes());
    header.extend_from_slice(&dim_u32("z_dim", z)?.to_le_bytes());
    header.extend_from_slice(&dim_u32("name_len", name.len())?.to_le_bytes());
    header.extend_from_slice(name);
    out.write_all(&header)?;

    let mut payload = Vec::with_capacity(cube.data.len() * value_type.size());
    for &v in cube.data.iter() {
        match value_type {
            ValueType::F32 => payload.extend_from_slice(&(v as f32).to_le_bytes()),
            ValueType::F64 => payload.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

/// Parses a cube from the binary cube format, returning it with its payload type.
pub fn read_cube(mut input: impl Read) -> Result<(HsiCube, ValueType)> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CubeError::Malformed {
            field: "header",
            reason: format!("shorter than {HEADER_LEN} bytes"),
        },
        _ => CubeError::Io(e),
    })?;
    if header[..8] != MAGIC {
        return Err(CubeError::Malformed {
            field: "magic",
            reason: format!("expected {:?}, found {:?}", MAGIC, &header[..8]),
        });
    }
    let version = u16::from_le_bytes([header[8], header[9]]);
    if version != FORMAT_VERSION {
        return Err(CubeError::Malformed {
            field: "version",
            reason: format!("unsupported version {version}"),
        });
    }
    let value_type = ValueType::from_code(header[10]).ok_or_else(|| CubeError::Malformed {
        field: "value_type",
        reason: format!("unknown code {}", header[10]),
    })?;
    let dims = [
        ("x_dim", read_u32(&header, 12) as usize),
        ("y_dim", read_u32(&header, 16) as usize),
        ("z_dim", read_u32(&header, 20) as usize),
    ];
    for (field, v) in dims {
        if v == 0 {
            return Err(CubeError::Malformed {
                field,
                reason: "must be positive".into(),
            });
        }
    }
    let (x_dim, y_dim, z_dim) = (dims[0].1, dims[1].1, dims[2].1);
    let name_len = read_u32(&header, 24) as usize;
    let mut name = vec![0u8; name_len];
    input.read_exact(&mut name).map_err(|_| CubeError::Malformed {
        field: "name",
        reason: format!("truncated, expected {name_len} bytes"),
    })?;
    let name = String::from_utf8(name).map_err(|e| CubeError::Malformed {
        field: "name",
        reason: e.to_string(),
    })?;

    let count = x_dim
        .checked_mul(y_dim)
        .and_then(|v| v.checked_mul(z_dim))
        .ok_or_else(|| CubeError::Malformed {
            field: "dims",
            reason: "sample count overflows".into(),
        })?;
    let expected = count * value_type.size();
    let mut payload = Vec::with_capacity(expected);
    input.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(CubeError::SizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f64> = match value_type {
        ValueType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        ValueType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    let data = Array3::from_shape_vec((x_dim, y_dim, z_dim), values).expect("count checked");
    Ok((HsiCube::new(name, data)?, value_type))
}

pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>, value_type: ValueType) -> Result<()> {
    let file = File::create(path)?;
    write_cube(cube, BufWriter::new(file), value_type)
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let file = File::open(path)?;
    Ok(read_cube(BufReader::new(file))?.0)
}

/// Output of [`sparsify_cube`].
#[derive(Debug, Clone)]
pub struct SparsifiedCube {
    /// `I_spf`: every pixel thresholded in the DFT domain and synthesized back.
    pub cube: HsiCube,
    /// Mean of the per-pixel sparsity ratios, in percent.
    pub mean_sparsity_ratio: f64,
    /// Nonzero coefficient count per pixel, indexed `[[x, y]]`.
    pub kappa_map: Array2<usize>,
    /// Per-pixel sparsity ratios, indexed `[[x, y]]`.
    pub sparsity_ratios: Array2<f64>,
}

struct PixelSparsified {
    spectrum: Vec<f64>,
    kappa: usize,
    ratio: f64,
}

fn sparsify_pixel(psi: &TransformBasis, f: &Spectrum, threshold: f64) -> Result<PixelSparsified> {
    let x = analyze(psi, f)?;
    let (sparse, report) = sparsify::sparsify(&x, threshold)?;
    let spectrum = synthesize(psi, sparse.values())?.spectrum.into_values();
    Ok(PixelSparsified {
        spectrum,
        kappa: report.kappa,
        ratio: report.sparsity_ratio,
    })
}

/// Thresholds every pixel at `threshold` percent in the DFT domain.
pub fn sparsify_cube(cube: &HsiCube, threshold: f64) -> Result<SparsifiedCube> {
    if !(0.0..=100.0).contains(&threshold) {
        return Err(SparsifyError::ThresholdOutOfRange(threshold).into());
    }
    let z_dim = cube.z_dim();
    let psi = build_dft_basis(z_dim)?;
    sparsify_with_basis(cube, &psi, threshold)
}

fn sparsify_with_basis(cube: &HsiCube, psi: &TransformBasis, threshold: f64) -> Result<SparsifiedCube> {
    let (x_dim, y_dim, z_dim) = cube.dims();
    let pixels: Vec<PixelSparsified> = (0..x_dim * y_dim)
        .into_par_iter()
        .map(|idx| {
            let f = Spectrum::new(cube.pixel_slice(idx / y_dim, idx % y_dim).to_vec())?;
            sparsify_pixel(psi, &f, threshold)
        })
        .collect::<Result<_>>()?;

    let kappa_map = Array2::from_shape_fn((x_dim, y_dim), |(x, y)| pixels[x * y_dim + y].kappa);
    let sparsity_ratios =
        Array2::from_shape_fn((x_dim, y_dim), |(x, y)| pixels[x * y_dim + y].ratio);
    let mean_sparsity_ratio = pixels.iter().map(|p| p.ratio).sum::<f64>() / pixels.len() as f64;
    let spectra = pixels.into_iter().map(|p| p.spectrum).collect();
    Ok(SparsifiedCube {
        cube: HsiCube::from_pixels(&format!("{}-spf", cube.name), x_dim, y_dim, z_dim, spectra),
        mean_sparsity_ratio,
        kappa_map,
        sparsity_ratios,
    })
}

/// How `M` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Measurements {
    /// `M = round(N / factor)`.
    CompressionFactor(f64),
    Count(usize),
}

impl Measurements {
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            Measurements::CompressionFactor(f) => Ok(sensing::measurements_for(n, f)?),
            Measurements::Count(m) if m >= 1 && m < n => Ok(m),
            Measurements::Count(m) => Err(CubeError::InvalidConfig(format!(
                "measurement count {m} must lie in [1, {})",
                n
            ))),
        }
    }
}

/// Whether each pixel gets its own `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// Pixel `i` uses the seed `derive_seed(seed, i)`.
    PerPixel,
    /// One `Φ` drawn from `seed` for the whole cube.
    Shared,
}

/// Sparsity target handed to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum KappaMode {
    /// Each pixel's own nonzero count after thresholding.
    FromSparsification,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Sparsification threshold `T`, percent.
    pub threshold: f64,
    pub measurements: Measurements,
    pub group_size: usize,
    pub epsilon: Epsilon,
    pub max_iterations: Option<usize>,
    pub zero_input_tol: f64,
    pub kappa_mode: KappaMode,
    pub phi_mode: PhiMode,
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    pub ssi: SsiParams,
    pub psnr_cap_db: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: 0.0,
            measurements: Measurements::CompressionFactor(2.5),
            group_size: 2,
            epsilon: Epsilon::default(),
            max_iterations: None,
            zero_input_tol: 1e-12,
            kappa_mode: KappaMode::FromSparsification,
            phi_mode: PhiMode::PerPixel,
            seed: 0,
            threads: None,
            ssi: SsiParams::default(),
            psnr_cap_db: metrics::DEFAULT_PSNR_CAP_DB,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CubeError::InvalidConfig(m));
        if !(0.0..=100.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 100]", self.threshold));
        }
        if let Measurements::CompressionFactor(f) = self.measurements {
            if !(f.is_finite() && f > 1.0) {
                return bad(format!("compression factor must be > 1, got {f}"));
            }
        }
        if self.group_size == 0 {
            return bad("group size must be at least 1".into());
        }
        if let KappaMode::Fixed(k) = self.kappa_mode {
            if k == 0 {
                return bad("fixed kappa must be at least 1".into());
            }
            if self.group_size > k {
                return bad(format!("group size {} exceeds kappa {k}", self.group_size));
            }
        }
        if self.threads == Some(0) {
            return bad("thread count must be at least 1".into());
        }
        if !(self.psnr_cap_db.is_finite() && self.psnr_cap_db > 0.0) {
            return bad(format!("PSNR cap must be positive, got {}", self.psnr_cap_db));
        }
        // remaining solver fields are checked by GompConfig
        GompConfig {
            kappa: self.group_size,
            group_size: self.group_size,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            zero_input_tol: self.zero_input_tol,
        }
        .validate()
        .map_err(|e| CubeError::InvalidConfig(e.to_string()))
    }

    fn solver_config(&self, kappa: usize) -> GompConfig {
        GompConfig {
            kappa,
            // G ≤ κ; pixels sparser than G get a smaller group
            group_size: self.group_size.min(kappa),
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            zero_input_tol: self.zero_input_tol,
        }
    }
}

/// Per-pixel solver outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelDiagnostic {
    pub x: usize,
    pub y: usize,
    pub kappa: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta: f64,
    pub residual_norm: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelFailure {
    pub x: usize,
    pub y: usize,
    pub error: String,
}

/// Accuracy and performance of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub threshold: f64,
    pub mean_sparsity_ratio: f64,
    /// Spectral length `N`.
    pub spectral_length: usize,
    /// Measurements per pixel `M`.
    pub measurements: usize,
    pub spf_vs_or: QualityReport,
    pub rec_vs_or: QualityReport,
    pub rec_vs_spf: QualityReport,
    /// `J`, iterations summed over all pixels.
    pub total_iterations: usize,
    /// `t`, wall-clock seconds of the compress-and-recover phase.
    pub total_time_s: f64,
    pub perf: PerfReport,
    pub failures: Vec<PixelFailure>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub sparsified: HsiCube,
    pub recovered: HsiCube,
    pub report: PipelineReport,
    pub pixels: Vec<PixelDiagnostic>,
}

struct PixelRecovery {
    spectrum: Vec<f64>,
    diagnostic: PixelDiagnostic,
}

#[derive(Debug, Error)]
enum PixelError {
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Solver(#[from] GompError),
}

fn recover_pixel(
    f_spf: &Spectrum,
    kappa: usize,
    dictionary: &Dictionary,
    phi: &sensing::MeasurementMatrix,
    psi: &TransformBasis,
    config: &PipelineConfig,
) -> std::result::Result<(Vec<f64>, crate::gomp::GompResult), PixelError> {
    let y = compress(phi, f_spf)?;
    if kappa == 0 {
        // nothing survived thresholding: the pixel is identically zero
        let n = psi.n();
        let result = crate::gomp::GompResult {
            x_hat: sparsify::SparseVector::new(CVector::zeros(n)),
            iterations: 0,
            converged: true,
            final_delta: 0.0,
            residual_norm_history: Vec::new(),
            elapsed: 0.0,
        };
        return Ok((vec![0.0; n], result));
    }
    let result = gomp_recover(&y, dictionary, &config.solver_config(kappa))?;
    let spectrum = synthesize(psi, result.x_hat.values())?.spectrum.into_values();
    Ok((spectrum, result))
}

/// Sparsifies, compresses, and recovers every pixel of `cube`.
pub fn run_pipeline(cube: &HsiCube, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let (x_dim, y_dim, z_dim) = cube.dims();
    if z_dim < 4 {
        return Err(CubeError::InvalidConfig(format!(
            "spectral length must be at least 4, got {z_dim}"
        )));
    }
    let m = config.measurements.resolve(z_dim)?;
    if let KappaMode::Fixed(k) = config.kappa_mode {
        if k > m {
            return Err(CubeError::InvalidConfig(format!(
                "fixed kappa {k} exceeds the {m} measurements"
            )));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| CubeError::InvalidConfig(format!("worker pool: {e}")))?;

    pool.install(|| {
        let psi = build_dft_basis(z_dim)?;
        let spf = sparsify_with_basis(cube, &psi, config.threshold)?;
        let shared = match config.phi_mode {
            PhiMode::Shared => {
                let phi = build_measurement_matrix(m, z_dim, config.seed)?;
                let dict = compose_dictionary(&phi, &psi)?;
                Some((phi, dict))
            }
            PhiMode::PerPixel => None,
        };

        let pixel_count = x_dim * y_dim;
        let started = Instant::now();
        let recovered: Vec<PixelRecovery> = (0..pixel_count)
            .into_par_iter()
            .map(|idx| {
                let (x, y) = (idx / y_dim, idx % y_dim);
                let kappa = match config.kappa_mode {
                    KappaMode::FromSparsification => spf.kappa_map[[x, y]],
                    KappaMode::Fixed(k) => k,
                };
                let f_spf = Spectrum::new(spf.cube.pixel_slice(x, y).to_vec())
                    .expect("sparsified spectra are finite");
                let outcome = match &shared {
                    Some((phi, dict)) => recover_pixel(&f_spf, kappa, dict, phi, &psi, config),
                    None => build_measurement_matrix(m, z_dim, derive_seed(config.seed, idx as u64))
                        .and_then(|phi| Ok((compose_dictionary(&phi, &psi)?, phi)))
                        .map_err(PixelError::from)
                        .and_then(|(dict, phi)| recover_pixel(&f_spf, kappa, &dict, &phi, &psi, config)),
                };
                match outcome {
                    Ok((spectrum, result)) => PixelRecovery {
                        spectrum,
                        diagnostic: PixelDiagnostic {
                            x,
                            y,
                            kappa,
                            iterations: result.iterations,
                            converged: result.converged,
                            final_delta: result.final_delta,
                            residual_norm: result.residual_norm_history.last().copied().unwrap_or(0.0),
                            error: None,
                        },
                    },
                    Err(e) => {
                        log::warn!("pixel ({x}, {y}) failed: {e}");
                        PixelRecovery {
                            spectrum: vec![0.0; z_dim],
                            diagnostic: PixelDiagnostic {
                                x,
                                y,
                                kappa,
                                iterations: 0,
                                converged: false,
                                final_delta: f64::NAN,
                                residual_norm: f64::NAN,
                                error: Some(e.to_string()),
                            },
                        }
                    }
                }
            })
            .collect();
        let total_time_s = started.elapsed().as_secs_f64();
        log::info!(
            "recovered {pixel_count} pixels in {total_time_s:.3} s ({:.1} pixels/s)",
            pixel_count as f64 / total_time_s.max(f64::MIN_POSITIVE)
        );

        let mut pixels = Vec::with_capacity(pixel_count);
        let mut spectra = Vec::with_capacity(pixel_count);
        for p in recovered {
            spectra.push(p.spectrum);
            pixels.push(p.diagnostic);
        }
        let rec = HsiCube::from_pixels(&format!("{}-rec", cube.name), x_dim, y_dim, z_dim, spectra);

        let failures: Vec<PixelFailure> = pixels
            .iter()
            .filter_map(|p| {
                p.error.as_ref().map(|e| PixelFailure {
                    x: p.x,
                    y: p.y,
                    error: e.clone(),
                })
            })
            .collect();
        let total_iterations = pixels.iter().map(|p| p.iterations).sum();
        let perf = PerfReport {
            total_iterations,
            recovery_time_s: total_time_s,
            pixels_recovered: pixel_count - failures.len(),
            pixels_failed: failures.len(),
        };

        let quality = |a: &HsiCube, r: &HsiCube| {
            metrics::bandwise_average(a.data.view(), r.data.view(), &config.ssi, config.psnr_cap_db)
        };
        let report = PipelineReport {
            threshold: config.threshold,
            mean_sparsity_ratio: spf.mean_sparsity_ratio,
            spectral_length: z_dim,
            measurements: m,
            spf_vs_or: quality(&spf.cube, cube)?,
            rec_vs_or: quality(&rec, cube)?,
            rec_vs_spf: quality(&rec, &spf.cube)?,
            total_iterations,
            total_time_s,
            perf,
            failures,
            config: config.clone(),
        };
        Ok(PipelineOutput {
            sparsified: spf.cube,
            recovered: rec,
            report,
            pixels,
        })
    })
}

/// Draws a `kappa`-sparse DFT coefficient vector whose support is closed under
/// `j ↦ n − j` and whose values are conjugate-symmetric, so `Ψ x` is real.
///
/// Moduli are uniform in `[1, 2)`; the DC and Nyquist entries are real.
pub fn phantom_coefficients(n: usize, kappa: usize, rng: &mut impl Rng) -> Result<CVector> {
    if kappa > n {
        return Err(CubeError::InvalidConfig(format!(
            "kappa {kappa} exceeds spectral length {n}"
        )));
    }
    if n < 2 {
        return Err(CubeError::InvalidConfig(format!("spectral length {n} below 2")));
    }
    let pairs: Vec<usize> = (1..n.div_ceil(2)).collect();
    let mut singles = vec![0usize];
    if n % 2 == 0 {
        singles.push(n / 2);
    }
    // fewest self-conjugate entries with the right parity that still fit
    let single_count = (0..=singles.len())
        .find(|&s| s <= kappa && (kappa - s) % 2 == 0 && (kappa - s) / 2 <= pairs.len())
        .expect("a parity-compatible split exists for kappa <= n");
    let pair_count = (kappa - single_count) / 2;

    let chosen = rand::seq::index::sample(rng, pairs.len(), pair_count);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for &s in &singles[..single_count] {
        let magnitude = rng.random_range(1.0..2.0);
        let sign = if s == 0 || rng.random_bool(0.5) { 1.0 } else { -1.0 };
        x[s] = Complex64::new(sign * magnitude, 0.0);
    }
    for i in chosen.iter() {
        let j = pairs[i];
        let z = Complex64::from_polar(
            rng.random_range(1.0..2.0),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        x[j] = z;
        x[n - j] = z.conj();
    }
    Ok(CVector::new(x).expect("finite coefficients"))
}

/// A synthetic cube whose every pixel is exactly `kappa`-sparse in the DFT domain.
pub fn generate_phantom_cube(
    x_dim: usize,
    y_dim: usize,
    z_dim: usize,
    kappa: usize,
    seed: u64,
) -> Result<HsiCube> {
    if x_dim == 0 || y_dim == 0 || z_dim < 2 {
        return Err(CubeError::InvalidConfig(format!(
            "phantom dimensions {x_dim}×{y_dim}×{z_dim} are too small"
        )));
    }
    if kappa == 0 || kappa > z_dim {
        return Err(CubeError::InvalidConfig(format!(
            "kappa {kappa} must lie in [1, {z_dim}]"
        )));
    }
    let psi = build_dft_basis(z_dim)?;
    let spectra: Vec<Vec<f64>> = (0..x_dim * y_dim)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, idx as u64));
            let x = phantom_coefficients(z_dim, kappa, &mut rng)?;
            Ok(synthesize(&psi, &x)?.spectrum.into_values())
        })
        .collect::<Result<_>>()?;
    Ok(HsiCube::from_pixels(
        &format!("phantom-k{kappa}-s{seed}"),
        x_dim,
        y_dim,
        z_dim,
        spectra,
    ))
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` to every sample.
pub fn add_gaussian_noise(cube: &HsiCube, sigma: f64, seed: u64) -> Result<HsiCube> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| CubeError::InvalidConfig(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = cube.data.mapv(|v| v + normal.sample(&mut rng));
    HsiCube::new(format!("{}-noisy", cube.name), data)
}
