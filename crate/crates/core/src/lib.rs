//! Compressive sensing of hyperspectral pixels.
//!
//! Each spectrum `f` is represented in the unitary DFT basis (`x = Ψ⁻¹ f`),
//! hard-thresholded, compressed with a Gaussian matrix `Φ`, and recovered from
//! `y = Φ Ψ x` by generalized orthogonal matching pursuit.
//!
//! * [`linalg`]: dense complex vectors, matrices and Householder least squares.
//! * [`sensing`]: the DFT basis, measurement matrices, compression and synthesis.
//! * [`sparsify`]: thresholding and threshold calibration.
//! * [`gomp`]: the recovery solver.
//! * [`metrics`]: PSNR and SSI.
//! * [`cube`]: cube I/O, phantoms and the per-pixel pipeline.
//! * [`study`]: seeded planted-recovery trials.

pub mod cube;
pub mod gomp;
pub mod linalg;
pub mod metrics;
pub mod sensing;
pub mod sparsify;
pub mod study;

pub use cube::{
    generate_phantom_cube, load_cube, run_pipeline, save_cube, HsiCube, PipelineConfig,
    PipelineOutput, PipelineReport,
};
pub use gomp::{gomp_recover, Epsilon, GompConfig, GompError, GompResult};
pub use linalg::{CMatrix, CVector};
pub use metrics::{PerfReport, QualityReport, SsiParams};
pub use sensing::{Measurement, Spectrum};
pub use sparsify::{sparsify, SparseVector, SparsifyReport};
