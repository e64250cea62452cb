//! `hsics`: batch front end for per-pixel compressive sensing of hyperspectral cubes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 too many solver failures.
//!
//! Every random draw comes from `--seed`. Phantom pixel `i` (row-major over
//! `x, y`) and the per-pixel `Φ` of pipeline pixel `i` use
//! `derive_seed(seed, i)`; phantom noise uses `derive_seed(seed, u64::MAX)`;
//! sweep trial `k` uses `derive_seed(seed, k)`.

mod commands;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsics_core::cube::{CubeError, Measurements, PhiMode, ValueType};
use hsics_core::metrics::MetricError;
use hsics_core::sensing::SensingError;
use hsics_core::sparsify::SparsifyError;
use hsics_core::Epsilon;

#[derive(Parser, Debug)]
#[command(name = "hsics", version, about = "Compressive sensing of hyperspectral cubes")]
struct Cli {
    /// Only print warnings and errors on standard error.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic cube whose pixels are exactly kappa-sparse in the DFT domain.
    GenPhantom(GenPhantomArgs),
    /// Threshold every pixel in the DFT domain and write the result.
    Sparsify(SparsifyArgs),
    /// Sparsify, compress and recover a cube; write both cubes and a report.
    Pipeline(PipelineArgs),
    /// Band-averaged PSNR and SSI between two cubes.
    Metrics(MetricsArgs),
    /// Success rate, mean iterations and mean time over a parameter grid.
    Sweep(SweepArgs),
    /// Run a single pixel and print per-domain PSNR/SSI.
    RecoverPixel(RecoverPixelArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ValueTypeArg {
    F32,
    F64,
}

impl From<ValueTypeArg> for ValueType {
    fn from(v: ValueTypeArg) -> Self {
        match v {
            ValueTypeArg::F32 => ValueType::F32,
            ValueTypeArg::F64 => ValueType::F64,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PhiModeArg {
    PerPixel,
    Shared,
}

impl From<PhiModeArg> for PhiMode {
    fn from(v: PhiModeArg) -> Self {
        match v {
            PhiModeArg::PerPixel => PhiMode::PerPixel,
            PhiModeArg::Shared => PhiMode::Shared,
        }
    }
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    if parts.len() != 3 {
        return Err(format!("expected XxYxZ, got {s:?}"));
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p
            .trim()
            .parse()
            .map_err(|e| format!("bad dimension {p:?}: {e}"))?;
        if *d == 0 {
            return Err("dimensions must be positive".into());
        }
    }
    Ok((dims[0], dims[1], dims[2]))
}

#[derive(Args, Debug)]
struct GenPhantomArgs {
    /// Cube size as XxYxZ, for example 8x8x64.
    #[arg(long, value_parser = parse_dims)]
    dims: (usize, usize, usize),
    #[arg(long)]
    kappa: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value = "f32")]
    value_type: ValueTypeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SparsifyArgs {
    #[arg(long)]
    input: PathBuf,
    /// Threshold T, percent of the largest coefficient modulus.
    #[arg(long)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "f32")]
    value_type: ValueTypeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// N / M; M = round(N / compression).
    #[arg(long, default_value_t = 2.5, conflicts_with = "measurements")]
    compression: f64,
    /// Explicit measurement count M.
    #[arg(long)]
    measurements: Option<usize>,
    /// Atoms added per iteration, G.
    #[arg(long, default_value_t = 2)]
    group_size: usize,
    /// Stopping threshold on the residual change.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Treat --epsilon as absolute instead of relative to the measurement norm.
    #[arg(long)]
    absolute_epsilon: bool,
    /// Iteration cap; defaults to ceil(kappa / G) + 20.
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn measurement_rule(&self) -> Measurements {
        match self.measurements {
            Some(m) => Measurements::Count(m),
            None => Measurements::CompressionFactor(self.compression),
        }
    }

    fn epsilon(&self) -> Epsilon {
        if self.absolute_epsilon {
            Epsilon::Absolute(self.epsilon)
        } else {
            Epsilon::Relative(self.epsilon)
        }
    }
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    threshold: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Fixed sparsity for every pixel instead of each pixel's own count.
    #[arg(long)]
    kappa: Option<usize>,
    #[arg(long, value_enum, default_value = "per-pixel")]
    phi_mode: PhiModeArg,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Largest tolerated fraction of failed pixels before exiting with 3.
    #[arg(long, default_value_t = 0.01)]
    max_fail: f64,
    /// PSNR reported for bands that match exactly.
    #[arg(long, default_value_t = hsics_core::metrics::DEFAULT_PSNR_CAP_DB)]
    psnr_cap: f64,
    /// Also write pixels.csv with per-pixel solver diagnostics.
    #[arg(long)]
    diagnostics: bool,
    #[arg(long, value_enum, default_value = "f32")]
    value_type: ValueTypeArg,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = hsics_core::metrics::DEFAULT_PSNR_CAP_DB)]
    psnr_cap: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Cube for a threshold sweep; requires --thresholds.
    #[arg(long, requires = "thresholds", conflicts_with_all = ["spectral_length", "kappas", "ms"])]
    input: Option<PathBuf>,
    /// Comma-separated thresholds T.
    #[arg(long)]
    thresholds: Option<String>,
    /// Spectral length N for a planted (kappa, M) grid.
    #[arg(long, requires_all = ["kappas", "ms"])]
    spectral_length: Option<usize>,
    /// Comma-separated sparsity levels.
    #[arg(long)]
    kappas: Option<String>,
    /// Comma-separated measurement counts.
    #[arg(long)]
    ms: Option<String>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    threads: Option<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RecoverPixelArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    x: usize,
    #[arg(long)]
    y: usize,
    #[arg(long)]
    threshold: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    kappa: Option<usize>,
    #[arg(long, default_value_t = hsics_core::metrics::DEFAULT_PSNR_CAP_DB)]
    psnr_cap: f64,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Solver(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Data(e) => write!(f, "{e:#}"),
            Failure::Solver(m) => write!(f, "{m}"),
        }
    }
}

impl From<CubeError> for Failure {
    fn from(e: CubeError) -> Self {
        match e {
            CubeError::InvalidConfig(_)
            | CubeError::Sparsify(SparsifyError::ThresholdOutOfRange(_))
            | CubeError::Sensing(SensingError::InvalidArgument(_))
            | CubeError::Metric(MetricError::InvalidParameter(_))
            | CubeError::OutOfRange { .. } => Failure::Usage(e.to_string()),
            other => Failure::Data(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::InvalidParameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Warn
        } else {
            log::LevelFilter::Info
        })
        .target(env_logger::Target::Stderr)
        .init();

    let outcome = match cli.command {
        Command::GenPhantom(a) => commands::gen_phantom(a),
        Command::Sparsify(a) => commands::sparsify(a),
        Command::Pipeline(a) => commands::pipeline(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::RecoverPixel(a) => commands::recover_pixel(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
