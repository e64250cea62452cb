//! Machine-readable pipeline output.
//!
//! `report.csv` has a fixed header, one row per run:
//!
//! ```text
//! T,SR,PSNR_spf_or,SSI_spf_or,PSNR_rec_or,SSI_rec_or,PSNR_rec_spf,SSI_rec_spf,J,t
//! ```
//!
//! Infinite PSNR values (identical cubes) are written as the PSNR cap so that
//! both files stay plain numbers.

use std::io::Write;

use anyhow::Result;
use hsics_core::cube::{PipelineConfig, PipelineReport, PixelDiagnostic, PixelFailure};
use hsics_core::QualityReport;
use serde::Serialize;

pub const CSV_HEADER: [&str; 10] = [
    "T",
    "SR",
    "PSNR_spf_or",
    "SSI_spf_or",
    "PSNR_rec_or",
    "SSI_rec_or",
    "PSNR_rec_spf",
    "SSI_rec_spf",
    "J",
    "t",
];

#[derive(Debug, Serialize)]
pub struct QualityJson {
    pub psnr_db: f64,
    pub ssi: f64,
    pub ssi_raw: f64,
    pub capped_bands: usize,
    pub degenerate_bands: usize,
}

impl QualityJson {
    fn new(q: &QualityReport, cap: f64) -> Self {
        Self {
            psnr_db: q.psnr_finite(cap),
            ssi: q.ssi,
            ssi_raw: q.ssi_raw,
            capped_bands: q.capped_bands,
            degenerate_bands: q.degenerate_bands,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ReportJson<'a> {
    pub threshold: f64,
    pub sparsity_ratio: f64,
    pub spectral_length: usize,
    pub measurements: usize,
    pub spf_vs_or: QualityJson,
    pub rec_vs_or: QualityJson,
    pub rec_vs_spf: QualityJson,
    pub total_iterations: usize,
    pub recovery_time_s: f64,
    pub pixels_recovered: usize,
    pub pixels_failed: usize,
    pub failures: &'a [PixelFailure],
    pub config: &'a PipelineConfig,
}

impl<'a> ReportJson<'a> {
    pub fn new(report: &'a PipelineReport) -> Self {
        let cap = report.config.psnr_cap_db;
        Self {
            threshold: report.threshold,
            sparsity_ratio: report.mean_sparsity_ratio,
            spectral_length: report.spectral_length,
            measurements: report.measurements,
            spf_vs_or: QualityJson::new(&report.spf_vs_or, cap),
            rec_vs_or: QualityJson::new(&report.rec_vs_or, cap),
            rec_vs_spf: QualityJson::new(&report.rec_vs_spf, cap),
            total_iterations: report.total_iterations,
            recovery_time_s: report.total_time_s,
            pixels_recovered: report.perf.pixels_recovered,
            pixels_failed: report.perf.pixels_failed,
            failures: &report.failures,
            config: &report.config,
        }
    }
}

fn csv_row(report: &PipelineReport) -> Vec<String> {
    let cap = report.config.psnr_cap_db;
    vec![
        report.threshold.to_string(),
        report.mean_sparsity_ratio.to_string(),
        report.spf_vs_or.psnr_finite(cap).to_string(),
        report.spf_vs_or.ssi.to_string(),
        report.rec_vs_or.psnr_finite(cap).to_string(),
        report.rec_vs_or.ssi.to_string(),
        report.rec_vs_spf.psnr_finite(cap).to_string(),
        report.rec_vs_spf.ssi.to_string(),
        report.total_iterations.to_string(),
        report.total_time_s.to_string(),
    ]
}

/// Header plus one row.
pub fn write_csv(report: &PipelineReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    w.write_record(csv_row(report))?;
    w.flush()?;
    Ok(())
}

pub fn write_json(report: &PipelineReport, out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, &ReportJson::new(report))?;
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticRow<'a> {
    x: usize,
    y: usize,
    kappa: usize,
    iterations: usize,
    final_delta: f64,
    residual_norm: f64,
    error: &'a str,
}

/// Per-pixel diagnostics: `x,y,kappa,iterations,final_delta,residual_norm,error`.
pub fn write_diagnostics(pixels: &[PixelDiagnostic], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in pixels {
        w.serialize(DiagnosticRow {
            x: p.x,
            y: p.y,
            kappa: p.kappa,
            iterations: p.iterations,
            final_delta: p.final_delta,
            residual_norm: p.residual_norm,
            error: p.error.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}
