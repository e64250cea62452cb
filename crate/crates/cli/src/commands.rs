use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::Context;
use hsics_core::cube::{
    add_gaussian_noise, generate_phantom_cube, load_cube, run_pipeline, save_cube,
    sparsify_cube, CubeError, HsiCube, KappaMode, PipelineConfig,
};
use hsics_core::gomp::gomp_recover;
use hsics_core::linalg::CVector;
use hsics_core::metrics::{self, psnr, ssi_1d, stack_complex, SsiParams};
use hsics_core::sensing::{
    analyze, build_dft_basis, build_measurement_matrix, compose_dictionary, compress, derive_seed,
    synthesize,
};
use hsics_core::study::{planted_trial, summarize, SUCCESS_TOLERANCE};
use hsics_core::sparsify::sparsify as threshold_coefficients;
use hsics_core::GompConfig;

use crate::report;
use crate::{
    Failure, GenPhantomArgs, MetricsArgs, PipelineArgs, RecoverPixelArgs, SolverArgs, SparsifyArgs,
    SweepArgs,
};

type Outcome = Result<(), Failure>;

fn cube_err(e: impl Into<CubeError>) -> Failure {
    Failure::from(e.into())
}

fn load(path: &Path) -> Result<HsiCube, Failure> {
    load_cube(path).map_err(|e| match e {
        CubeError::Io(io) => Failure::Data(anyhow::Error::new(io).context(format!("reading {}", path.display()))),
        other => Failure::Data(anyhow::Error::new(other).context(format!("loading {}", path.display()))),
    })
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn finite_psnr(p: f64, cap: f64) -> f64 {
    p.clamp(-cap, cap)
}

pub fn gen_phantom(args: GenPhantomArgs) -> Outcome {
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(Failure::Usage(format!("--noise must be non-negative, got {}", args.noise)));
    }
    let (x, y, z) = args.dims;
    let mut cube = generate_phantom_cube(x, y, z, args.kappa, args.seed)?;
    if args.noise > 0.0 {
        cube = add_gaussian_noise(&cube, args.noise, derive_seed(args.seed, u64::MAX))?;
    }
    save_cube(&cube, &args.out, args.value_type.into())
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote {x}×{y}×{z} phantom to {}", args.out.display());
    Ok(())
}

pub fn sparsify(args: SparsifyArgs) -> Outcome {
    let cube = load(&args.input)?;
    let out = sparsify_cube(&cube, args.threshold)?;
    save_cube(&out.cube, &args.out, args.value_type.into())
        .with_context(|| format!("writing {}", args.out.display()))?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "T,SR")?;
    writeln!(stdout, "{},{}", args.threshold, out.mean_sparsity_ratio)?;
    Ok(())
}

fn pipeline_config(
    threshold: f64,
    solver: &SolverArgs,
    kappa: Option<usize>,
    threads: Option<usize>,
    psnr_cap: f64,
) -> PipelineConfig {
    PipelineConfig {
        threshold,
        measurements: solver.measurement_rule(),
        group_size: solver.group_size,
        epsilon: solver.epsilon(),
        max_iterations: solver.max_iterations,
        kappa_mode: kappa.map_or(KappaMode::FromSparsification, KappaMode::Fixed),
        seed: solver.seed,
        threads: Some(threads.unwrap_or_else(available_threads)),
        psnr_cap_db: psnr_cap,
        ..PipelineConfig::default()
    }
}

fn create_in(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn pipeline(args: PipelineArgs) -> Outcome {
    if !(0.0..=1.0).contains(&args.max_fail) {
        return Err(Failure::Usage(format!("--max-fail must lie in [0, 1], got {}", args.max_fail)));
    }
    let mut config = pipeline_config(
        args.threshold,
        &args.solver,
        args.kappa,
        args.threads,
        args.psnr_cap,
    );
    config.phi_mode = args.phi_mode.into();
    config.validate()?;

    let cube = load(&args.input)?;
    let out = run_pipeline(&cube, &config)?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let vt = args.value_type.into();
    save_cube(&out.sparsified, args.out_dir.join("spf.hsic"), vt).context("writing spf.hsic")?;
    save_cube(&out.recovered, args.out_dir.join("rec.hsic"), vt).context("writing rec.hsic")?;
    let mut json = create_in(&args.out_dir, "report.json")?;
    report::write_json(&out.report, &mut json)?;
    json.flush()?;
    report::write_csv(&out.report, create_in(&args.out_dir, "report.csv")?)?;
    if args.diagnostics {
        report::write_diagnostics(&out.pixels, create_in(&args.out_dir, "pixels.csv")?)?;
    }
    report::write_csv(&out.report, io::stdout().lock())?;

    let failed = out.report.perf.pixels_failed;
    let total = cube.pixel_count();
    if failed as f64 > args.max_fail * total as f64 {
        return Err(Failure::Solver(format!(
            "{failed} of {total} pixels failed, above --max-fail {}",
            args.max_fail
        )));
    }
    Ok(())
}

pub fn metrics(args: MetricsArgs) -> Outcome {
    let a = load(&args.input)?;
    let reference = load(&args.reference)?;
    let q = metrics::bandwise_average(
        a.data().view(),
        reference.data().view(),
        &SsiParams::default(),
        args.psnr_cap,
    )?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "PSNR,SSI")?;
    writeln!(stdout, "{},{}", q.psnr_finite(args.psnr_cap), q.ssi)?;
    Ok(())
}

fn parse_list<T: FromStr>(raw: &str, flag: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| Failure::Usage(format!("{flag}: cannot parse {s:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(Failure::Usage(format!("{flag} is empty")));
    }
    Ok(items)
}

fn relative_error(a: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(reference).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = reference.iter().map(|q| q * q).sum::<f64>().sqrt();
    if norm == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / norm
    }
}

pub fn sweep(args: SweepArgs) -> Outcome {
    if args.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    // opened only after the grid is validated, so usage errors leave no file behind
    let open_sink = || -> Result<csv::Writer<Box<dyn Write>>, Failure> {
        let sink: Box<dyn Write> = match &args.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(io::stdout().lock()),
        };
        Ok(csv::Writer::from_writer(sink))
    };

    match (&args.input, &args.spectral_length) {
        (Some(input), None) => {
            let thresholds: Vec<f64> =
                parse_list(args.thresholds.as_deref().unwrap_or(""), "--thresholds")?;
            let cube = load(input)?;
            let mut w = open_sink()?;
            w.write_record(["T", "trials", "pixels", "success_rate", "mean_J", "mean_t"])
                .context("writing CSV")?;
            for &t in &thresholds {
                let mut successes = 0usize;
                let mut iterations = 0usize;
                let mut time = 0.0;
                for trial in 0..args.trials {
                    let mut solver = args.solver.clone();
                    solver.seed = derive_seed(args.solver.seed, trial as u64);
                    let config = pipeline_config(t, &solver, None, args.threads, metrics::DEFAULT_PSNR_CAP_DB);
                    let out = run_pipeline(&cube, &config)?;
                    iterations += out.report.total_iterations;
                    time += out.report.total_time_s;
                    for p in &out.pixels {
                        let rec = out.recovered.extract_pixel(p.x, p.y)?;
                        let spf = out.sparsified.extract_pixel(p.x, p.y)?;
                        if p.error.is_none()
                            && relative_error(rec.values(), spf.values()) < SUCCESS_TOLERANCE
                        {
                            successes += 1;
                        }
                    }
                }
                let runs = (args.trials * cube.pixel_count()) as f64;
                w.write_record([
                    t.to_string(),
                    args.trials.to_string(),
                    cube.pixel_count().to_string(),
                    (successes as f64 / runs).to_string(),
                    (iterations as f64 / runs).to_string(),
                    (time / args.trials as f64).to_string(),
                ])
                .context("writing CSV")?;
                log::info!("T = {t}: {successes} of {runs} pixel recoveries succeeded");
            }
            w.flush().context("writing CSV")?;
        }
        (None, Some(n)) => {
            let kappas: Vec<usize> = parse_list(args.kappas.as_deref().unwrap_or(""), "--kappas")?;
            let ms: Vec<usize> = parse_list(args.ms.as_deref().unwrap_or(""), "--ms")?;
            let n = *n;
            let mut cells = Vec::with_capacity(kappas.len() * ms.len());
            for &kappa in &kappas {
                for &m in &ms {
                    if kappa == 0 || m == 0 || m > n || kappa > m {
                        return Err(Failure::Usage(format!(
                            "grid cell kappa = {kappa}, M = {m} needs 1 <= kappa <= M <= N = {n}"
                        )));
                    }
                    let config = GompConfig {
                        kappa,
                        group_size: args.solver.group_size.min(kappa),
                        epsilon: args.solver.epsilon(),
                        max_iterations: args.solver.max_iterations,
                        zero_input_tol: GompConfig::new(1, 1).zero_input_tol,
                    };
                    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
                    cells.push((m, config));
                }
            }
            let psi = build_dft_basis(n).map_err(cube_err)?;
            let mut w = open_sink()?;
            w.write_record(["N", "kappa", "M", "G", "trials", "success_rate", "mean_J", "mean_t"])
                .context("writing CSV")?;
            for (m, config) in cells {
                let started = Instant::now();
                let outcomes = (0..args.trials)
                    .map(|k| planted_trial(&psi, m, &config, derive_seed(args.solver.seed, k as u64)))
                    .collect::<Result<Vec<_>, _>>()?;
                let s = summarize(&outcomes);
                w.write_record([
                    n.to_string(),
                    config.kappa.to_string(),
                    m.to_string(),
                    config.group_size.to_string(),
                    s.trials.to_string(),
                    s.success_rate.to_string(),
                    s.mean_iterations.to_string(),
                    s.mean_time_s.to_string(),
                ])
                .context("writing CSV")?;
                log::info!(
                    "kappa = {}, M = {m}: {}/{} in {:.2} s",
                    config.kappa,
                    s.successes,
                    s.trials,
                    started.elapsed().as_secs_f64()
                );
            }
            w.flush().context("writing CSV")?;
        }
        _ => {
            return Err(Failure::Usage(
                "give either --input with --thresholds, or --spectral-length with --kappas and --ms".into(),
            ))
        }
    }
    Ok(())
}

pub fn recover_pixel(args: RecoverPixelArgs) -> Outcome {
    let cube = load(&args.input)?;
    let f = cube.extract_pixel(args.x, args.y)?;
    let n = cube.z_dim();
    let psi = build_dft_basis(n).map_err(cube_err)?;
    let x = analyze(&psi, &f).map_err(cube_err)?;
    let (x_spf, rep) = threshold_coefficients(&x, args.threshold).map_err(cube_err)?;
    let f_spf = synthesize(&psi, x_spf.values()).map_err(cube_err)?.spectrum;

    let m = args.solver.measurement_rule().resolve(n)?;
    let index = (args.x * cube.y_dim() + args.y) as u64;
    let phi = build_measurement_matrix(m, n, derive_seed(args.solver.seed, index)).map_err(cube_err)?;
    let a = compose_dictionary(&phi, &psi).map_err(cube_err)?;
    let y = compress(&phi, &f_spf).map_err(cube_err)?;
    let kappa = args.kappa.unwrap_or(rep.kappa);

    let (x_hat, iterations) = if kappa == 0 {
        (CVector::zeros(n), 0)
    } else {
        let config = GompConfig {
            kappa,
            group_size: args.solver.group_size.min(kappa),
            epsilon: args.solver.epsilon(),
            max_iterations: args.solver.max_iterations,
            zero_input_tol: GompConfig::new(1, 1).zero_input_tol,
        };
        let res = gomp_recover(&y, &a, &config).map_err(|e| Failure::Solver(e.to_string()))?;
        (res.x_hat.into_values(), res.iterations)
    };
    let f_hat = synthesize(&psi, &x_hat).map_err(cube_err)?.spectrum;

    let params = SsiParams::default();
    let cap = args.psnr_cap;
    let pairs: [(&str, &CVector, &CVector, &[f64], &[f64]); 3] = [
        ("spf_vs_or", x_spf.values(), &x, f_spf.values(), f.values()),
        ("rec_vs_spf", &x_hat, x_spf.values(), f_hat.values(), f_spf.values()),
        ("rec_vs_or", &x_hat, &x, f_hat.values(), f.values()),
    ];
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["T", "kappa", "M", "J", "pair", "domain", "PSNR", "SSI"])
        .context("writing CSV")?;
    for (name, xa, xr, fa, fr) in pairs {
        let sa = stack_complex(xa.as_slice());
        let sr = stack_complex(xr.as_slice());
        for (domain, a, r) in [("transform", sa.as_slice(), sr.as_slice()), ("acquisition", fa, fr)] {
            let p = finite_psnr(psnr(a, r)?, cap);
            let s = ssi_1d(a, r, &params)?.value;
            w.write_record([
                args.threshold.to_string(),
                kappa.to_string(),
                m.to_string(),
                iterations.to_string(),
                name.to_string(),
                domain.to_string(),
                p.to_string(),
                s.to_string(),
            ])
            .context("writing CSV")?;
        }
    }
    w.flush().context("writing CSV")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list::<f64>("1, 2.5,3", "--t").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(matches!(parse_list::<f64>("", "--t"), Err(Failure::Usage(_))));
        assert!(matches!(parse_list::<f64>(" , ", "--t"), Err(Failure::Usage(_))));
        assert!(matches!(parse_list::<usize>("4,x", "--k"), Err(Failure::Usage(_))));
    }

    #[test]
    fn relative_error_handles_zero_reference() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[0.0, 0.0]), f64::INFINITY);
        assert!((relative_error(&[1.0, 1.0], &[1.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_maps_flags() {
        let solver = SolverArgs {
            compression: 2.5,
            measurements: Some(30),
            group_size: 3,
            epsilon: 1e-4,
            absolute_epsilon: true,
            max_iterations: Some(7),
            seed: 11,
        };
        let c = pipeline_config(4.0, &solver, Some(9), Some(2), 250.0);
        assert_eq!(c.threshold, 4.0);
        assert_eq!(c.measurements, hsics_core::cube::Measurements::Count(30));
        assert_eq!(c.group_size, 3);
        assert_eq!(c.epsilon, hsics_core::Epsilon::Absolute(1e-4));
        assert_eq!(c.max_iterations, Some(7));
        assert_eq!(c.kappa_mode, KappaMode::Fixed(9));
        assert_eq!(c.seed, 11);
        assert_eq!(c.threads, Some(2));
        assert_eq!(c.psnr_cap_db, 250.0);
    }
}
