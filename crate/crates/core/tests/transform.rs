//! The DFT basis against a directly evaluated exponential, plus unitarity and
//! analysis/synthesis roundtrips at the spectral lengths of common sensors.

use hsics_core::linalg::{conj_transpose, CVector};
use hsics_core::sensing::{analyze, build_dft_basis, synthesize, Spectrum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LENGTHS: [usize; 5] = [8, 64, 103, 220, 224];

#[test]
fn basis_entries_match_direct_exponential() {
    for n in LENGTHS {
        let psi = build_dft_basis(n).unwrap();
        let scale = 1.0 / (n as f64).sqrt();
        for j in 0..n {
            for k in 0..n {
                let angle = -2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / n as f64;
                let want = Complex64::new(angle.cos(), angle.sin()) * scale;
                let got = psi.matrix().get(j, k);
                assert!((got - want).norm() < 1e-10, "n={n} ({j},{k})");
            }
        }
    }
}

#[test]
fn basis_is_unitary() {
    for n in LENGTHS {
        let psi = build_dft_basis(n).unwrap();
        let gram = conj_transpose(psi.matrix()).matmul(psi.matrix()).unwrap();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram.get(i, j) - Complex64::new(target, 0.0)).norm());
            }
        }
        assert!(worst < 1e-10, "n={n}: {worst:e}");
        let inv_gap = psi
            .inverse()
            .as_slice()
            .iter()
            .zip(conj_transpose(psi.matrix()).as_slice())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(inv_gap < 1e-15);
    }
}

#[test]
fn analyze_synthesize_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for n in LENGTHS {
        let psi = build_dft_basis(n).unwrap();
        for _ in 0..20 {
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let x = analyze(&psi, &Spectrum::new(f.clone()).unwrap()).unwrap();
            let back = synthesize(&psi, &x).unwrap();
            assert!(!back.symmetry_warning);
            let err = f
                .iter()
                .zip(back.spectrum.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n}: {err:e}");
            // Parseval
            let ef: f64 = f.iter().map(|v| v * v).sum();
            let ex: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            assert!((ef - ex).abs() < 1e-9 * ef);
        }
    }
}

#[test]
fn real_spectra_have_conjugate_symmetric_coefficients() {
    let n = 103;
    let psi = build_dft_basis(n).unwrap();
    let f: Vec<f64> = (0..n).map(|i| ((i * i) % 17) as f64).collect();
    let x: CVector = analyze(&psi, &Spectrum::new(f).unwrap()).unwrap();
    for j in 1..n {
        assert!((x[j] - x[n - j].conj()).norm() < 1e-10);
    }
}
