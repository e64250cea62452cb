//! Seeded recovery trials on planted sparse spectra.
//!
//! A trial with seed `s` draws, from `ChaCha8Rng::seed_from_u64(s)` and in this
//! order: the planted coefficients (via [`phantom_coefficients`]) and then the
//! `u64` seed of `Φ`. The real spectrum `Ψ x` is compressed and handed to gOMP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cube::{phantom_coefficients, CubeError};
use crate::gomp::{gomp_recover, GompConfig};
use crate::linalg::l2_norm;
use crate::sensing::{compose_dictionary, compress, gaussian_matrix, synthesize, TransformBasis};

/// Relative ℓ2 error below which a trial counts as a success.
pub const SUCCESS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// `‖x̂ − x‖₂ / ‖x‖₂`; infinite when the solver returned an error.
    pub relative_error: f64,
    pub iterations: usize,
    pub elapsed_s: f64,
    pub solver_error: Option<String>,
}

impl TrialOutcome {
    pub fn succeeded(&self) -> bool {
        self.relative_error < SUCCESS_TOLERANCE
    }
}

/// One planted recovery with `m ≤ n` measurements of a `config.kappa`-sparse spectrum.
pub fn planted_trial(
    psi: &TransformBasis,
    m: usize,
    config: &GompConfig,
    seed: u64,
) -> Result<TrialOutcome, CubeError> {
    let n = psi.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = phantom_coefficients(n, config.kappa, &mut rng)?;
    let phi = gaussian_matrix(m, n, rng.random())?;
    let a = compose_dictionary(&phi, psi)?;
    let f = synthesize(psi, &x)?.spectrum;
    let y = compress(&phi, &f)?;
    Ok(match gomp_recover(&y, &a, config) {
        Ok(res) => {
            let diff = res.x_hat.values().sub(&x).expect("equal lengths");
            TrialOutcome {
                relative_error: l2_norm(&diff) / l2_norm(&x),
                iterations: res.iterations,
                elapsed_s: res.elapsed,
                solver_error: None,
            }
        }
        Err(e) => TrialOutcome {
            relative_error: f64::INFINITY,
            iterations: 0,
            elapsed_s: 0.0,
            solver_error: Some(e.to_string()),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_iterations: f64,
    pub mean_time_s: f64,
}

pub fn summarize(outcomes: &[TrialOutcome]) -> TrialSummary {
    let trials = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.succeeded()).count();
    let denom = trials.max(1) as f64;
    TrialSummary {
        trials,
        successes,
        success_rate: successes as f64 / denom,
        mean_iterations: outcomes.iter().map(|o| o.iterations as f64).sum::<f64>() / denom,
        mean_time_s: outcomes.iter().map(|o| o.elapsed_s).sum::<f64>() / denom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::build_dft_basis;

    #[test]
    fn trials_are_reproducible() {
        let psi = build_dft_basis(64).unwrap();
        let cfg = GompConfig::new(4, 2);
        let a = planted_trial(&psi, 32, &cfg, 9).unwrap();
        let b = planted_trial(&psi, 32, &cfg, 9).unwrap();
        assert_eq!(a.relative_error.to_bits(), b.relative_error.to_bits());
        assert_eq!(a.iterations, b.iterations);
        assert!(a.succeeded());
    }

    #[test]
    fn uncompressed_case_is_allowed() {
        let psi = build_dft_basis(32).unwrap();
        let out = planted_trial(&psi, 32, &GompConfig::new(3, 1), 4).unwrap();
        assert!(out.succeeded(), "{out:?}");
    }

    #[test]
    fn solver_errors_count_as_failures() {
        let psi = build_dft_basis(16).unwrap();
        // κ = 8 > M = 6 is rejected by the solver
        let out = planted_trial(&psi, 6, &GompConfig::new(8, 2), 1).unwrap();
        assert!(!out.succeeded());
        assert!(out.solver_error.is_some());
        let s = summarize(&[out]);
        assert_eq!(s.successes, 0);
        assert_eq!(s.success_rate, 0.0);
    }
}
