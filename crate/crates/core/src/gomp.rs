//! Generalized Orthogonal Matching Pursuit.
//!
//! Each iteration runs four steps against the dictionary `A`:
//!
//! 1. **identify**: project the previous residual onto every atom,
//!    `p = A* r`, and add the `G` atoms with the largest `|p|` to the support;
//! 2. **estimate**: least-squares fit of `y` over the accumulated support;
//! 3. **prune**: keep the `κ` largest-modulus coefficients of that fit and
//!    re-fit `y` over just those atoms;
//! 4. **residual**: `r = y − A x` and `Δ = ‖r − r_prev‖₂`.
//!
//! The loop runs while `Δ ≥ ε`. The support only grows (pruning shapes the
//! estimate, not the support), and atoms already in the support are excluded
//! from step 1 so that every iteration contributes new candidates.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, l2_norm, CVector, LinalgError};
use crate::sensing::{Dictionary, Measurement};
use crate::sparsify::SparseVector;

/// Stopping threshold on the residual change `Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Epsilon {
    /// `ε = value · ‖y‖₂`.
    Relative(f64),
    /// `ε = value`, in the units of `y`.
    Absolute(f64),
}

impl Epsilon {
    pub fn resolve(self, y_norm: f64) -> f64 {
        match self {
            Epsilon::Relative(v) => v * y_norm,
            Epsilon::Absolute(v) => v,
        }
    }

    fn value(self) -> f64 {
        match self {
            Epsilon::Relative(v) | Epsilon::Absolute(v) => v,
        }
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Relative(1e-6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GompConfig {
    /// Target sparsity `κ`.
    pub kappa: usize,
    /// Atoms added per iteration, `G`.
    pub group_size: usize,
    pub epsilon: Epsilon,
    /// Hard iteration cap; `None` means `ceil(κ/G) + 20`.
    pub max_iterations: Option<usize>,
    /// `‖y‖₂` at or below which the measurement is treated as zero.
    pub zero_input_tol: f64,
}

impl GompConfig {
    pub fn new(kappa: usize, group_size: usize) -> Self {
        Self {
            kappa,
            group_size,
            epsilon: Epsilon::default(),
            max_iterations: None,
            zero_input_tol: 1e-12,
        }
    }

    pub fn with_epsilon(mut self, epsilon: Epsilon) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = Some(max_iterations);
        self
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iterations
            .unwrap_or_else(|| self.kappa.div_ceil(self.group_size.max(1)) + 20)
    }

    pub fn validate(&self) -> Result<(), GompError> {
        let bad = |msg: String| Err(GompError::InvalidConfig(msg));
        if self.kappa == 0 {
            return bad("kappa must be at least 1".into());
        }
        if self.group_size == 0 {
            return bad("group size must be at least 1".into());
        }
        if self.group_size > self.kappa {
            return bad(format!(
                "group size {} exceeds kappa {}",
                self.group_size, self.kappa
            ));
        }
        let eps = self.epsilon.value();
        if !(eps.is_finite() && eps > 0.0) {
            return bad(format!("epsilon must be positive, got {eps}"));
        }
        if self.max_iterations == Some(0) {
            return bad("max iterations must be at least 1".into());
        }
        if !(self.zero_input_tol.is_finite() && self.zero_input_tol >= 0.0) {
            return bad(format!(
                "zero-input tolerance must be non-negative, got {}",
                self.zero_input_tol
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GompError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("support of {support} atoms exceeds {measurements} measurements at iteration {iteration}")]
    SupportExceedsMeasurements {
        iteration: usize,
        support: usize,
        measurements: usize,
    },
    #[error("least squares over support {support:?} failed at iteration {iteration}: {source}")]
    LeastSquares {
        iteration: usize,
        support: Vec<usize>,
        #[source]
        source: LinalgError,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Iterate carried between gOMP iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct GompState {
    pub iteration: usize,
    pub residual: CVector,
    pub prev_residual: CVector,
    /// Accumulated support in selection order.
    pub support: Vec<usize>,
    pub delta: f64,
}

impl GompState {
    fn initial(y: &CVector) -> Self {
        Self {
            iteration: 0,
            residual: y.clone(),
            prev_residual: y.clone(),
            support: Vec::new(),
            // guarantees loop entry whatever ε resolves to
            delta: f64::INFINITY,
        }
    }
}

/// Everything one iteration computed, handed to the observer of
/// [`gomp_recover_observed`].
#[derive(Debug, Clone)]
pub struct IterationTrace<'a> {
    pub iteration: usize,
    /// Atoms added by step 1.
    pub selected: &'a [usize],
    /// Accumulated support after step 1.
    pub support: &'a [usize],
    /// Step-2 least-squares coefficients, aligned with `support`.
    pub support_estimate: &'a CVector,
    /// Step-3 pruned support.
    pub pruned: &'a [usize],
    /// Step-3 re-estimated coefficients, aligned with `pruned`.
    pub pruned_estimate: &'a CVector,
    pub residual: &'a CVector,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GompResult {
    pub x_hat: SparseVector,
    /// Iterations run, `J` for this pixel.
    pub iterations: usize,
    pub converged: bool,
    pub final_delta: f64,
    /// `‖r^i‖₂` after each iteration.
    pub residual_norm_history: Vec<f64>,
    /// Wall-clock seconds spent in the solver.
    pub elapsed: f64,
}

/// Step 1: indices of the `g` atoms with the largest `|A* r|`, skipping `exclude`.
///
/// Returns fewer than `g` indices only when fewer candidates remain.
pub fn step_identify(
    a: &Dictionary,
    r: &CVector,
    g: usize,
    exclude: &[usize],
) -> Result<Vec<usize>, GompError> {
    if r.len() != a.rows() {
        return Err(GompError::DimensionMismatch {
            op: "step_identify",
            expected: a.rows(),
            found: r.len(),
        });
    }
    let n = a.cols();
    let mut excluded = vec![false; n];
    for &j in exclude {
        if j < n {
            excluded[j] = true;
        }
    }
    let candidates: Vec<usize> = (0..n).filter(|&j| !excluded[j]).collect();
    if candidates.is_empty() || g == 0 {
        return Ok(Vec::new());
    }
    let p = linalg::matvec(a.adjoint(), r)?;
    let magnitudes: Vec<f64> = candidates.iter().map(|&j| p[j].norm()).collect();
    let take = g.min(candidates.len());
    let picked = linalg::argmax_k(&magnitudes, take)?;
    Ok(picked.into_iter().map(|i| candidates[i]).collect())
}

/// Step 2: least-squares coefficients of `y` over the atoms in `support`.
pub fn step_estimate(
    a: &Dictionary,
    support: &[usize],
    y: &Measurement,
) -> Result<CVector, LinalgError> {
    if support.is_empty() {
        return Err(LinalgError::Empty);
    }
    if support.len() > a.rows() {
        return Err(LinalgError::InvalidArgument(format!(
            "support of {} atoms exceeds {} measurements",
            support.len(),
            a.rows()
        )));
    }
    if y.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "step_estimate",
            expected: a.rows(),
            found: y.len(),
        });
    }
    let b = a.matrix().select_columns(support)?;
    linalg::least_squares_solve(&b, &y.to_cvector())
}

/// Step 3: indices of the `kappa` largest-modulus entries of `x_candidate`,
/// or all of its nonzero entries if there are fewer than `kappa`.
pub fn step_prune(x_candidate: &CVector, kappa: usize) -> Result<Vec<usize>, LinalgError> {
    let moduli = x_candidate.moduli();
    let nonzero = moduli.iter().filter(|&&m| m != 0.0).count();
    if nonzero <= kappa {
        return Ok((0..moduli.len()).filter(|&j| moduli[j] != 0.0).collect());
    }
    linalg::argmax_k(&moduli, kappa)
}

/// Step 4: `r = y − A x` and `Δ = ‖r − prev_r‖₂`.
pub fn step_residual(
    y: &Measurement,
    a: &Dictionary,
    x: &CVector,
    prev_r: &CVector,
) -> Result<(CVector, f64), GompError> {
    if y.len() != a.rows() || prev_r.len() != a.rows() {
        return Err(GompError::DimensionMismatch {
            op: "step_residual",
            expected: a.rows(),
            found: if y.len() != a.rows() { y.len() } else { prev_r.len() },
        });
    }
    let ax = linalg::matvec(a.matrix(), x)?;
    let r = y.to_cvector().sub(&ax)?;
    let delta = l2_norm(&r.sub(prev_r)?);
    Ok((r, delta))
}

fn scatter(n: usize, indices: &[usize], values: &CVector) -> CVector {
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for (&j, &v) in indices.iter().zip(values.iter()) {
        x[j] = v;
    }
    CVector::from_raw(x)
}

/// Recovers a `κ`-sparse `x̂` with `y ≈ A x̂`.
pub fn gomp_recover(
    y: &Measurement,
    a: &Dictionary,
    config: &GompConfig,
) -> Result<GompResult, GompError> {
    gomp_recover_observed(y, a, config, |_| {})
}

/// [`gomp_recover`] with a callback invoked after every iteration.
pub fn gomp_recover_observed(
    y: &Measurement,
    a: &Dictionary,
    config: &GompConfig,
    mut observe: impl FnMut(&IterationTrace<'_>),
) -> Result<GompResult, GompError> {
    let start = Instant::now();
    config.validate()?;
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(GompError::DimensionMismatch {
            op: "gomp_recover",
            expected: m,
            found: y.len(),
        });
    }
    if n < config.kappa {
        return Err(GompError::InvalidConfig(format!(
            "kappa {} exceeds the {n} dictionary atoms",
            config.kappa
        )));
    }
    if m < config.kappa {
        return Err(GompError::InvalidConfig(format!(
            "kappa {} exceeds the {m} measurements",
            config.kappa
        )));
    }

    let y_vec = y.to_cvector();
    let y_norm = l2_norm(&y_vec);
    if y_norm <= config.zero_input_tol {
        return Ok(GompResult {
            x_hat: SparseVector::new(CVector::zeros(n)),
            iterations: 0,
            converged: true,
            final_delta: 0.0,
            residual_norm_history: Vec::new(),
            elapsed: start.elapsed().as_secs_f64(),
        });
    }

    let epsilon = config.epsilon.resolve(y_norm);
    let cap = config.iteration_cap();
    let mut state = GompState::initial(&y_vec);
    let mut x = CVector::zeros(n);
    let mut history = Vec::new();

    while state.delta >= epsilon && state.iteration < cap {
        let iteration = state.iteration + 1;

        let selected = step_identify(a, &state.residual, config.group_size, &state.support)?;
        state.support.extend_from_slice(&selected);
        if state.support.len() > m {
            return Err(GompError::SupportExceedsMeasurements {
                iteration,
                support: state.support.len(),
                measurements: m,
            });
        }

        let ls_error = |support: &[usize], source| GompError::LeastSquares {
            iteration,
            support: support.to_vec(),
            source,
        };
        let estimate =
            step_estimate(a, &state.support, y).map_err(|e| ls_error(&state.support, e))?;
        let candidate = scatter(n, &state.support, &estimate);

        let pruned = step_prune(&candidate, config.kappa)?;
        let pruned_estimate = if pruned.is_empty() {
            CVector::zeros(1)
        } else {
            step_estimate(a, &pruned, y).map_err(|e| ls_error(&pruned, e))?
        };
        x = if pruned.is_empty() {
            CVector::zeros(n)
        } else {
            scatter(n, &pruned, &pruned_estimate)
        };

        let (residual, delta) = step_residual(y, a, &x, &state.residual)?;
        history.push(l2_norm(&residual));
        observe(&IterationTrace {
            iteration,
            selected: &selected,
            support: &state.support,
            support_estimate: &estimate,
            pruned: &pruned,
            pruned_estimate: &pruned_estimate,
            residual: &residual,
            delta,
        });

        state.prev_residual = std::mem::replace(&mut state.residual, residual);
        state.delta = delta;
        state.iteration = iteration;
    }

    Ok(GompResult {
        x_hat: SparseVector::new(x),
        iterations: state.iteration,
        converged: state.delta < epsilon,
        final_delta: state.delta,
        residual_norm_history: history,
        elapsed: start.elapsed().as_secs_f64(),
    })
}
