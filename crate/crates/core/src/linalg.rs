//! Dense complex linear algebra used by the recovery solver.
//!
//! Everything here is row-major and allocation-based; the largest systems the
//! pipeline builds are a few hundred columns wide, so there is no blocking and
//! no BLAS backend.
//!
//! The least-squares solver factors the system with complex Householder
//! reflections and back-substitutes against `R`. A column whose reflected
//! diagonal falls below `1e-12` times the largest diagonal is reported as a
//! rank deficiency instead of being regularized away.

use std::ops::Index;

use num_complex::Complex64;
use thiserror::Error;

/// Relative cut-off on the `R` diagonal below which a column is treated as
/// linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("rank-deficient system: numerical rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("empty vector or matrix")]
    Empty,
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// A dense complex column vector with at least one finite entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CVector(Vec<Complex64>);

impl CVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LinalgError::Empty);
        }
        if let Some(index) = entries
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(LinalgError::NonFinite { index });
        }
        Ok(Self(entries))
    }

    /// Lifts a real vector onto the complex plane with zero imaginary parts.
    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// # Panics
    /// Panics when `len == 0`.
    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "CVector must have at least one entry");
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    /// Wraps entries produced by arithmetic on already-validated operands.
    pub(crate) fn from_raw(entries: Vec<Complex64>) -> Self {
        debug_assert!(!entries.is_empty());
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.0.iter()
    }

    /// Entry moduli `|v_i|`.
    pub fn moduli(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm()).collect()
    }

    pub fn sub(&self, other: &CVector) -> Result<CVector> {
        if self.len() != other.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "sub",
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Hermitian inner product `⟨self, other⟩ = Σ conj(self_i)·other_i`.
    pub fn dot(&self, other: &CVector) -> Result<Complex64> {
        if self.len() != other.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "dot",
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum())
    }
}

impl Index<usize> for CVector {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

/// A dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                op: "CMatrix::new",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(index) = data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(LinalgError::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    /// Builds a matrix entry by entry from `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "CMatrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> CVector {
        CVector::from_raw((0..self.rows).map(|i| self.get(i, col)).collect())
    }

    /// Gathers the listed columns, in order, into a new `rows × indices.len()` matrix.
    pub fn select_columns(&self, indices: &[usize]) -> Result<CMatrix> {
        if indices.is_empty() {
            return Err(LinalgError::Empty);
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.cols) {
            return Err(LinalgError::InvalidArgument(format!(
                "column index {bad} out of range for {} columns",
                self.cols
            )));
        }
        let k = indices.len();
        let mut data = Vec::with_capacity(self.rows * k);
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(indices.iter().map(|&j| row[j]));
        }
        Ok(CMatrix {
            rows: self.rows,
            cols: k,
            data,
        })
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul",
                expected: self.cols,
                found: other.rows,
            });
        }
        let (m, n) = (self.rows, other.cols);
        let mut data = vec![Complex64::new(0.0, 0.0); m * n];
        for i in 0..m {
            let out = &mut data[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(CMatrix { rows: m, cols: n, data })
    }
}

/// Conjugate transpose `m*`.
pub fn conj_transpose(m: &CMatrix) -> CMatrix {
    let mut data = Vec::with_capacity(m.data.len());
    for j in 0..m.cols {
        for i in 0..m.rows {
            data.push(m.get(i, j).conj());
        }
    }
    CMatrix {
        rows: m.cols,
        cols: m.rows,
        data,
    }
}

pub fn matvec(m: &CMatrix, v: &CVector) -> Result<CVector> {
    if m.cols != v.len() {
        return Err(LinalgError::DimensionMismatch {
            op: "matvec",
            expected: m.cols,
            found: v.len(),
        });
    }
    Ok(CVector::from_raw(
        (0..m.rows)
            .map(|i| m.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect(),
    ))
}

/// Euclidean norm over complex moduli.
pub fn l2_norm(v: &CVector) -> f64 {
    // hypot-style accumulation is unnecessary at these magnitudes
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Indices of the `k` largest entries of `magnitudes`, ascending by index.
///
/// Ties resolve toward the lower index, so the selection is reproducible.
pub fn argmax_k(magnitudes: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(LinalgError::InvalidArgument(
            "argmax_k: k must be at least 1".into(),
        ));
    }
    if k > magnitudes.len() {
        return Err(LinalgError::InvalidArgument(format!(
            "argmax_k: k = {k} exceeds length {}",
            magnitudes.len()
        )));
    }
    if let Some(index) = magnitudes.iter().position(|m| !m.is_finite() || *m < 0.0) {
        return Err(LinalgError::NonFinite { index });
    }
    let mut order: Vec<usize> = (0..magnitudes.len()).collect();
    order.sort_by(|&a, &b| magnitudes[b].total_cmp(&magnitudes[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Solves `min_s ‖y − B s‖₂` for a tall or square `B` with full column rank.
///
/// Fails with [`LinalgError::RankDeficient`] when a diagonal entry of the
/// triangular factor drops below [`RANK_TOLERANCE`] times the largest one.
pub fn least_squares_solve(b: &CMatrix, y: &CVector) -> Result<CVector> {
    let (m, n) = (b.rows, b.cols);
    if y.len() != m {
        return Err(LinalgError::DimensionMismatch {
            op: "least_squares_solve",
            expected: m,
            found: y.len(),
        });
    }
    if n > m {
        return Err(LinalgError::InvalidArgument(format!(
            "least_squares_solve: {n} columns exceed {m} rows (underdetermined)"
        )));
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut w = b.data.clone();
    let mut z = y.as_slice().to_vec();
    let mut diag = vec![zero; n];
    let mut v = vec![zero; m];

    for k in 0..n {
        let norm = (k..m).map(|i| w[i * n + k].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let head = w[k * n + k];
        let phase = if head.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            head / head.norm()
        };
        // Reflect onto -phase·‖x‖·e₁ so the leading subtraction never cancels.
        let alpha = -phase * norm;
        let tail = &mut v[k..m];
        for (i, t) in tail.iter_mut().enumerate() {
            *t = w[(k + i) * n + k];
        }
        tail[0] -= alpha;
        let vnorm2: f64 = tail.iter().map(|t| t.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            diag[k] = alpha;
            continue;
        }
        let scale = 2.0 / vnorm2;

        for j in (k + 1)..n {
            let proj: Complex64 = tail
                .iter()
                .enumerate()
                .map(|(i, t)| t.conj() * w[(k + i) * n + j])
                .sum();
            let f = proj * scale;
            for (i, t) in tail.iter().enumerate() {
                w[(k + i) * n + j] -= f * t;
            }
        }
        let proj: Complex64 = tail
            .iter()
            .enumerate()
            .map(|(i, t)| t.conj() * z[k + i])
            .sum();
        let f = proj * scale;
        for (i, t) in tail.iter().enumerate() {
            z[k + i] -= f * t;
        }
        diag[k] = alpha;
    }

    let largest = diag.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let cutoff = RANK_TOLERANCE * largest;
    let rank = diag.iter().filter(|d| d.norm() > cutoff).count();
    if rank < n || largest == 0.0 {
        return Err(LinalgError::RankDeficient { rank, cols: n });
    }

    let mut s = vec![zero; n];
    for k in (0..n).rev() {
        let mut acc = z[k];
        for j in (k + 1)..n {
            acc -= w[k * n + j] * s[j];
        }
        s[k] = acc / diag[k];
    }
    Ok(CVector::from_raw(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> CVector {
        CVector::new(
            (0..len)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn conj_transpose_examples() {
        assert_eq!(conj_transpose(&CMatrix::identity(3)), CMatrix::identity(3));

        let m = CMatrix::new(1, 1, vec![c(0.0, 1.0)]).unwrap();
        assert_eq!(conj_transpose(&m).get(0, 0), c(0.0, -1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 2, 3);
        let t = conj_transpose(&m);
        assert_eq!((t.rows(), t.cols()), (3, 2));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(t.get(j, i), m.get(i, j).conj());
            }
        }
        assert_eq!(conj_transpose(&t), m);
    }

    #[test]
    fn matvec_examples() {
        let v = CVector::new(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0), c(4.0, -1.0)]).unwrap();
        assert_eq!(matvec(&CMatrix::identity(4), &v).unwrap(), v);

        let v3 = CVector::new(vec![c(1.0, 1.0), c(2.0, 0.0), c(3.0, -1.0)]).unwrap();
        let out = matvec(&CMatrix::zeros(3, 3), &v3).unwrap();
        assert!(out.iter().all(|z| *z == c(0.0, 0.0)));

        // column0 + 2·column1
        let m = CMatrix::new(
            3,
            2,
            vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0), c(3.0, 0.0), c(-1.0, 0.0), c(0.5, 0.5)],
        )
        .unwrap();
        let out = matvec(&m, &CVector::from_real(&[1.0, 2.0]).unwrap()).unwrap();
        let expected = [c(1.0, 2.0), c(8.0, -1.0), c(0.0, 1.0)];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).norm() < 1e-15);
        }

        let err = matvec(&m, &CVector::zeros(3)).unwrap_err();
        assert!(matches!(err, LinalgError::DimensionMismatch { .. }));
    }

    #[test]
    fn least_squares_identity_and_mean() {
        let y = CVector::new(vec![c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0)]).unwrap();
        let s = least_squares_solve(&CMatrix::identity(3), &y).unwrap();
        for (a, b) in s.iter().zip(y.iter()) {
            assert!((a - b).norm() < 1e-15);
        }

        // 2s = 4 from the normal equation
        let b = CMatrix::from_real(2, 1, &[1.0, 1.0]).unwrap();
        let s = least_squares_solve(&b, &CVector::from_real(&[1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0] - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn least_squares_recovers_consistent_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_matrix(&mut rng, 6, 3);
        let s0 = random_vector(&mut rng, 3);
        let y = matvec(&b, &s0).unwrap();
        let s = least_squares_solve(&b, &y).unwrap();
        let err = l2_norm(&s.sub(&s0).unwrap()) / l2_norm(&s0);
        assert!(err < 1e-10, "relative error {err}");
    }

    #[test]
    fn least_squares_detects_rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_matrix(&mut rng, 5, 2);
        // third column duplicates the first
        let b = base.select_columns(&[0, 1, 0]).unwrap();
        let y = random_vector(&mut rng, 5);
        match least_squares_solve(&b, &y) {
            Err(LinalgError::RankDeficient { rank, cols }) => {
                assert_eq!(cols, 3);
                assert_eq!(rank, 2);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }

        let zero = CMatrix::zeros(4, 2);
        assert!(matches!(
            least_squares_solve(&zero, &random_vector(&mut rng, 4)),
            Err(LinalgError::RankDeficient { rank: 0, cols: 2 })
        ));
    }

    #[test]
    fn least_squares_rejects_wide_systems() {
        let b = CMatrix::zeros(2, 3);
        assert!(matches!(
            least_squares_solve(&b, &CVector::zeros(2)),
            Err(LinalgError::InvalidArgument(_))
        ));
        assert!(matches!(
            least_squares_solve(&CMatrix::identity(2), &CVector::zeros(3)),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn least_squares_residual_orthogonality_500_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..500 {
            let rows = rng.random_range(1..=64);
            let cols = rng.random_range(1..=rows);
            let b = random_matrix(&mut rng, rows, cols);
            let y = random_vector(&mut rng, rows);
            let s = least_squares_solve(&b, &y).unwrap();
            let r = y.sub(&matvec(&b, &s).unwrap()).unwrap();
            let ynorm = l2_norm(&y);
            for j in 0..cols {
                let col = b.column(j);
                let ip = col.dot(&r).unwrap().norm();
                assert!(
                    ip < 1e-8 * ynorm * l2_norm(&col),
                    "column {j} of {rows}x{cols}: |<b_j, r>| = {ip}"
                );
            }
        }
    }

    #[test]
    fn least_squares_consistent_systems_have_tiny_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let rows = rng.random_range(2..=64);
            let cols = rng.random_range(1..=rows);
            let b = random_matrix(&mut rng, rows, cols);
            let y = matvec(&b, &random_vector(&mut rng, cols)).unwrap();
            let s = least_squares_solve(&b, &y).unwrap();
            let r = y.sub(&matvec(&b, &s).unwrap()).unwrap();
            assert!(l2_norm(&r) < 1e-10 * l2_norm(&y));
        }
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_k(&[0.1, 5.0, 2.0], 2).unwrap(), vec![1, 2]);
        assert_eq!(argmax_k(&[2.0, 2.0, 1.0], 1).unwrap(), vec![0]);
        assert_eq!(argmax_k(&[3.0, 1.0, 4.0, 1.0], 4).unwrap(), vec![0, 1, 2, 3]);
        assert!(argmax_k(&[1.0, 2.0], 3).is_err());
        assert!(argmax_k(&[1.0, 2.0], 0).is_err());
        assert!(argmax_k(&[1.0, f64::NAN], 1).is_err());
    }

    #[test]
    fn argmax_matches_pair_enumeration() {
        // brute force over all pairs: maximal sum, lexicographically smallest on ties
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let len = rng.random_range(2..9);
            let mags: Vec<f64> = (0..len).map(|_| rng.random_range(0..4) as f64).collect();
            let mut best: Option<(f64, (usize, usize))> = None;
            for i in 0..len {
                for j in (i + 1)..len {
                    let sum = mags[i] + mags[j];
                    let better = match best {
                        None => true,
                        Some((b, pair)) => sum > b || (sum == b && (i, j) < pair),
                    };
                    if better {
                        best = Some((sum, (i, j)));
                    }
                }
            }
            let (_, (i, j)) = best.unwrap();
            assert_eq!(argmax_k(&mags, 2).unwrap(), vec![i, j], "{mags:?}");
        }
    }

    #[test]
    fn l2_norm_examples() {
        let v = CVector::new(vec![c(3.0, 0.0), c(0.0, 4.0)]).unwrap();
        assert_eq!(l2_norm(&v), 5.0);
        assert_eq!(l2_norm(&CVector::zeros(5)), 0.0);
        assert_eq!(l2_norm(&CVector::from_real(&[1.0]).unwrap()), 1.0);
    }

    #[test]
    fn vector_construction_rejects_bad_input() {
        assert_eq!(CVector::new(vec![]), Err(LinalgError::Empty));
        assert_eq!(
            CVector::new(vec![c(1.0, 0.0), c(f64::INFINITY, 0.0)]),
            Err(LinalgError::NonFinite { index: 1 })
        );
        assert!(CMatrix::new(2, 2, vec![c(0.0, 0.0); 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn complex() -> impl Strategy<Value = Complex64> {
            (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(re, im)| Complex64::new(re, im))
        }

        fn cvec(len: usize) -> impl Strategy<Value = CVector> {
            proptest::collection::vec(complex(), len).prop_map(|v| CVector::new(v).unwrap())
        }

        proptest! {
            #[test]
            fn conj_transpose_is_involution(
                (rows, cols, data) in (1usize..6, 1usize..6)
                    .prop_flat_map(|(r, c)| (Just(r), Just(c), proptest::collection::vec(complex(), r * c)))
            ) {
                let m = CMatrix::new(rows, cols, data).unwrap();
                prop_assert_eq!(conj_transpose(&conj_transpose(&m)), m);
            }

            #[test]
            fn argmax_selection_dominates(
                mags in proptest::collection::vec(0.0f64..10.0, 1..40),
                frac in 0.0f64..1.0,
            ) {
                let k = 1 + ((mags.len() - 1) as f64 * frac) as usize;
                let picked = argmax_k(&mags, k).unwrap();
                prop_assert_eq!(picked.len(), k);
                prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(picked.iter().all(|&i| i < mags.len()));
                let min_in = picked.iter().map(|&i| mags[i]).fold(f64::INFINITY, f64::min);
                let max_out = (0..mags.len())
                    .filter(|i| !picked.contains(i))
                    .map(|i| mags[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(min_in >= max_out);
            }

            #[test]
            fn l2_norm_triangle_inequality((a, b) in (1usize..16).prop_flat_map(|n| (cvec(n), cvec(n)))) {
                let sum = CVector::new(a.iter().zip(b.iter()).map(|(x, y)| x + y).collect()).unwrap();
                prop_assert!(l2_norm(&sum) <= l2_norm(&a) + l2_norm(&b) + 1e-12 * (1.0 + l2_norm(&a) + l2_norm(&b)));
            }
        }
    }
}
