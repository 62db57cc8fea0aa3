//! Minimal dense matrix support for the Newton solver.
//!
//! The power-flow Jacobian is at most ~30x30 here, so a plain row-major
//! matrix and a partial-pivot LU are all that is needed. The factorization
//! reports its pivot extremes so the solver can turn an ill-conditioned
//! system into a `converged = false` result instead of a garbage update.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::default(); rows * cols] }
    }
}

impl<T> Mat<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Absolute pivot extremes of an LU factorization; `max/min` is the cheap
/// conditioning estimate used by the solver's divergence contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotReport<F> {
    pub min_abs: F,
    pub max_abs: F,
}

impl<F: Real> PivotReport<F> {
    /// Ratio of pivot extremes; `infinity` when the matrix is singular.
    pub fn condition_estimate(&self) -> F {
        if self.min_abs == F::zero() {
            F::infinity()
        } else {
            self.max_abs / self.min_abs
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("singular matrix: no usable pivot in column {column}")]
pub struct SingularMatrix {
    pub column: usize,
}

/// Solves `a x = b` in place by LU with partial pivoting.
///
/// On success `b` holds the solution and the pivot extremes are returned;
/// `a` is destroyed. A vanishing pivot column reports `SingularMatrix`.
pub fn lu_solve<F: Real>(a: &mut Mat<F>, b: &mut [F]) -> Result<PivotReport<F>, SingularMatrix> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "lu_solve needs a square matrix");
    assert_eq!(n, b.len(), "rhs length must match matrix size");

    let mut min_abs = F::infinity();
    let mut max_abs = F::zero();

    for k in 0..n {
        let mut piv = k;
        let mut piv_abs = a[(k, k)].abs();
        for i in k + 1..n {
            let cand = a[(i, k)].abs();
            if cand > piv_abs {
                piv = i;
                piv_abs = cand;
            }
        }
        if piv_abs == F::zero() || !piv_abs.is_finite() {
            return Err(SingularMatrix { column: k });
        }
        if piv != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            b.swap(k, piv);
        }
        min_abs = min_abs.min(piv_abs);
        max_abs = max_abs.max(piv_abs);

        let pivot = a[(k, k)];
        for i in k + 1..n {
            let l = a[(i, k)] / pivot;
            if l == F::zero() {
                continue;
            }
            a[(i, k)] = l;
            for j in k + 1..n {
                let akj = a[(k, j)];
                a[(i, j)] -= l * akj;
            }
            let bk = b[k];
            b[i] -= l * bk;
        }
    }

    // Back substitution on the upper triangle.
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a[(k, j)] * b[j];
        }
        b[k] = acc / a[(k, k)];
    }

    Ok(PivotReport { min_abs, max_abs })
}
