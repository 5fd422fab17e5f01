//! Dense symmetric linear algebra for small systems.
//!
//! The markets handled here have at most a few dozen players, so a plain
//! row-major matrix with an unpivoted Cholesky factorization is all we need.

use thiserror::Error;

use crate::scalar::Real;

/// Default pivot tolerance for the symmetric factorization.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not symmetric: |m[{i}][{j}] - m[{j}][{i}]| = {delta} exceeds tolerance")]
    NonSymmetric { i: usize, j: usize, delta: f64 },
    #[error("factorization failed: pivot {pivot} at index {index} not above tolerance")]
    SingularMatrix { index: usize, pivot: f64 },
    #[error("dimension mismatch: matrix is {n}x{n}, vector has length {len}")]
    DimensionMismatch { n: usize, len: usize },
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from nested rows; rows must all have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "ragged rows");
        Self::from_fn(n, |i, j| rows[i][j])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest absolute asymmetry |m_ij - m_ji|.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    fn require_symmetric(&self, tol: T) -> Result<(), LinalgError> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > tol {
                    return Err(LinalgError::NonSymmetric {
                        i,
                        j,
                        delta: d.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(())
    }

    /// Unpivoted Cholesky factor L with A = L L^T. Fails on any pivot <= tol.
    pub fn cholesky(&self, tol: T) -> Result<SquareMatrix<T>, LinalgError> {
        let n = self.n;
        let mut l = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if d <= tol {
                return Err(LinalgError::SingularMatrix {
                    index: j,
                    pivot: d.to_f64().unwrap_or(f64::NAN),
                });
            }
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        Ok(l)
    }

    /// True iff the matrix is symmetric (within `tol`) with all Cholesky
    /// pivots above `tol`.
    pub fn is_positive_definite(&self, tol: T) -> Result<bool, LinalgError> {
        self.require_symmetric(tol)?;
        Ok(self.cholesky(tol).is_ok())
    }

    /// Solve A x = rhs for symmetric positive definite A.
    pub fn solve_spd(&self, rhs: &[T]) -> Result<Vec<T>, LinalgError> {
        if rhs.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                n: self.n,
                len: rhs.len(),
            });
        }
        let l = self.cholesky(T::of(PIVOT_TOL))?;
        Ok(l.solve_cholesky(rhs))
    }

    /// Forward/backward substitution given `self` is the Cholesky factor L.
    fn solve_cholesky(&self, rhs: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s = s - self[(i, k)] * y[k];
            }
            y[i] = s / self[(i, i)];
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self[(k, i)] * x[k];
            }
            x[i] = s / self[(i, i)];
        }
        x
    }

    /// Inverse of a symmetric positive definite matrix, column by column.
    pub fn inverse_spd(&self) -> Result<SquareMatrix<T>, LinalgError> {
        let n = self.n;
        let l = self.cholesky(T::of(PIVOT_TOL))?;
        let mut inv = SquareMatrix::zeros(n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = l.solve_cholesky(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
            e[j] = T::zero();
        }
        Ok(inv)
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut s = T::zero();
                for j in 0..self.n {
                    s = s + self[(i, j)] * v[j];
                }
                s
            })
            .collect()
    }

    pub fn min_entry(&self) -> T {
        self.data.iter().cloned().fold(T::infinity(), T::min)
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Roots of a 2x2 matrix's characteristic polynomial, returned as
/// (re, im) pairs.
pub fn eigenvalues_2x2<T: Real>(m: &SquareMatrix<T>) -> [(T, T); 2] {
    assert_eq!(m.n(), 2);
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr - T::of(4.0) * det;
    if disc >= T::zero() {
        let s = disc.sqrt();
        [
            ((tr + s) * T::half(), T::zero()),
            ((tr - s) * T::half(), T::zero()),
        ]
    } else {
        let s = (-disc).sqrt() * T::half();
        let re = tr * T::half();
        [(re, s), (re, -s)]
    }
}

/// Spectral radius of a 2x2 matrix.
pub fn spectral_radius_2x2<T: Real>(m: &SquareMatrix<T>) -> T {
    let [l1, l2] = eigenvalues_2x2(m);
    let m1 = l1.0.hypot(l1.1);
    let m2 = l2.0.hypot(l2.1);
    m1.max(m2)
}
