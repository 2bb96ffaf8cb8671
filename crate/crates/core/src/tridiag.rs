//! Tridiagonal systems with a factorisation reused across right-hand sides.

use crate::error::{Result, SwingError};

/// Thomas-algorithm factorisation of a tridiagonal matrix with
/// sub-diagonal `lower[i]` (row `i`, column `i-1`), diagonal `diag[i]` and
/// super-diagonal `upper[i]` (row `i`, column `i+1`).
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper_scaled: Vec<f64>,
}

impl Tridiagonal {
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        assert!(lower.len() == n && upper.len() == n);
        let mut inv_pivot = vec![0.0; n];
        let mut upper_scaled = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = diag[i] - if i > 0 { lower[i] * prev } else { 0.0 };
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(SwingError::SolverBreakdown(i));
            }
            inv_pivot[i] = 1.0 / pivot;
            prev = upper[i] * inv_pivot[i];
            upper_scaled[i] = prev;
        }
        Ok(Self {
            lower: lower.to_vec(),
            inv_pivot,
            upper_scaled,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_scaled[i] * rhs[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_dense_solve() {
        let lower = [0.0, -1.0, 0.3, -2.0, 0.5];
        let diag = [4.0, 5.0, 3.0, 6.0, 2.5];
        let upper = [1.0, 0.2, -1.0, 1.5, 0.0];
        let b = [1.0, -2.0, 0.5, 3.0, 4.0];
        let n = 5;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = diag[i];
            if i > 0 {
                a[(i, i - 1)] = lower[i];
            }
            if i + 1 < n {
                a[(i, i + 1)] = upper[i];
            }
        }
        let dense = a.lu().solve(&DVector::from_row_slice(&b)).unwrap();
        let t = Tridiagonal::factor(&lower, &diag, &upper).unwrap();
        let mut x = b;
        t.solve_in_place(&mut x);
        for i in 0..n {
            assert!((x[i] - dense[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let err = Tridiagonal::factor(&[0.0, 1.0], &[1.0, 1.0], &[1.0, 0.0]).unwrap_err();
        assert_eq!(err, SwingError::SolverBreakdown(1));
    }
}
