//! Dense linear algebra, RNG, optimizer and autodiff primitives.

mod adam;
pub mod autodiff;
mod cholesky;
mod eigen;
mod matrix;
mod rng;

pub use adam::Adam;
pub use autodiff::{Tape, Var};
pub use cholesky::Cholesky;
pub use eigen::{pinv_wide, psd_pinv, SymmetricEigen};
pub use matrix::{axpy, dot, norm_sq, Matrix};
pub use rng::{SeededRng, RNG_ALGORITHM};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix is not square: {0:?}")]
    NotSquare((usize, usize)),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("empty input")]
    EmptyInput,
    #[error("backward pass needs a 1x1 output, got {0:?}")]
    NoScalarOutput((usize, usize)),
}

/// `ln Σ exp(xᵢ)` without overflow.
pub fn logsumexp(xs: &[f64]) -> Result<f64, NumericsError> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    if m == f64::NEG_INFINITY {
        return Ok(m);
    }
    Ok(m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logsumexp_basics() {
        assert!(logsumexp(&[]).is_err());
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((logsumexp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]).unwrap(), f64::NEG_INFINITY);
    }

    fn det_cofactor(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        (0..n)
            .map(|c| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &v)| v).collect())
                    .collect();
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][c] * det_cofactor(&minor)
            })
            .sum()
    }

    fn spd(n: usize, entries: &[f64], ridge: f64) -> Matrix {
        let a = Matrix::from_fn(n, n, |i, j| entries[i * n + j]);
        let mut m = a.matmul_t(&a).unwrap();
        m.add_diag(ridge);
        m
    }

    proptest! {
        #[test]
        fn cholesky_solve_and_logdet(
            n in 1usize..6,
            entries in prop::collection::vec(-2.0f64..2.0, 36),
            rhs in prop::collection::vec(-5.0f64..5.0, 6),
            ridge in 0.05f64..2.0,
        ) {
            let m = spd(n, &entries, ridge);
            let c = Cholesky::new(&m).unwrap();
            let x = c.solve_vec(&rhs[..n]).unwrap();
            let r = m.matvec(&x).unwrap();
            let res: f64 = r.iter().zip(&rhs[..n]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res < 1e-8 * (1.0 + norm_sq(&rhs[..n]).sqrt()));
            let rows: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
            let det = det_cofactor(&rows);
            prop_assert!((c.logdet() - det.ln()).abs() < 1e-9 * (1.0 + det.ln().abs()));
            prop_assert!(c.reconstruct().max_abs_diff(&m) < 1e-10 * (1.0 + m.frobenius_norm()));
        }

        #[test]
        fn logsumexp_shift_invariant(xs in prop::collection::vec(-50.0f64..50.0, 1..10), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let a = logsumexp(&xs).unwrap() + c;
            let b = logsumexp(&shifted).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            prop_assert!(b >= shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}
