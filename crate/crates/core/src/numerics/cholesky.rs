//! Cholesky factorization of symmetric positive-definite matrices.

use super::matrix::{axpy, dot, gemm_raw, Matrix};

// Block size for the gemm-backed factorization and solves.
const BLOCK: usize = 32;
use super::NumericsError;

/// Lower-triangular factor `L` with `L·Lᵀ = m`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(m: &Matrix) -> Result<Self, NumericsError> {
        let n = m.rows();
        if m.cols() != n {
            return Err(NumericsError::NotSquare(m.shape()));
        }
        if !m.is_symmetric(1e-10) {
            return Err(NumericsError::NotSymmetric);
        }
        // right-looking blocked factorization on a working copy
        let mut a = m.clone();
        for k0 in (0..n).step_by(BLOCK) {
            let k1 = (k0 + BLOCK).min(n);
            // diagonal block, unblocked
            for i in k0..k1 {
                for j in k0..=i {
                    let s = a[(i, j)] - dot(&a.row(i)[k0..j], &a.row(j)[k0..j]);
                    if i == j {
                        if !(s > 0.0) || !s.is_finite() {
                            return Err(NumericsError::NotPositiveDefinite { pivot: i, value: s });
                        }
                        a[(i, i)] = s.sqrt();
                    } else {
                        a[(i, j)] = s / a[(j, j)];
                    }
                }
            }
            // panel below: rows k1.., columns k0..k1, solve X·L_kkᵀ = A
            for i in k1..n {
                for j in k0..k1 {
                    let s = a[(i, j)] - dot(&a.row(i)[k0..j], &a.row(j)[k0..j]);
                    a[(i, j)] = s / a[(j, j)];
                }
            }
            // trailing update A22 -= L21·L21ᵀ (lower part is all that is read)
            if k1 < n {
                let r = n - k1;
                let w = k1 - k0;
                let base = a.as_mut_slice().as_mut_ptr();
                // SAFETY: L21 occupies columns k0..k1 and A22 columns k1..n of
                // rows k1..n, so the written region is disjoint from the inputs.
                unsafe {
                    let l21 = base.add(k1 * n + k0) as *const f64;
                    gemm_raw(
                        r,
                        w,
                        r,
                        -1.0,
                        l21,
                        n as isize,
                        1,
                        l21,
                        1,
                        n as isize,
                        1.0,
                        base.add(k1 * n + k1),
                        n as isize,
                        1,
                    );
                }
            }
        }
        let mut l = a;
        for i in 0..n {
            for v in &mut l.row_mut(i)[i + 1..] {
                *v = 0.0;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.l.matmul_t(&self.l).expect("square factor")
    }

    /// Solves `L·X = B` in place; `B` is n×k.
    pub fn forward_solve_in_place(&self, b: &mut Matrix) -> Result<(), NumericsError> {
        let n = self.dim();
        if b.rows() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: (n, b.cols()),
                found: b.shape(),
            });
        }
        let k = b.cols();
        let mut acc = vec![0.0; k];
        for r0 in (0..n).step_by(BLOCK) {
            let r1 = (r0 + BLOCK).min(n);
            if r0 > 0 && k > 0 {
                let (head, tail) = b.as_mut_slice().split_at_mut(r0 * k);
                // SAFETY: `head` holds solved rows 0..r0, `tail` starts at row
                // r0; L is a separate allocation.
                unsafe {
                    gemm_raw(
                        r1 - r0,
                        r0,
                        k,
                        -1.0,
                        self.l.as_slice().as_ptr().add(r0 * n),
                        n as isize,
                        1,
                        head.as_ptr(),
                        k as isize,
                        1,
                        1.0,
                        tail.as_mut_ptr(),
                        k as isize,
                        1,
                    );
                }
            }
            for i in r0..r1 {
                acc.copy_from_slice(b.row(i));
                let li = self.l.row(i);
                for (p, &lip) in li[r0..i].iter().enumerate() {
                    if lip != 0.0 {
                        axpy(-lip, b.row(r0 + p), &mut acc);
                    }
                }
                let inv = 1.0 / li[i];
                for (dst, &v) in b.row_mut(i).iter_mut().zip(&acc) {
                    *dst = v * inv;
                }
            }
        }
        Ok(())
    }

    /// Solves `Lᵀ·X = B` in place; `B` is n×k.
    pub fn backward_solve_in_place(&self, b: &mut Matrix) -> Result<(), NumericsError> {
        let n = self.dim();
        if b.rows() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: (n, b.cols()),
                found: b.shape(),
            });
        }
        let k = b.cols();
        let mut acc = vec![0.0; k];
        for i in (0..n).rev() {
            let inv = 1.0 / self.l[(i, i)];
            for (a, &v) in acc.iter_mut().zip(b.row(i)) {
                *a = v * inv;
            }
            b.row_mut(i).copy_from_slice(&acc);
            // eliminate x_i from the remaining rows above
            for p in 0..i {
                let lip = self.l[(i, p)];
                if lip != 0.0 {
                    let (head, tail) = b.as_mut_slice().split_at_mut(i * k);
                    let xi = &tail[..k];
                    axpy(-lip, xi, &mut head[p * k..(p + 1) * k]);
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix, NumericsError> {
        let mut x = b.clone();
        self.forward_solve_in_place(&mut x)?;
        self.backward_solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let n = self.dim();
        if b.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: (n, 1),
                found: (b.len(), 1),
            });
        }
        let mut x = b.to_vec();
        self.forward_vec_in_place(&mut x);
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in i + 1..n {
                s -= self.l[(p, i)] * x[p];
            }
            x[i] = s / self.l[(i, i)];
        }
        Ok(x)
    }

    /// `L⁻¹·b` for a single vector.
    pub fn forward_vec_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        for i in 0..n {
            let li = self.l.row(i);
            let s = x[i] - dot(&li[..i], &x[..i]);
            x[i] = s / li[i];
        }
    }

    pub fn inverse(&self) -> Matrix {
        self.solve(&Matrix::identity(self.dim()))
            .expect("identity has matching dimension")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let c = Cholesky::new(&Matrix::identity(3)).unwrap();
        assert_eq!(c.factor(), &Matrix::identity(3));
        assert_eq!(c.logdet(), 0.0);
    }

    #[test]
    fn two_by_two_example() {
        let m = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        let c = Cholesky::new(&m).unwrap();
        let l = c.factor();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        // L·Lᵀ by direct multiplication
        let rebuilt = Matrix::from_fn(2, 2, |i, j| (0..2).map(|k| l[(i, k)] * l[(j, k)]).sum());
        assert!(rebuilt.max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn indefinite_rejected() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(
            Cholesky::new(&m),
            Err(NumericsError::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn asymmetric_rejected() {
        let m = Matrix::from_rows(&[[2.0, 1.0], [0.0, 2.0]]);
        assert!(matches!(Cholesky::new(&m), Err(NumericsError::NotSymmetric)));
    }

    #[test]
    fn solves_scaled_identity() {
        let c = Cholesky::new(&Matrix::identity(3).scale(2.0)).unwrap();
        let b = Matrix::from_rows(&[[2.0, 4.0], [6.0, 8.0], [-2.0, 0.0]]);
        let x = c.solve(&b).unwrap();
        assert!(x.max_abs_diff(&b.scale(0.5)) < 1e-15);
        assert!((c.logdet() - 3.0 * 2f64.ln()).abs() < 1e-14);
        assert!(c.solve(&Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn vector_and_matrix_solves_agree() {
        let a = Matrix::from_fn(4, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let mut m = a.matmul_t(&a).unwrap();
        m.add_diag(0.5);
        let c = Cholesky::new(&m).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0];
        let xv = c.solve_vec(&b).unwrap();
        let xm = c.solve(&Matrix::column(&b)).unwrap();
        for i in 0..4 {
            assert!((xv[i] - xm[(i, 0)]).abs() < 1e-12);
        }
        let r = m.matvec(&xv).unwrap();
        for i in 0..4 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }
}
