//! Symmetric eigendecomposition (cyclic Jacobi) and the pseudoinverse built on it.

use super::matrix::Matrix;
use super::NumericsError;

/// Eigenvalues (ascending) and column eigenvectors of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn new(m: &Matrix) -> Result<Self, NumericsError> {
        let n = m.rows();
        if m.cols() != n {
            return Err(NumericsError::NotSquare(m.shape()));
        }
        if !m.is_symmetric(1e-9) {
            return Err(NumericsError::NotSymmetric);
        }
        let mut a = m.clone();
        let mut v = Matrix::identity(n);
        let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum::<f64>()
                .sqrt();
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok(Self { values, vectors })
    }
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix; eigenvalues below
/// `rtol·λ_max` are treated as zero.
pub fn psd_pinv(m: &Matrix, rtol: f64) -> Result<Matrix, NumericsError> {
    let eig = SymmetricEigen::new(m)?;
    let n = m.rows();
    let lmax = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cutoff = rtol * lmax;
    let inv: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l > cutoff && l > 0.0 { 1.0 / l } else { 0.0 })
        .collect();
    let vs = eig.vectors.scale_cols(&inv);
    let mut out = vs.matmul_t(&eig.vectors)?;
    // symmetrize roundoff
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}

/// Pseudoinverse of a wide or square matrix `B` via `Bᵀ(BBᵀ)⁺`.
pub fn pinv_wide(b: &Matrix) -> Result<Matrix, NumericsError> {
    let gram = b.matmul_t(b)?;
    let gp = psd_pinv(&gram, 1e-12 * gram.rows().max(1) as f64)?;
    b.t_matmul(&gp)
}
