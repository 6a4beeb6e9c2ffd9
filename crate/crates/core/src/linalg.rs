//! Small dense linear-algebra helpers shared by the knockoff constructions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalue floor used when inverting nearly singular symmetric blocks.
pub const EIG_FLOOR: f64 = 1e-12;

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(a);
    let eig = sym.symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// (A + Aᵀ)/2, guarding eigen routines against roundoff asymmetry.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    out
}

/// Symmetric inverse square root via eigen-decomposition, flooring
/// eigenvalues at [`EIG_FLOOR`].
pub fn inv_sqrt_sym(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = symmetrize(a);
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam <= 0.0 && lam < -1e-8 {
            return Err(Error::Conditioning(format!(
                "{context}: eigenvalue {lam:.3e} is negative"
            )));
        }
        let lam = lam.max(EIG_FLOOR);
        let f = lam.sqrt().recip();
        for i in 0..n {
            scaled[(i, k)] *= f;
        }
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// A matrix square root C with CᵀC = A, for symmetric positive semidefinite A.
///
/// Tries Cholesky first; if A sits on the PSD boundary, falls back to the
/// eigen square root with negative eigenvalues in [-1e-10, 0) floored to zero.
pub fn psd_sqrt(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = symmetrize(a);
    if let Some(chol) = sym.clone().cholesky() {
        // Cholesky gives A = LLᵀ; C = Lᵀ satisfies CᵀC = A.
        return Ok(chol.l().transpose());
    }
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let mut scaled = eig.eigenvectors.transpose();
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam < -1e-10 {
            return Err(Error::Conditioning(format!(
                "{context}: matrix is indefinite (eigenvalue {lam:.3e})"
            )));
        }
        let f = lam.max(0.0).sqrt();
        for j in 0..n {
            scaled[(k, j)] *= f;
        }
    }
    // C = Λ^{1/2} Qᵀ so that CᵀC = Q Λ Qᵀ.
    Ok(scaled)
}

/// Solve A X = B for symmetric positive-definite A.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let chol = symmetrize(a)
        .cholesky()
        .ok_or_else(|| Error::Conditioning(format!("{context}: Cholesky failed")))?;
    Ok(chol.solve(b))
}

/// Thin Q factor (orthonormal columns spanning the column space).
pub fn thin_q(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Project the columns of `m` off the column space spanned by `basis_q`
/// (which must have orthonormal columns).
pub fn project_off(m: &DMatrix<f64>, basis_q: &DMatrix<f64>) -> DMatrix<f64> {
    m - basis_q * (basis_q.transpose() * m)
}

/// Center each column of a matrix in place.
pub fn center_columns(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
}

/// Max absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Euclidean norm of a column.
pub fn col_norm(m: &DMatrix<f64>, j: usize) -> f64 {
    m.column(j).norm()
}

/// Pull a symmetric sub-block indexed by `idx` out of `a`.
pub fn sub_block(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let k = idx.len();
    let mut out = DMatrix::zeros(k, k);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            out[(r, c)] = a[(i, j)];
        }
    }
    out
}

/// Dot product of matrix column j with a vector.
pub fn col_dot(m: &DMatrix<f64>, j: usize, v: &DVector<f64>) -> f64 {
    m.column(j).dot(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inv_sqrt_recovers_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = inv_sqrt_sym(&a, "test").unwrap();
        let prod = &s * &a * &s;
        assert_abs_diff_eq!(prod[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prod[(1, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prod[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_sqrt_boundary_case() {
        // rank-1 PSD matrix: Cholesky fails, eigen fallback must work
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = psd_sqrt(&a, "test").unwrap();
        let back = c.transpose() * &c;
        assert_abs_diff_eq!(back[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(back[(0, 1)], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(psd_sqrt(&a, "test").is_err());
    }

    #[test]
    fn projection_is_orthogonal() {
        let mut rng_state = 42u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(20, 3, |_, _| next());
        let b = DMatrix::from_fn(20, 4, |_, _| next());
        let q = thin_q(&a);
        let p = project_off(&b, &q);
        let cross = a.transpose() * p;
        assert!(max_abs(&cross) < 1e-12);
    }
}
