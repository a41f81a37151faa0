//! Dense helpers for the small symmetric systems that appear at every grid
//! point.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition numbers above this mark a system as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Cholesky factor of a symmetric positive definite matrix after scaling it
/// to unit diagonal. Row-major storage.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: Vec<f64>,
    scale: Vec<f64>,
    d: usize,
    rcond: f64,
}

impl SpdFactor {
    /// Factors the row-major `d×d` matrix `a`. Returns `None` when the
    /// equilibrated matrix is not positive definite or its condition number,
    /// estimated from the squared ratio of Cholesky pivots, exceeds
    /// [`MAX_CONDITION`].
    pub fn new(a: &[f64], d: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), d * d);
        let mut scale = vec![0.0; d];
        for j in 0..d {
            let v = a[j * d + j];
            if !(v > 0.0) || !v.is_finite() {
                return None;
            }
            scale[j] = v.sqrt();
        }
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = a[i * d + j] / (scale[i] * scale[j]);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * d + i] = s.sqrt();
                } else {
                    l[i * d + j] = s / l[j * d + j];
                }
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..d {
            let v = l[i * d + i];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let rcond = (lo / hi).powi(2);
        if rcond * MAX_CONDITION < 1.0 {
            return None;
        }
        Some(Self { l, scale, d, rcond })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            b[i] /= self.scale[i];
        }
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * d + k] * b[k];
            }
            b[i] = s / self.l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = b[i];
            for k in i + 1..d {
                s -= self.l[k * d + i] * b[k];
            }
            b[i] = s / self.l[i * d + i];
        }
        for i in 0..d {
            b[i] /= self.scale[i];
        }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalue floor at `rel * λ_max`, applied to the symmetric part of `m`.
pub fn psd_project(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let floor = rel * top;
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

/// Ratio of extreme absolute eigenvalues of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m));
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let hi = abs.iter().copied().fold(0.0, f64::max);
    let lo = abs.iter().copied().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a symmetric positive definite matrix, refusing condition
/// numbers above [`MAX_CONDITION`].
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::numerical(format!(
            "matrix not positive definite or ill-conditioned (eigenvalues {lo:e}..{hi:e})"
        )));
    }
    let inv = eig.eigenvalues.map(|v| 1.0 / v);
    Ok(symmetrize(
        &(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()),
    ))
}

/// Symmetric square root of a positive definite matrix.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::numerical("weight matrix is not positive definite"));
    }
    let root = eig.eigenvalues.map(f64::sqrt);
    Ok(symmetrize(
        &(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()),
    ))
}

/// Numerical rank of a general matrix via singular values.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > top * 1e-10).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solves_spd_system() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let f = SpdFactor::new(&a, 3).unwrap();
        let mut b = [1.0, 2.0, 3.0];
        f.solve_in_place(&mut b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|k| a[i * 3 + k] * b[k]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_rejects_singular() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(SpdFactor::new(&a, 2).is_none());
        let a = [1.0, 0.0, 0.0, 0.0];
        assert!(SpdFactor::new(&a, 2).is_none());
    }

    #[test]
    fn sqrt_and_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r = spd_sqrt(&m).unwrap();
        assert!((&r * &r - &m).abs().max() < 1e-12);
        let inv = spd_inverse(&m).unwrap();
        assert!((&inv * &m - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn projection_floors_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = psd_project(&m, 1e-10);
        let eig = SymmetricEigen::new(p);
        assert!(eig.eigenvalues.iter().all(|&v| v > 0.0));
    }
}
