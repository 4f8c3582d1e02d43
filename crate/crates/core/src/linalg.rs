//! Small dense linear-algebra and normal-distribution helpers.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative tolerance for positive semidefiniteness, scaled by `|trace|`.
pub const PSD_REL_TOL: f64 = 1e-8;

/// Outcome of an eigenvalue-based PSD check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub min_eigenvalue: f64,
    pub tolerance: f64,
}

impl PsdCheck {
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -self.tolerance
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn psd_check(m: &DMatrix<f64>) -> PsdCheck {
    let tolerance = PSD_REL_TOL * m.trace().abs();
    if m.nrows() == 0 {
        return PsdCheck {
            min_eigenvalue: 0.0,
            tolerance,
        };
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let min_eigenvalue = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    PsdCheck {
        min_eigenvalue,
        tolerance,
    }
}

/// Lower-triangular `L` with `L Lᵀ = m` for a PSD matrix.
///
/// Eigenvalues inside the PSD tolerance band are clipped to zero first, then a
/// Cholesky sweep that tolerates zero pivots produces the factor. Returns the
/// failed check when `m` is indefinite beyond tolerance.
pub fn psd_lower_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>, PsdCheck> {
    let n = m.nrows();
    let check = psd_check(m);
    if !check.is_psd() {
        return Err(check);
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let a = q * DMatrix::from_diagonal(&clipped) * q.transpose();

    let pivot_floor = 1e-14 * a.diagonal().iter().copied().fold(0.0, f64::max);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= pivot_floor {
            // Column is (numerically) in the null space.
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reproduces_gram_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 3.0, 0.1, 0.4, 0.1, 1.0]);
        let l = psd_lower_factor(&m).unwrap();
        assert!((&l * l.transpose() - &m).abs().max() < 1e-12);
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn factor_handles_rank_deficient_input() {
        let v = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m = &v * v.transpose();
        let l = psd_lower_factor(&m).unwrap();
        assert!((&l * l.transpose() - &m).abs().max() < 1e-10);
        assert_eq!(
            psd_lower_factor(&DMatrix::zeros(2, 2)).unwrap(),
            DMatrix::zeros(2, 2)
        );
    }

    #[test]
    fn factor_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = psd_lower_factor(&m).unwrap_err();
        assert!((err.min_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_known_values() {
        assert!((normal_quantile(0.95) - 1.6448536269514722).abs() < 1e-14);
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-14);
        assert!((normal_quantile(1e-10) + 6.361340902404056).abs() < 1e-12);
    }

    #[test]
    fn cdf_inverts_quantile() {
        for &p in &[1e-8, 0.01, 0.2, 0.5, 0.77, 0.99, 1.0 - 1e-7] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-13 * p.max(1e-3) * 1e3);
        }
    }
}
