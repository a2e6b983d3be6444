//! Dense complex matrix aliases and small helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `a^H b` for two complex column slices of equal length.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

/// Row `k` of `m` as an owned vector.
pub fn row(m: &CMatrix, k: usize) -> Vec<Complex64> {
    m.row(k).iter().copied().collect()
}

/// Column `k` of `m` as an owned vector.
pub fn col(m: &CMatrix, k: usize) -> Vec<Complex64> {
    m.column(k).iter().copied().collect()
}

/// `|h^H w|^2` where `h` is row `k` of `h_mat` and `w` is column `j` of `w_mat`.
///
/// Rows of the channel matrix hold `h^H` already (the received signal is
/// `H x`), so no conjugation is applied to the row.
pub fn row_col_power(h_mat: &CMatrix, k: usize, w_mat: &CMatrix, j: usize) -> f64 {
    let mut acc = ZERO;
    for n in 0..h_mat.ncols() {
        acc += h_mat[(k, n)] * w_mat[(n, j)];
    }
    acc.norm_sqr()
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest absolute entry difference between two matrices of equal shape.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
