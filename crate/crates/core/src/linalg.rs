//! Complex matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative cutoff on Gram-matrix singular values when pseudo-inverting.
pub const GRAM_RCOND: f64 = 1e-10;

/// One draw of CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Matrix with i.i.d. CN(0, variance) entries.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    // column-major fill order keeps draws reproducible for a given shape
    for v in m.iter_mut() {
        *v = complex_gaussian(rng, variance);
    }
    m
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Real-valued trace of `m m^H`.
pub fn power(m: &CMatrix) -> f64 {
    frobenius_sq(m)
}

/// Moore-Penrose pseudo-inverse of `g^H` computed as `g (g^H g)^+`.
///
/// The Gram matrix is never formed: with `g = U S V^H` the product equals
/// `U S^-1 V^H` over the singular values kept by the cutoff. A singular value
/// `s` is kept iff `s^2 >= rcond * s_max^2`, i.e. the cutoff acts on the Gram
/// spectrum.
pub fn gram_pinv_right(g: &CMatrix, rcond: f64) -> CMatrix {
    let (rows, cols) = g.shape();
    if rows == 0 || cols == 0 {
        return CMatrix::zeros(rows, cols);
    }
    let svd = g.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = CMatrix::zeros(rows, cols);
    if s_max == 0.0 {
        return out;
    }
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s * s < rcond * s_max * s_max {
            continue;
        }
        let ui = u.column(i);
        let vi = v_t.row(i);
        out += (ui * vi) * C64::new(1.0 / s, 0.0);
    }
    out
}

/// Pseudo-inverse with an absolute-relative cutoff on singular values.
pub fn pinv(m: &CMatrix, rcond: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return CMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = CMatrix::zeros(cols, rows);
    if s_max == 0.0 {
        return out;
    }
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < rcond * s_max {
            continue;
        }
        out += (v_t.row(i).adjoint() * u.column(i).adjoint()) * C64::new(1.0 / s, 0.0);
    }
    out
}

/// Natural-log determinant of a Hermitian positive-definite matrix.
pub fn ln_det_hpd(m: &CMatrix) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    Some(chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum())
}
