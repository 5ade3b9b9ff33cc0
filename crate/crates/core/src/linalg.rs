//! Dense complex helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative cutoff for singular values in pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-12;

#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

pub fn fro_norm_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Entrywise max-abs norm.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Outcome of a thresholded pseudo-inverse.
#[derive(Debug, Clone)]
pub struct Pinv {
    pub matrix: CMat,
    /// Number of singular values kept.
    pub rank: usize,
    /// True when at least one singular value fell below the cutoff.
    pub rank_deficient: bool,
}

/// Moore-Penrose pseudo-inverse; singular values below
/// `PINV_RTOL * sigma_max` are treated as zero.
pub fn pinv(m: &CMat) -> Result<Pinv> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Pinv {
            matrix: CMat::zeros(cols, rows),
            rank: 0,
            rank_deficient: false,
        });
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 500)
        .ok_or_else(|| {
            Error::Numerical(format!("SVD failed to converge on a {rows}x{cols} matrix"))
        })?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_RTOL * s_max;
    let mut out = CMat::zeros(cols, rows);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let inv = 1.0 / s;
            // out += v_i * inv * u_i^H
            for c in 0..rows {
                let uc = u[(c, i)].conj() * inv;
                for r in 0..cols {
                    out[(r, c)] += v_t[(i, r)].conj() * uc;
                }
            }
        }
    }
    let full = rows.min(cols);
    Ok(Pinv {
        matrix: out,
        rank,
        rank_deficient: rank < full,
    })
}

/// Solve the Hermitian positive definite system `m x = b` by Cholesky.
pub fn solve_hpd(m: &CMat, b: &CMat) -> Result<CMat> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}
