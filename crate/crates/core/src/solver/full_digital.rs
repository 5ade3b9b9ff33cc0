//! Unconstrained (fully digital) WMMSE precoding per subcarrier.

use crate::error::Result;
use crate::linalg::{CMat, C64};
use crate::sylvester::{solve_hermitian_low_rank, ShiftedLowRank};

use super::updates::{surrogate_utility, wmmse_update};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullDigitalOptions {
    /// Fractional utility improvement below which iterations stop.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FullDigitalOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 500,
        }
    }
}

/// WMMSE on the full-power surrogate, started from maximum-ratio
/// transmission and scaled to `||P||_F^2 = P_t` on return.
pub fn wmmse_full_digital(
    h: &CMat,
    sigma2: f64,
    p_t: f64,
    opts: &FullDigitalOptions,
) -> Result<CMat> {
    let k_users = h.ncols();
    let mut p = h.clone();
    let mut util = surrogate_utility(h, &p, sigma2, p_t);
    for _ in 0..opts.max_iter {
        let (w, v) = wmmse_update(h, &p, sigma2, p_t);
        let mut factor = h.clone();
        let mut shift = 0.0;
        let mut upsilon = h.adjoint();
        for k in 0..k_users {
            let s = w[k] * v[k].norm_sqr();
            shift += s;
            factor.column_mut(k).scale_mut(s.sqrt());
            let coef = C64::from(w[k]) * v[k].conj();
            for z in upsilon.row_mut(k).iter_mut() {
                *z *= coef;
            }
        }
        if shift == 0.0 {
            break;
        }
        let phi = ShiftedLowRank {
            shift: shift * sigma2 / p_t,
            factor,
        };
        let zero = CMat::zeros(k_users, k_users);
        let next = solve_hermitian_low_rank(&zero, &phi, &upsilon)?.adjoint();
        let next_util = surrogate_utility(h, &next, sigma2, p_t);
        if next_util < util {
            break;
        }
        let gain = next_util - util;
        p = next;
        util = next_util;
        if gain <= opts.tol * util.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let norm = p.norm_squared();
    if norm > 0.0 {
        p *= C64::from((p_t / norm).sqrt());
    }
    Ok(p)
}
