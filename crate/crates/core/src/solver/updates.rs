//! Block updates of the penalty method, each acting on one subcarrier or on
//! the analog variables shared by all subcarriers.

use std::f64::consts::PI;

use crate::error::Result;
use crate::linalg::{cis, pinv, CMat, C64};
use crate::sylvester::{
    relative_residual, solve_hermitian_low_rank, solve_hessenberg_schur, ShiftedLowRank,
};
use crate::topology::{ChainRule, TtdTopology};

/// Per-user SINR on one subcarrier for precoder `p` (`N x K`) and channel
/// `h` (`N x K`) with noise power `noise`.
pub fn sinr(h: &CMat, p: &CMat, noise: f64) -> Vec<f64> {
    let g = h.adjoint() * p;
    (0..h.ncols())
        .map(|k| {
            let total: f64 = g.row(k).iter().map(|z| z.norm_sqr()).sum();
            let signal = g[(k, k)].norm_sqr();
            let denom = total - signal + noise;
            if signal == 0.0 {
                0.0
            } else {
                signal / denom
            }
        })
        .collect()
}

/// Achievable rates `log2(1 + SINR)` with the given noise power.
pub fn rates(h: &CMat, p: &CMat, sigma2: f64) -> Vec<f64> {
    sinr(h, p, sigma2)
        .into_iter()
        .map(|s| (1.0 + s).log2())
        .collect()
}

/// Full-power rates: noise scaled by `||P||_F^2 / P_t`, so the value is
/// invariant to the scale of `P` and equals [`rates`] when `||P||^2 = P_t`.
pub fn surrogate_rates(h: &CMat, p: &CMat, sigma2: f64, p_t: f64) -> Vec<f64> {
    let noise = sigma2 / p_t * p.norm_squared();
    if noise == 0.0 {
        return vec![0.0; h.ncols()];
    }
    rates(h, p, noise)
}

/// Sum of `ln(1 + SINR~)` over users, the WMMSE-compatible utility.
pub fn surrogate_utility(h: &CMat, p: &CMat, sigma2: f64, p_t: f64) -> f64 {
    surrogate_rates(h, p, sigma2, p_t)
        .iter()
        .map(|r| r * std::f64::consts::LN_2)
        .sum()
}

/// MSE weights `w_k = 2^{R~_k}` and receive scalars
/// `v_k = h_k^H p_k / (sum_i |h_k^H p_i|^2 + sigma^2 ||P||^2 / P_t)`.
pub fn wmmse_update(h: &CMat, p: &CMat, sigma2: f64, p_t: f64) -> (Vec<f64>, Vec<C64>) {
    let k_users = h.ncols();
    let noise = sigma2 / p_t * p.norm_squared();
    if noise == 0.0 {
        return (vec![1.0; k_users], vec![C64::new(0.0, 0.0); k_users]);
    }
    let g = h.adjoint() * p;
    let mut w = Vec::with_capacity(k_users);
    let mut v = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let total: f64 = g.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise;
        let vk = g[(k, k)] / total;
        // 1 / MSE = 1 + SINR
        let mse = 1.0 - g[(k, k)].norm_sqr() / total;
        w.push(1.0 / mse.max(f64::MIN_POSITIVE));
        v.push(vk);
    }
    (w, v)
}

/// Outcome of one auxiliary-precoder update.
#[derive(Debug, Clone)]
pub struct PUpdate {
    pub p: CMat,
    /// `||Psi X + X Phi - Upsilon||_F / ||Upsilon||_F` of the accepted solve.
    pub residual: f64,
    /// True when the dense Hessenberg-Schur path had to be used.
    pub dense_fallback: bool,
}

/// Coefficients of the Sylvester equation `Psi X + X Phi = Upsilon` with
/// `X = P^H`, returned with `Phi` in factored form `c I + G G^H`.
pub fn p_update_system(
    w: &[f64],
    v: &[C64],
    h: &CMat,
    at: &CMat,
    d_pinv: &CMat,
    rho: f64,
    sigma2: f64,
    p_t: f64,
) -> (CMat, ShiftedLowRank, CMat) {
    let inv_rho = C64::from(1.0 / rho);
    let psi = d_pinv * d_pinv.adjoint() * inv_rho;
    let mut factor = h.clone();
    let mut shift = 0.0;
    for k in 0..h.ncols() {
        let s = w[k] * v[k].norm_sqr();
        shift += s;
        factor.column_mut(k).scale_mut(s.sqrt());
    }
    shift *= sigma2 / p_t;
    let mut upsilon = d_pinv * at.adjoint() * inv_rho;
    for k in 0..h.ncols() {
        let coef = C64::from(w[k]) * v[k].conj();
        for (i, hz) in h.column(k).iter().enumerate() {
            upsilon[(k, i)] += coef * hz.conj();
        }
    }
    (psi, ShiftedLowRank { shift, factor }, upsilon)
}

/// Tolerance on the relative Sylvester residual.
pub const SYLVESTER_TOL: f64 = 1e-8;

/// Minimizes the weighted MSE plus penalty over `P_m`.
pub fn solve_p_update(
    w: &[f64],
    v: &[C64],
    h: &CMat,
    at: &CMat,
    d_pinv: &CMat,
    rho: f64,
    sigma2: f64,
    p_t: f64,
) -> Result<PUpdate> {
    let (psi, phi, upsilon) = p_update_system(w, v, h, at, d_pinv, rho, sigma2, p_t);
    let residual_of = |x: &CMat| {
        let r = &psi * x + x * C64::from(phi.shift) + (x * &phi.factor) * phi.factor.adjoint()
            - &upsilon;
        let scale = upsilon.norm();
        if scale > 0.0 {
            r.norm() / scale
        } else {
            r.norm()
        }
    };
    if let Ok(x) = solve_hermitian_low_rank(&psi, &phi, &upsilon) {
        let residual = residual_of(&x);
        if residual <= SYLVESTER_TOL && x.iter().all(|z| z.is_finite()) {
            return Ok(PUpdate {
                p: x.adjoint(),
                residual,
                dense_fallback: false,
            });
        }
    }
    let dense = phi.dense();
    let x = solve_hessenberg_schur(&psi, &dense, &upsilon)?;
    let residual = relative_residual(&psi, &dense, &x, &upsilon);
    log::debug!("dense Sylvester fallback, residual {residual:e}");
    Ok(PUpdate {
        p: x.adjoint(),
        residual,
        dense_fallback: true,
    })
}

/// Phase-shifter update: each coefficient takes the phase of
/// `sum_m p~_{m,i,n} exp(j 2 pi f_m t~_{n,q})`, phase 0 when that sum is 0.
pub fn ps_update(
    ptilde: &[CMat],
    cumulative: &[Vec<f64>],
    freqs: &[f64],
    n_sub: usize,
) -> Vec<Vec<C64>> {
    let n = ptilde[0].nrows();
    (0..cumulative.len())
        .map(|chain| {
            let rot: Vec<Vec<C64>> = freqs
                .iter()
                .map(|&f| {
                    cumulative[chain]
                        .iter()
                        .map(|&t| cis(2.0 * PI * f * t))
                        .collect()
                })
                .collect();
            (0..n)
                .map(|i| {
                    let s: C64 = ptilde
                        .iter()
                        .zip(&rot)
                        .map(|(pm, r)| pm[(i, chain)] * r[i / n_sub])
                        .sum();
                    if s.norm() > 0.0 {
                        s / s.norm()
                    } else {
                        C64::new(1.0, 0.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Uniform search grid `{0, t_max/(U-1), ..., t_max}` for TTD delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayGrid {
    pub t_max: f64,
    pub size: usize,
}

impl DelayGrid {
    pub fn new(t_max: f64, size: usize) -> Self {
        let size = if t_max > 0.0 { size.max(2) } else { 1 };
        Self { t_max, size }
    }

    pub fn step(&self) -> f64 {
        if self.size > 1 {
            self.t_max / (self.size - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, idx: usize) -> f64 {
        if idx + 1 >= self.size && self.size > 1 {
            self.t_max
        } else {
            self.step() * idx as f64
        }
    }

    /// Nearest grid index of `t` (clamped into the box).
    pub fn snap(&self, t: f64) -> usize {
        if self.size <= 1 {
            return 0;
        }
        ((t / self.step()).round().max(0.0) as usize).min(self.size - 1)
    }
}

/// Correlations `psi_{m,n,q} = p~_{m,n,q}^H a_{n,q}` indexed `[m][n][q]`.
pub fn ttd_coefficients(ptilde: &[CMat], ps: &[Vec<C64>], n_sub: usize) -> Vec<Vec<Vec<C64>>> {
    ptilde
        .iter()
        .map(|pm| {
            ps.iter()
                .enumerate()
                .map(|(chain, a)| {
                    a.chunks(n_sub)
                        .enumerate()
                        .map(|(q, block)| {
                            block
                                .iter()
                                .enumerate()
                                .map(|(i, ai)| pm[(q * n_sub + i, chain)].conj() * ai)
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Settings of the delay search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    /// Stop once a sweep improves the chain objective by less than this
    /// fraction.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_sweeps: 50,
        }
    }
}

/// `sum_m Re{c_m exp(-j 2 pi f_m t)}`.
fn tone_value(c: &[C64], freqs: &[f64], t: f64) -> f64 {
    c.iter()
        .zip(freqs)
        .map(|(cm, &f)| (cm * cis(-2.0 * PI * f * t)).re)
        .sum()
}

/// Best grid index for `sum_m Re{c_m exp(-j 2 pi f_m t)}`, scanning the
/// grid with incremental phasor rotation.
fn grid_argmax(c: &[C64], freqs: &[f64], grid: &DelayGrid) -> usize {
    const RESYNC: usize = 64;
    let step = grid.step();
    let rot: Vec<C64> = freqs.iter().map(|&f| cis(-2.0 * PI * f * step)).collect();
    let mut z = c.to_vec();
    let (mut best, mut best_val) = (0, f64::NEG_INFINITY);
    for u in 0..grid.size {
        if u > 0 && u % RESYNC == 0 {
            for ((zm, cm), &f) in z.iter_mut().zip(c).zip(freqs) {
                *zm = cm * cis(-2.0 * PI * f * step * u as f64);
            }
        }
        let val: f64 = z.iter().map(|zm| zm.re).sum();
        if val > best_val {
            best_val = val;
            best = u;
        }
        for (zm, r) in z.iter_mut().zip(&rot) {
            *zm *= r;
        }
    }
    best
}

/// `sum_m sum_q Re{psi_{m,q} exp(-j 2 pi f_m t~_q)}` for one chain.
pub fn chain_objective(psi: &[Vec<C64>], cumulative: &[f64], freqs: &[f64]) -> f64 {
    psi.iter()
        .zip(freqs)
        .map(|(pm, &f)| {
            pm.iter()
                .zip(cumulative)
                .map(|(c, &t)| (c * cis(-2.0 * PI * f * t)).re)
                .sum::<f64>()
        })
        .sum()
}

/// Cyclic coordinate descent over the raw delays of one chain; `psi` is
/// indexed `[m][q]`. Parallel chains decouple, so a single sweep is exact
/// on the grid.
pub fn chain_coordinate_descent(
    psi: &[Vec<C64>],
    freqs: &[f64],
    rule: ChainRule,
    grid: &DelayGrid,
    start: &[usize],
    opts: &CdOptions,
) -> (Vec<usize>, f64) {
    let q_len = start.len();
    let mut idx = start.to_vec();
    let raw_of = |idx: &[usize]| idx.iter().map(|&u| grid.value(u)).collect::<Vec<f64>>();
    let mut obj = chain_objective(psi, &rule.cumulative(&raw_of(&idx)), freqs);
    if grid.size <= 1 {
        return (idx, obj);
    }
    for _ in 0..opts.max_sweeps {
        for q in 0..q_len {
            let raw = raw_of(&idx);
            let cum = rule.cumulative(&raw);
            let c: Vec<C64> = psi
                .iter()
                .zip(freqs)
                .map(|(pm, &f)| {
                    rule.affected(q, q_len)
                        .map(|qq| pm[qq] * cis(-2.0 * PI * f * (cum[qq] - raw[q])))
                        .sum()
                })
                .collect();
            let u = grid_argmax(&c, freqs, grid);
            if u != idx[q] && tone_value(&c, freqs, grid.value(u)) > tone_value(&c, freqs, raw[q]) {
                idx[q] = u;
            }
        }
        let new_obj = chain_objective(psi, &rule.cumulative(&raw_of(&idx)), freqs);
        let gain = new_obj - obj;
        obj = new_obj.max(obj);
        if rule == ChainRule::Parallel || gain <= opts.tol * obj.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (idx, obj)
}

/// Delay update for every chain; `psi` indexed `[m][n][q]`, delays as
/// grid indices.
///
/// Serial chains run coordinate descent from the current delays and from
/// all-zero delays and keep the better result, which never loses against
/// the current point.
pub fn ttd_update(
    psi: &[Vec<Vec<C64>>],
    freqs: &[f64],
    topo: &TtdTopology,
    grid: &DelayGrid,
    current: &[Vec<usize>],
    opts: &CdOptions,
) -> Vec<Vec<usize>> {
    (0..topo.n_rf)
        .map(|n| {
            let psi_n: Vec<Vec<C64>> = psi.iter().map(|pm| pm[n].clone()).collect();
            let rule = topo.chain_rule(n);
            let (best, best_obj) =
                chain_coordinate_descent(&psi_n, freqs, rule, grid, &current[n], opts);
            if rule == ChainRule::Parallel || current[n].iter().all(|&u| u == 0) {
                return best;
            }
            let zeros = vec![0; current[n].len()];
            let (alt, alt_obj) = chain_coordinate_descent(&psi_n, freqs, rule, grid, &zeros, opts);
            if alt_obj > best_obj {
                alt
            } else {
                best
            }
        })
        .collect()
}

/// Least-squares digital precoder `D_m = (A T_m)^+ P_m`.
pub fn digital_update(p: &CMat, at: &CMat) -> Result<CMat> {
    let inv = pinv(at)?;
    if inv.rank_deficient {
        log::warn!(
            "A T_m is rank deficient (rank {}), using thresholded pseudo-inverse",
            inv.rank
        );
    }
    Ok(inv.matrix * p)
}

/// Digital precoder that minimizes the penalty `||P_m D_m^+ - A T_m||_F`
/// exactly: `D_m = ((P_m)^+ A T_m)^+`.
pub fn digital_update_penalty(p: &CMat, at: &CMat) -> Result<CMat> {
    let e = pinv(p)?.matrix * at;
    Ok(pinv(&e)?.matrix)
}
