//! Penalty-based block coordinate descent for the multi-user sum spectral
//! efficiency with any TTD topology.
//!
//! The factorization `P_m = A T_m D_m` is relaxed into a penalty
//! `(1/rho) sum_m ||P_m D_m^+ - A T_m||_F^2`. For fixed `rho` the inner
//! loop cycles through the WMMSE scalars, the auxiliary precoders `P_m`
//! (a Sylvester equation per subcarrier), the phase shifters, the delays
//! and the digital precoders. The outer loop shrinks `rho` until the
//! constraint violation `max_m ||P_m D_m^+ - A T_m||_max` is small.

pub mod full_digital;
pub mod updates;

use serde::{Deserialize, Serialize};

use crate::beamformer::{effective_analog, BeamformerSet};
use crate::channel::NearFieldChannel;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{fro_norm_sq, max_abs, pinv, CMat, C64};
use crate::single_user::{
    classify_with_endfire_limit, finite_range_design, infinite_range_design, subarray_geometry,
};
use crate::topology::{DelayVector, TopologyKind, TtdTopology};

use updates::{
    digital_update, digital_update_penalty, ps_update, rates, solve_p_update, surrogate_utility,
    ttd_coefficients, ttd_update, wmmse_update, CdOptions, DelayGrid,
};

/// How the digital precoders are refreshed inside the inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DigitalRule {
    /// `D_m = (A T_m)^+ P_m`.
    LeastSquares,
    /// `D_m = (P_m^+ A T_m)^+`, the exact minimizer of the penalty term.
    PenaltyExact,
    /// Least squares, but the previous `D_m` is kept whenever the
    /// least-squares candidate would increase the penalty term.
    Safeguarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub rho_init: f64,
    /// Factor applied to `rho` after every outer iteration, in `(0, 1)`.
    pub rho_factor: f64,
    /// Fractional objective change that ends the inner loop.
    pub inner_tol: f64,
    /// Constraint-violation target.
    pub xi_tol: f64,
    pub grid_size: usize,
    pub outer_max: usize,
    pub inner_max: usize,
    pub cd_tol: f64,
    pub cd_max_sweeps: usize,
    pub digital_rule: DigitalRule,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            rho_init: 1e4,
            rho_factor: 0.1,
            inner_tol: 1e-4,
            xi_tol: 1e-4,
            grid_size: 1000,
            outer_max: 30,
            inner_max: 200,
            cd_tol: 1e-4,
            cd_max_sweeps: 50,
            digital_rule: DigitalRule::Safeguarded,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::config(field, reason));
        if !(self.rho_init > 0.0 && self.rho_init.is_finite()) {
            return bad("rho_init", "must be finite and > 0");
        }
        if !(self.rho_factor > 0.0 && self.rho_factor < 1.0) {
            return bad("rho_factor", "must lie in (0, 1)");
        }
        if !(self.inner_tol > 0.0 && self.xi_tol > 0.0 && self.cd_tol > 0.0) {
            return bad("inner_tol", "tolerances must be > 0");
        }
        if self.grid_size < 2 {
            return bad("grid_size", "must be at least 2");
        }
        if self.outer_max == 0 || self.inner_max == 0 || self.cd_max_sweeps == 0 {
            return bad("outer_max", "iteration caps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveOptions {
    pub hyper: Hyperparams,
    /// Keep every delay at 0 (phase-shifter-only hybrid beamforming).
    pub freeze_delays: bool,
    /// Record one trace row per inner sweep.
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub rho: f64,
    /// Penalized objective in nats.
    pub objective: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_sweeps: usize,
    pub final_rho: f64,
    pub final_xi: f64,
    /// Largest relative Sylvester residual over all `P` updates.
    pub max_sylvester_residual: f64,
    pub dense_fallbacks: usize,
    /// Largest decrease of the penalized objective between consecutive
    /// sweeps at fixed `rho`, relative to `max(1, |objective|)`.
    pub max_objective_drop: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub beamformers: BeamformerSet,
    /// Rates `R_{m,k}` of the returned hybrid precoders, bits/s/Hz.
    pub rates: Vec<Vec<f64>>,
    /// `sum_{m,k} R_{m,k} / (M + L_cp)`.
    pub spectral_efficiency: f64,
    pub diagnostics: Diagnostics,
}

/// RF chain to user assignment used for the warm start. HFB gives the
/// forward chains the users with the largest `J`, whose unbounded delay
/// profiles increase along the array.
pub fn chain_users(
    channel: &NearFieldChannel,
    topo: &TtdTopology,
    cfg: &SystemConfig,
) -> Result<Vec<usize>> {
    let k_users = channel.n_users();
    if topo.kind != TopologyKind::Hfb {
        return Ok((0..topo.n_rf).map(|n| n % k_users).collect());
    }
    let mut order: Vec<(usize, f64)> = channel
        .users
        .iter()
        .enumerate()
        .map(|(k, loc)| Ok((k, classify_with_endfire_limit(loc, cfg)?.j)))
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok((0..topo.n_rf)
        .map(|n| order[n * k_users / topo.n_rf].0)
        .collect())
}

/// Warm start: each chain points its phase shifters at its user's LoS
/// location and takes the closed-form bounded delays (snapped to the
/// grid); `D_m` is the zero-forcing precoder at full power.
pub fn initial_point(
    channel: &NearFieldChannel,
    topo: &TtdTopology,
    cfg: &SystemConfig,
    grid: &DelayGrid,
    freeze_delays: bool,
) -> Result<(Vec<Vec<C64>>, Vec<Vec<usize>>, Vec<CMat>)> {
    let users = chain_users(channel, topo, cfg)?;
    let mut ps = Vec::with_capacity(topo.n_rf);
    let mut idx = Vec::with_capacity(topo.n_rf);
    for (n, &k) in users.iter().enumerate() {
        let geo = subarray_geometry(&channel.users[k], cfg)?;
        let profile = infinite_range_design(&geo, cfg);
        ps.push(profile.ps_coefficients());
        if freeze_delays {
            idx.push(vec![0; topo.n_ttd]);
        } else {
            let raw = finite_range_design(&profile, topo.chain_rule(n), grid.t_max);
            idx.push(raw.iter().map(|&t| grid.snap(t)).collect());
        }
    }
    let cum = cumulative_from_grid(topo, grid, &idx);
    let n_sub = cfg.n_sub();
    let digital = channel
        .frequencies
        .iter()
        .enumerate()
        .map(|(m, &f)| {
            let at = effective_analog(&ps, &cum, n_sub, f, None);
            let heff = channel.matrix(m).adjoint() * &at;
            let d = pinv(&heff)?.matrix;
            Ok(scale_to_power(&at, d, cfg.transmit_power))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ps, idx, digital))
}

fn cumulative_from_grid(topo: &TtdTopology, grid: &DelayGrid, idx: &[Vec<usize>]) -> Vec<Vec<f64>> {
    idx.iter()
        .enumerate()
        .map(|(n, chain)| {
            let raw: Vec<f64> = chain.iter().map(|&u| grid.value(u)).collect();
            topo.chain_rule(n).cumulative(&raw)
        })
        .collect()
}

/// Scales `d` so that `||A T d||_F^2 = p_t`; a zero product is replaced by
/// an equal split over the RF chains.
fn scale_to_power(at: &CMat, d: CMat, p_t: f64) -> CMat {
    let power = fro_norm_sq(&(at * &d));
    if power > 0.0 && power.is_finite() {
        return d * C64::from((p_t / power).sqrt());
    }
    let (n_rf, k) = d.shape();
    let fallback = CMat::from_fn(n_rf, k, |i, j| {
        if i % k == j {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let power = fro_norm_sq(&(at * &fallback));
    if power > 0.0 {
        fallback * C64::from((p_t / power).sqrt())
    } else {
        fallback
    }
}

struct State<'a> {
    channel: &'a NearFieldChannel,
    topo: TtdTopology,
    grid: DelayGrid,
    n_sub: usize,
    sigma2: f64,
    p_t: f64,
    ps: Vec<Vec<C64>>,
    idx: Vec<Vec<usize>>,
    cum: Vec<Vec<f64>>,
    at: Vec<CMat>,
    p: Vec<CMat>,
    d: Vec<CMat>,
    d_pinv: Vec<CMat>,
}

impl State<'_> {
    fn refresh_analog(&mut self) {
        self.cum = cumulative_from_grid(&self.topo, &self.grid, &self.idx);
        self.at = self
            .channel
            .frequencies
            .iter()
            .map(|&f| effective_analog(&self.ps, &self.cum, self.n_sub, f, None))
            .collect();
    }

    fn violation(&self, m: usize) -> CMat {
        &self.p[m] * &self.d_pinv[m] - &self.at[m]
    }

    fn xi(&self) -> f64 {
        (0..self.p.len())
            .map(|m| max_abs(&self.violation(m)))
            .fold(0.0, f64::max)
    }

    fn objective(&self, rho: f64) -> f64 {
        (0..self.p.len())
            .map(|m| {
                surrogate_utility(self.channel.matrix(m), &self.p[m], self.sigma2, self.p_t)
                    - fro_norm_sq(&self.violation(m)) / rho
            })
            .sum()
    }

    /// Hybrid precoders with least-squares digital part at full power.
    fn readout(&self) -> Result<Vec<CMat>> {
        (0..self.p.len())
            .map(|m| {
                Ok(scale_to_power(
                    &self.at[m],
                    digital_update(&self.p[m], &self.at[m])?,
                    self.p_t,
                ))
            })
            .collect()
    }
}

fn spectral_efficiency_of(rates: &[Vec<f64>], cp_length: usize) -> f64 {
    rates.iter().flatten().sum::<f64>() / (rates.len() + cp_length) as f64
}

/// Runs the penalty method on `channel` with delays limited to
/// `cfg.t_max`.
pub fn penalty_solve(
    channel: &NearFieldChannel,
    topo: &TtdTopology,
    cfg: &SystemConfig,
    opts: &SolveOptions,
) -> Result<Solution> {
    cfg.validate()?;
    let hp = &opts.hyper;
    hp.validate()?;
    if channel.n_antennas() != cfg.n_antennas || topo.n_ttd != cfg.n_ttd_per_chain {
        return Err(Error::Shape(
            "channel or topology does not match the configuration".into(),
        ));
    }
    let t_max = if opts.freeze_delays { 0.0 } else { cfg.t_max };
    let grid = DelayGrid::new(t_max, hp.grid_size);
    let (ps, idx, d) = initial_point(channel, topo, cfg, &grid, opts.freeze_delays)?;
    let mut st = State {
        channel,
        topo: *topo,
        grid,
        n_sub: cfg.n_sub(),
        sigma2: cfg.noise_power(),
        p_t: cfg.transmit_power,
        ps,
        idx,
        cum: Vec::new(),
        at: Vec::new(),
        p: Vec::new(),
        d_pinv: Vec::new(),
        d,
    };
    st.refresh_analog();
    st.p = st.at.iter().zip(&st.d).map(|(at, d)| at * d).collect();
    st.d_pinv =
        st.d.iter()
            .map(|d| Ok(pinv(d)?.matrix))
            .collect::<Result<_>>()?;
    let freqs = channel.frequencies.clone();
    let cd = CdOptions {
        tol: hp.cd_tol,
        max_sweeps: hp.cd_max_sweeps,
    };

    let mut diag = Diagnostics::default();
    let mut rho = hp.rho_init;
    let mut best: Option<(f64, Vec<Vec<C64>>, Vec<Vec<usize>>, Vec<CMat>)> = None;
    for outer in 0..hp.outer_max {
        let mut prev = st.objective(rho);
        for inner in 0..hp.inner_max {
            for m in 0..freqs.len() {
                let h = channel.matrix(m);
                let (w, v) = wmmse_update(h, &st.p[m], st.sigma2, st.p_t);
                let upd =
                    solve_p_update(&w, &v, h, &st.at[m], &st.d_pinv[m], rho, st.sigma2, st.p_t)?;
                diag.max_sylvester_residual = diag.max_sylvester_residual.max(upd.residual);
                diag.dense_fallbacks += usize::from(upd.dense_fallback);
                st.p[m] = upd.p;
            }
            let ptilde: Vec<CMat> = st.p.iter().zip(&st.d_pinv).map(|(p, dp)| p * dp).collect();
            st.ps = ps_update(&ptilde, &st.cum, &freqs, st.n_sub);
            if !opts.freeze_delays {
                let psi = ttd_coefficients(&ptilde, &st.ps, st.n_sub);
                st.idx = ttd_update(&psi, &freqs, &st.topo, &st.grid, &st.idx, &cd);
            }
            st.refresh_analog();
            for m in 0..freqs.len() {
                let d = match hp.digital_rule {
                    DigitalRule::LeastSquares | DigitalRule::Safeguarded => {
                        digital_update(&st.p[m], &st.at[m])?
                    }
                    DigitalRule::PenaltyExact => digital_update_penalty(&st.p[m], &st.at[m])?,
                };
                let d_pinv = pinv(&d)?.matrix;
                if hp.digital_rule == DigitalRule::Safeguarded {
                    let old = fro_norm_sq(&st.violation(m));
                    let mut lambda = 1.0;
                    let mut accepted = None;
                    for _ in 0..8 {
                        let cand = &st.d[m] * C64::from(1.0 - lambda) + &d * C64::from(lambda);
                        let cand_pinv = pinv(&cand)?.matrix;
                        if fro_norm_sq(&(&st.p[m] * &cand_pinv - &st.at[m])) <= old {
                            accepted = Some((cand, cand_pinv));
                            break;
                        }
                        lambda *= 0.5;
                    }
                    if let Some((cand, cand_pinv)) = accepted {
                        st.d[m] = cand;
                        st.d_pinv[m] = cand_pinv;
                    }
                    continue;
                }
                st.d[m] = d;
                st.d_pinv[m] = d_pinv;
            }
            let obj = st.objective(rho);
            diag.inner_sweeps += 1;
            let drop = (prev - obj) / prev.abs().max(1.0);
            diag.max_objective_drop = diag.max_objective_drop.max(drop);
            if opts.trace {
                diag.trace.push(TraceRow {
                    outer,
                    inner,
                    rho,
                    objective: obj,
                    xi: st.xi(),
                });
            }
            let change = (obj - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            prev = obj;
            if change < hp.inner_tol {
                break;
            }
        }
        diag.outer_iterations = outer + 1;
        diag.final_rho = rho;
        diag.final_xi = st.xi();
        if diag.final_xi < hp.xi_tol {
            diag.converged = true;
            break;
        }
        let digital = st.readout()?;
        let se = spectral_efficiency_of(
            &hybrid_rates(channel, &st.at, &digital, st.sigma2),
            cfg.cp_length,
        );
        if best.as_ref().is_none_or(|b| se > b.0) {
            best = Some((se, st.ps.clone(), st.idx.clone(), digital));
        }
        rho *= hp.rho_factor;
    }

    let (ps, idx, digital) = match (diag.converged, best) {
        (false, Some((_, ps, idx, digital))) => {
            log::warn!(
                "penalty method stopped after {} outer iterations with xi = {:e}",
                diag.outer_iterations,
                diag.final_xi
            );
            (ps, idx, digital)
        }
        _ => {
            let digital = st.readout()?;
            (st.ps, st.idx, digital)
        }
    };
    let raw: Vec<Vec<f64>> = idx
        .iter()
        .map(|c| c.iter().map(|&u| grid.value(u)).collect())
        .collect();
    let beamformers = BeamformerSet::new(*topo, ps, DelayVector::new(raw, t_max)?, digital)?;
    let cum = beamformers.cumulative();
    let at: Vec<CMat> = freqs
        .iter()
        .map(|&f| beamformers.effective_analog(f, &cum, None))
        .collect();
    let rates = hybrid_rates(channel, &at, &beamformers.digital, cfg.noise_power());
    let spectral_efficiency = spectral_efficiency_of(&rates, cfg.cp_length);
    Ok(Solution {
        beamformers,
        rates,
        spectral_efficiency,
        diagnostics: diag,
    })
}

fn hybrid_rates(
    channel: &NearFieldChannel,
    at: &[CMat],
    digital: &[CMat],
    sigma2: f64,
) -> Vec<Vec<f64>> {
    at.iter()
        .zip(digital)
        .enumerate()
        .map(|(m, (a, d))| rates(channel.matrix(m), &(a * d), sigma2))
        .collect()
}
