//! Spectral-efficiency accounting and the reference schemes used for
//! comparison: fully digital, unbounded parallel TTDs and phase-shifter
//! only hybrid beamforming.

use std::fmt;

use crate::beamformer::BeamformerSet;
use crate::channel::NearFieldChannel;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::single_user::array_gains;
use crate::solver::full_digital::{wmmse_full_digital, FullDigitalOptions};
use crate::solver::updates::rates;
use crate::solver::{penalty_solve, Solution, SolveOptions};
use crate::topology::{branch_power_weights, TopologyKind, TtdTopology};

/// Scheme labels used in reports and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    FullDigital,
    OptimalTtd,
    Conventional,
    /// Bounded TTDs with equalized splitters.
    Ttd,
    /// Bounded TTDs with equal-split (non-equalized) splitters.
    TtdUnequalized,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::FullDigital => "full_digital",
            Scheme::OptimalTtd => "optimal_ttd",
            Scheme::Conventional => "conventional",
            Scheme::Ttd => "ttd",
            Scheme::TtdUnequalized => "ttd_noeq",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Per-stage insertion loss and splitter mode applied when rating a design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsertionLoss {
    /// Combined linear loss per TTD stage, `>= 1`.
    pub eta: f64,
    pub equalized: bool,
}

impl InsertionLoss {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            eta: cfg.eta(),
            equalized: cfg.equalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub scheme: Scheme,
    /// `rates[m][k]`, bits/s/Hz.
    pub rates: Vec<Vec<f64>>,
    /// `sum_{m,k} R_{m,k} / (M + L_cp)`.
    pub spectral_efficiency: f64,
    /// `G_m / N` towards the LoS location of user 0 for single-chain
    /// designs; empty otherwise.
    pub gain_fractions: Vec<f64>,
    /// Mean branch power relative to a lossy parallel network (1 when no
    /// loss is modeled).
    pub power_derating: f64,
}

fn aggregate(rates: &[Vec<f64>], cp_length: usize) -> f64 {
    rates.iter().flatten().sum::<f64>() / (rates.len() + cp_length) as f64
}

/// Rates of a hybrid design on `channel`. With `insertion`, every TTD
/// branch is scaled by its power relative to a parallel network with the
/// same per-stage loss, so parallel designs are never derated.
pub fn spectral_efficiency(
    bf: &BeamformerSet,
    channel: &NearFieldChannel,
    cfg: &SystemConfig,
    insertion: Option<InsertionLoss>,
    scheme: Scheme,
) -> Result<EvaluationReport> {
    if bf.digital.len() != channel.n_subcarriers() || bf.n_antennas() != channel.n_antennas() {
        return Err(Error::Shape("beamformer does not match the channel".into()));
    }
    let weights = insertion
        .map(|loss| branch_power_weights(&bf.topology, loss.eta, loss.equalized))
        .transpose()?;
    let gains: Option<Vec<Vec<f64>>> = weights.as_ref().map(|w| {
        w.iter()
            .map(|c| c.iter().map(|p| p.sqrt()).collect())
            .collect()
    });
    let power_derating = weights.as_ref().map_or(1.0, |w| {
        let flat: Vec<f64> = w.iter().flatten().cloned().collect();
        flat.iter().sum::<f64>() / flat.len() as f64
    });
    let cum = bf.cumulative();
    let sigma2 = cfg.noise_power();
    let per_sub: Vec<Vec<f64>> = channel
        .frequencies
        .iter()
        .enumerate()
        .map(|(m, &f)| {
            let x = bf.effective_analog(f, &cum, gains.as_deref()) * &bf.digital[m];
            rates(channel.matrix(m), &x, sigma2)
        })
        .collect();
    let gain_fractions = if bf.n_rf() == 1 && channel.n_users() >= 1 {
        let n = bf.n_antennas() as f64;
        array_gains(&channel.users[0], bf, 0, cfg)
            .into_iter()
            .map(|g| g / n)
            .collect()
    } else {
        Vec::new()
    };
    Ok(EvaluationReport {
        scheme,
        spectral_efficiency: aggregate(&per_sub, cfg.cp_length),
        rates: per_sub,
        gain_fractions,
        power_derating,
    })
}

/// Fully digital WMMSE precoding on every subcarrier (upper bound).
pub fn benchmark_full_digital(
    channel: &NearFieldChannel,
    cfg: &SystemConfig,
) -> Result<EvaluationReport> {
    let sigma2 = cfg.noise_power();
    let opts = FullDigitalOptions::default();
    let per_sub = (0..channel.n_subcarriers())
        .map(|m| {
            let h = channel.matrix(m);
            let p = wmmse_full_digital(h, sigma2, cfg.transmit_power, &opts)?;
            Ok(rates(h, &p, sigma2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        scheme: Scheme::FullDigital,
        spectral_efficiency: aggregate(&per_sub, cfg.cp_length),
        rates: per_sub,
        gain_fractions: Vec::new(),
        power_derating: 1.0,
    })
}

/// Penalty method with parallel TTDs whose range `(N - N_sub) d / c`
/// covers every delay an unbounded design needs.
pub fn benchmark_optimal_ttd(
    channel: &NearFieldChannel,
    cfg: &SystemConfig,
    opts: &SolveOptions,
) -> Result<(EvaluationReport, Solution)> {
    let mut cfg = cfg.clone();
    cfg.t_max = cfg.unbounded_delay();
    let topo = TtdTopology::new(TopologyKind::Parallel, cfg.n_rf, cfg.n_ttd_per_chain)?;
    let sol = penalty_solve(channel, &topo, &cfg, opts)?;
    let report = spectral_efficiency(&sol.beamformers, channel, &cfg, None, Scheme::OptimalTtd)?;
    Ok((report, sol))
}

/// Penalty method with every delay frozen at zero.
pub fn benchmark_conventional(
    channel: &NearFieldChannel,
    cfg: &SystemConfig,
    opts: &SolveOptions,
) -> Result<(EvaluationReport, Solution)> {
    let topo = TtdTopology::new(TopologyKind::Parallel, cfg.n_rf, cfg.n_ttd_per_chain)?;
    let opts = SolveOptions {
        freeze_delays: true,
        ..opts.clone()
    };
    let sol = penalty_solve(channel, &topo, cfg, &opts)?;
    let report = spectral_efficiency(&sol.beamformers, channel, cfg, None, Scheme::Conventional)?;
    Ok((report, sol))
}

/// Penalty method for a bounded TTD network, rated with the configured
/// insertion loss.
pub fn evaluate_ttd(
    channel: &NearFieldChannel,
    kind: TopologyKind,
    cfg: &SystemConfig,
    opts: &SolveOptions,
) -> Result<(EvaluationReport, Solution)> {
    let topo = TtdTopology::new(kind, cfg.n_rf, cfg.n_ttd_per_chain)?;
    let sol = penalty_solve(channel, &topo, cfg, opts)?;
    let scheme = if cfg.equalized {
        Scheme::Ttd
    } else {
        Scheme::TtdUnequalized
    };
    let report = spectral_efficiency(
        &sol.beamformers,
        channel,
        cfg,
        Some(InsertionLoss::from_config(cfg)),
        scheme,
    )?;
    Ok((report, sol))
}
