//! TTD wiring: delay accumulation, frequency-domain TTD matrices and
//! power-splitter design with insertion-loss equalization.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, CMat};

/// How the `Q` TTDs of every RF chain are connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopologyKind {
    #[serde(rename = "parallel")]
    Parallel,
    #[serde(rename = "serial_f")]
    SerialForward,
    #[serde(rename = "serial_b")]
    SerialBackward,
    #[serde(rename = "hybrid")]
    Hybrid,
    /// Forward serial on the first half of the RF chains, backward serial
    /// on the rest.
    #[serde(rename = "hfb")]
    Hfb,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 5] = [
        TopologyKind::Parallel,
        TopologyKind::SerialForward,
        TopologyKind::SerialBackward,
        TopologyKind::Hybrid,
        TopologyKind::Hfb,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            TopologyKind::Parallel => "parallel",
            TopologyKind::SerialForward => "serial_f",
            TopologyKind::SerialBackward => "serial_b",
            TopologyKind::Hybrid => "hybrid",
            TopologyKind::Hfb => "hfb",
        }
    }

    pub fn is_serial(self) -> bool {
        matches!(
            self,
            TopologyKind::SerialForward | TopologyKind::SerialBackward | TopologyKind::Hfb
        )
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopologyKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown topology `{s}` (expected parallel, serial_f, serial_b, hybrid or hfb)"
                ))
            })
    }
}

/// Delay accumulation rule of a single RF chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainRule {
    Parallel,
    Forward,
    Backward,
    /// Forward group `q <= Q/2`, backward group `q > Q/2`.
    Hybrid,
}

impl ChainRule {
    /// Output delays of one chain from its raw TTD delays.
    pub fn cumulative(self, raw: &[f64]) -> Vec<f64> {
        let q_len = raw.len();
        let half = q_len / 2;
        let mut out = vec![0.0; q_len];
        match self {
            ChainRule::Parallel => out.copy_from_slice(raw),
            ChainRule::Forward => prefix_into(raw, &mut out),
            ChainRule::Backward => suffix_into(raw, &mut out),
            ChainRule::Hybrid => {
                prefix_into(&raw[..half], &mut out[..half]);
                suffix_into(&raw[half..], &mut out[half..]);
            }
        }
        out
    }

    /// 0-based outputs whose delay contains raw delay `q`.
    pub fn affected(self, q: usize, q_len: usize) -> Range<usize> {
        let half = q_len / 2;
        match self {
            ChainRule::Parallel => q..q + 1,
            ChainRule::Forward => q..q_len,
            ChainRule::Backward => 0..q + 1,
            ChainRule::Hybrid if q < half => q..half,
            ChainRule::Hybrid => half..q + 1,
        }
    }

    /// Number of TTD + splitter stages the signal of output `q` (0-based)
    /// traverses, and the size of the serial group it belongs to.
    pub fn stage(self, q: usize, q_len: usize) -> (usize, usize) {
        let half = q_len / 2;
        match self {
            ChainRule::Parallel => (1, 1),
            ChainRule::Forward => (q + 1, q_len),
            ChainRule::Backward => (q_len - q, q_len),
            ChainRule::Hybrid if q < half => (q + 1, half),
            ChainRule::Hybrid => (q_len - q, q_len - half),
        }
    }
}

fn prefix_into(raw: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, &t) in out.iter_mut().zip(raw) {
        acc += t;
        *o = acc;
    }
}

fn suffix_into(raw: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, &t) in out.iter_mut().zip(raw).rev() {
        acc += t;
        *o = acc;
    }
}

/// Topology of the whole TTD network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TtdTopology {
    pub kind: TopologyKind,
    pub n_rf: usize,
    pub n_ttd: usize,
}

impl TtdTopology {
    pub fn new(kind: TopologyKind, n_rf: usize, n_ttd: usize) -> Result<Self> {
        if n_ttd == 0 || n_rf == 0 {
            return Err(Error::InvalidArgument("empty TTD network".into()));
        }
        if kind == TopologyKind::Hybrid && n_ttd % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "hybrid topology needs an even number of TTDs per chain, got {n_ttd}"
            )));
        }
        if kind == TopologyKind::Hfb && n_rf % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "HFB topology needs an even number of RF chains, got {n_rf}"
            )));
        }
        Ok(Self { kind, n_rf, n_ttd })
    }

    /// Accumulation rule of RF chain `n` (0-based).
    pub fn chain_rule(&self, n: usize) -> ChainRule {
        match self.kind {
            TopologyKind::Parallel => ChainRule::Parallel,
            TopologyKind::SerialForward => ChainRule::Forward,
            TopologyKind::SerialBackward => ChainRule::Backward,
            TopologyKind::Hybrid => ChainRule::Hybrid,
            TopologyKind::Hfb if n < self.n_rf / 2 => ChainRule::Forward,
            TopologyKind::Hfb => ChainRule::Backward,
        }
    }
}

/// Raw per-TTD delays (canonical storage); output delays are always
/// derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayVector {
    /// `raw[n][q]` in seconds.
    pub raw: Vec<Vec<f64>>,
    pub t_max: f64,
}

impl DelayVector {
    pub fn new(raw: Vec<Vec<f64>>, t_max: f64) -> Result<Self> {
        let dv = Self { raw, t_max };
        dv.check_box()?;
        Ok(dv)
    }

    pub fn zeros(n_rf: usize, n_ttd: usize, t_max: f64) -> Self {
        Self {
            raw: vec![vec![0.0; n_ttd]; n_rf],
            t_max,
        }
    }

    pub fn check_box(&self) -> Result<()> {
        for (n, chain) in self.raw.iter().enumerate() {
            for (q, &t) in chain.iter().enumerate() {
                if !(t >= 0.0 && t <= self.t_max) {
                    return Err(Error::InvalidArgument(format!(
                        "delay t[{n}][{q}] = {t:e} s outside [0, {:e}]",
                        self.t_max
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest raw delay over all TTDs.
    pub fn max_raw(&self) -> f64 {
        self.raw.iter().flatten().cloned().fold(0.0, f64::max)
    }
}

/// Output delays `t~[n][q]` of every chain.
pub fn cumulative_delays(raw: &DelayVector, topo: &TtdTopology) -> Result<Vec<Vec<f64>>> {
    raw.check_box()?;
    if raw.raw.len() != topo.n_rf || raw.raw.iter().any(|c| c.len() != topo.n_ttd) {
        return Err(Error::Shape(format!(
            "delay vector does not match {} chains x {} TTDs",
            topo.n_rf, topo.n_ttd
        )));
    }
    Ok(raw
        .raw
        .iter()
        .enumerate()
        .map(|(n, chain)| topo.chain_rule(n).cumulative(chain))
        .collect())
}

/// Block-diagonal `Q N_RF x N_RF` matrix whose block `n` is
/// `exp(-j 2 pi f t~_n)`.
pub fn ttd_phase_matrix(cumulative: &[Vec<f64>], f: f64) -> CMat {
    let n_rf = cumulative.len();
    let q_len = cumulative.first().map_or(0, Vec::len);
    let mut t = CMat::zeros(q_len * n_rf, n_rf);
    for (n, chain) in cumulative.iter().enumerate() {
        for (q, &delay) in chain.iter().enumerate() {
            t[(n * q_len + q, n)] = cis(-2.0 * PI * f * delay);
        }
    }
    t
}

/// `1 + eta + ... + eta^(n-1)`.
fn geometric_sum(eta: f64, n: usize) -> f64 {
    let mut acc = 0.0;
    let mut p = 1.0;
    for _ in 0..n {
        acc += p;
        p *= eta;
    }
    acc
}

/// Splitting coefficients of one serial TTD group, indexed in feed order
/// (the first entry belongs to the TTD closest to the RF chain).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitterPlan {
    /// Fraction `nu_q` of the incoming power tapped at stage `q`.
    pub coefficients: Vec<f64>,
    /// Fraction `nu~_q` of the group input power assigned to stage `q`.
    pub fractions: Vec<f64>,
    /// Per-stage insertion loss the plan was designed for.
    pub eta: f64,
    /// Loss of each output relative to `P_in / Q` after the design.
    pub effective_loss: f64,
}

/// Equal-output splitter for a lossless cascade, `nu_q = 1/(Q-q+1)`.
pub fn splitter_equal_power(q_len: usize) -> SplitterPlan {
    let coefficients: Vec<f64> = (1..=q_len).map(|q| 1.0 / (q_len - q + 1) as f64).collect();
    SplitterPlan {
        coefficients,
        fractions: vec![1.0 / q_len as f64; q_len],
        eta: 1.0,
        effective_loss: 1.0,
    }
}

/// Splitter that equalizes the output powers of a cascade with per-stage
/// loss `eta`: `nu_q = (1 - eta) / (1 - eta^(Q-q+1))`.
pub fn splitter_equalized(q_len: usize, eta: f64) -> Result<SplitterPlan> {
    check_eta(eta)?;
    let total = geometric_sum(eta, q_len);
    let coefficients = (1..=q_len)
        .map(|q| 1.0 / geometric_sum(eta, q_len - q + 1))
        .collect();
    let fractions = (1..=q_len)
        .map(|q| eta.powi(q as i32 - 1) / total)
        .collect();
    Ok(SplitterPlan {
        coefficients,
        fractions,
        eta,
        effective_loss: eta * total / q_len as f64,
    })
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "insertion loss must be >= 1 (linear), got {eta}"
        )))
    }
}

/// Output powers (relative to the group input) of a cascade where stage
/// `q` taps `coefficients[q]` of the remaining power and every stage costs
/// `eta`.
pub fn cascade_output_powers(coefficients: &[f64], eta: f64) -> Vec<f64> {
    let mut remaining = 1.0;
    let mut loss = 1.0;
    coefficients
        .iter()
        .map(|&nu| {
            loss *= eta;
            let out = nu * remaining / loss;
            remaining *= 1.0 - nu;
            out
        })
        .collect()
}

/// Effective per-TTD insertion loss after equalization.
pub fn effective_insertion_loss(q_len: usize, eta: f64, kind: TopologyKind) -> Result<f64> {
    check_eta(eta)?;
    let group = match kind {
        TopologyKind::Parallel => return Ok(eta),
        TopologyKind::SerialForward | TopologyKind::SerialBackward | TopologyKind::Hfb => q_len,
        TopologyKind::Hybrid => q_len / 2,
    };
    Ok(eta * geometric_sum(eta, group) / group as f64)
}

/// Power of every TTD branch relative to a lossy parallel network
/// (`P_in / (Q eta)` per branch), for equalized or equal-split splitters.
///
/// The splitter feeding the two hybrid groups is lossless and 50/50.
pub fn branch_power_weights(
    topo: &TtdTopology,
    eta: f64,
    equalized: bool,
) -> Result<Vec<Vec<f64>>> {
    check_eta(eta)?;
    let q_len = topo.n_ttd;
    (0..topo.n_rf)
        .map(|n| {
            let rule = topo.chain_rule(n);
            (0..q_len)
                .map(|q| {
                    if rule == ChainRule::Parallel {
                        return Ok(1.0);
                    }
                    let (pos, group) = rule.stage(q, q_len);
                    let plan = if equalized {
                        splitter_equalized(group, eta)?
                    } else {
                        splitter_equal_power(group)
                    };
                    let share = group as f64 / q_len as f64;
                    let p = cascade_output_powers(&plan.coefficients, eta)[pos - 1];
                    Ok(p * share * q_len as f64 * eta)
                })
                .collect()
        })
        .collect()
}
