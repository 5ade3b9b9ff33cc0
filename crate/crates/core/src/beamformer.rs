//! Hybrid beamformer container: phase shifters, TTD delays and per-subcarrier
//! digital precoders.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{cis, fro_norm_sq, CMat, C64};
use crate::topology::{cumulative_delays, ttd_phase_matrix, DelayVector, TtdTopology};

/// Tolerance on `|a| = 1` when validating phase-shifter coefficients.
const UNIT_MODULUS_TOL: f64 = 1e-12;

/// `F_m = A T_m D_m` for every subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub topology: TtdTopology,
    /// `ps[n]` holds the `N` phase-shifter coefficients behind RF chain `n`;
    /// entries `q N_sub .. (q + 1) N_sub` form the sub-array vector `a_{n,q}`.
    pub ps: Vec<Vec<C64>>,
    pub delays: DelayVector,
    /// `N_RF x K` digital precoder per subcarrier.
    pub digital: Vec<CMat>,
}

impl BeamformerSet {
    pub fn new(
        topology: TtdTopology,
        ps: Vec<Vec<C64>>,
        delays: DelayVector,
        digital: Vec<CMat>,
    ) -> Result<Self> {
        let bf = Self {
            topology,
            ps,
            delays,
            digital,
        };
        bf.validate()?;
        Ok(bf)
    }

    pub fn validate(&self) -> Result<()> {
        let n_rf = self.topology.n_rf;
        if self.ps.len() != n_rf {
            return Err(Error::Shape(format!(
                "{} phase-shifter chains for {n_rf} RF chains",
                self.ps.len()
            )));
        }
        let n = self.n_antennas();
        if n == 0 || n % self.topology.n_ttd != 0 || self.ps.iter().any(|c| c.len() != n) {
            return Err(Error::Shape(
                "phase-shifter vectors must all have N entries, N divisible by Q".into(),
            ));
        }
        if let Some(bad) = self
            .ps
            .iter()
            .flatten()
            .find(|a| (a.norm() - 1.0).abs() > UNIT_MODULUS_TOL)
        {
            return Err(Error::InvalidArgument(format!(
                "phase-shifter coefficient {bad} is not unit modulus"
            )));
        }
        cumulative_delays(&self.delays, &self.topology)?;
        if let Some(d) = self.digital.iter().find(|d| d.nrows() != n_rf) {
            return Err(Error::Shape(format!(
                "digital precoder has {} rows, expected {n_rf}",
                d.nrows()
            )));
        }
        Ok(())
    }

    pub fn n_antennas(&self) -> usize {
        self.ps.first().map_or(0, Vec::len)
    }

    pub fn n_rf(&self) -> usize {
        self.topology.n_rf
    }

    pub fn n_sub(&self) -> usize {
        self.n_antennas() / self.topology.n_ttd
    }

    /// Output delays derived from the raw ones.
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        self.delays
            .raw
            .iter()
            .enumerate()
            .map(|(n, chain)| self.topology.chain_rule(n).cumulative(chain))
            .collect()
    }

    /// `N x Q N_RF` phase-shifter matrix including the `1/sqrt(N)` factor.
    pub fn analog_matrix(&self) -> CMat {
        let (n, q_len, n_sub) = (self.n_antennas(), self.topology.n_ttd, self.n_sub());
        let scale = 1.0 / (n as f64).sqrt();
        let mut a = CMat::zeros(n, q_len * self.n_rf());
        for (chain, coeffs) in self.ps.iter().enumerate() {
            for (i, &c) in coeffs.iter().enumerate() {
                a[(i, chain * q_len + i / n_sub)] = c * scale;
            }
        }
        a
    }

    pub fn ttd_matrix(&self, f: f64) -> CMat {
        ttd_phase_matrix(&self.cumulative(), f)
    }

    /// `A T(f)` (`N x N_RF`), see [`effective_analog`].
    pub fn effective_analog(
        &self,
        f: f64,
        cumulative: &[Vec<f64>],
        branch_gain: Option<&[Vec<f64>]>,
    ) -> CMat {
        effective_analog(&self.ps, cumulative, self.n_sub(), f, branch_gain)
    }

    /// Hybrid precoder `A T_m D_m` of subcarrier `m` at frequency `f`.
    pub fn precoder(&self, m: usize, f: f64) -> CMat {
        self.effective_analog(f, &self.cumulative(), None) * &self.digital[m]
    }

    /// `||A T_m D_m||_F^2` for every subcarrier.
    pub fn transmit_powers(&self, frequencies: &[f64]) -> Vec<f64> {
        let cum = self.cumulative();
        frequencies
            .iter()
            .zip(&self.digital)
            .map(|(&f, d)| fro_norm_sq(&(self.effective_analog(f, &cum, None) * d)))
            .collect()
    }
}

/// `A T(f)` (`N x N_RF`) built directly from its sparsity pattern.
/// `branch_gain[n][q]`, when given, scales the amplitude of TTD branch
/// `(n, q)`.
pub fn effective_analog(
    ps: &[Vec<C64>],
    cumulative: &[Vec<f64>],
    n_sub: usize,
    f: f64,
    branch_gain: Option<&[Vec<f64>]>,
) -> CMat {
    let n = ps.first().map_or(0, Vec::len);
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = CMat::zeros(n, ps.len());
    for (chain, coeffs) in ps.iter().enumerate() {
        for (q, block) in coeffs.chunks(n_sub).enumerate() {
            let mut w = cis(-2.0 * PI * f * cumulative[chain][q]) * scale;
            if let Some(g) = branch_gain {
                w *= g[chain][q];
            }
            for (i, &c) in block.iter().enumerate() {
                out[(q * n_sub + i, chain)] = c * w;
            }
        }
    }
    out
}
