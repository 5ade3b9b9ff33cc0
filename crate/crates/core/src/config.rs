//! System parameters shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

/// Array geometry, OFDM grid, power budget and TTD hardware limits.
///
/// All quantities are SI and linear; decibel values only appear in scenario
/// files and are converted at ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_rf: usize,
    pub n_users: usize,
    /// TTDs per RF chain (`Q`).
    pub n_ttd_per_chain: usize,
    pub n_subcarriers: usize,
    pub cp_length: usize,
    /// Hz.
    pub center_freq: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Per-subcarrier transmit power budget in watts.
    pub transmit_power: f64,
    /// W/Hz.
    pub noise_density: f64,
    /// Meters; half a carrier wavelength unless overridden.
    pub antenna_spacing: f64,
    pub speed_of_light: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    /// Medium absorption coefficient in 1/m, frequency independent.
    pub absorption_coeff: f64,
    /// Number of propagation paths per user.
    pub n_paths: usize,
    /// Whether `n_paths` counts the line-of-sight path.
    pub los_in_path_count: bool,
    /// Linear power factor applied to every scattered path.
    pub scatter_loss: f64,
    /// Maximum delay of a single TTD in seconds.
    pub t_max: f64,
    /// Insertion loss of one TTD (linear power factor, >= 1).
    pub eta_ttd: f64,
    /// Insertion loss of one power splitter (linear power factor, >= 1).
    pub eta_splitter: f64,
    /// Whether the splitters compensate the cumulative insertion loss.
    pub equalized: bool,
}

impl SystemConfig {
    /// Simulation parameters of the reference study: 512 antennas at
    /// 100 GHz with 10 GHz bandwidth, 32 TTDs per chain, four users.
    pub fn paper() -> Self {
        let center_freq = 100e9;
        Self {
            n_antennas: 512,
            n_rf: 4,
            n_users: 4,
            n_ttd_per_chain: 32,
            n_subcarriers: 10,
            cp_length: 4,
            center_freq,
            bandwidth: 10e9,
            transmit_power: dbm_to_watts(20.0),
            noise_density: dbm_to_watts(-174.0),
            antenna_spacing: SPEED_OF_LIGHT / (2.0 * center_freq),
            speed_of_light: SPEED_OF_LIGHT,
            tx_gain: db_to_linear(15.0),
            rx_gain: db_to_linear(5.0),
            absorption_coeff: 0.0,
            n_paths: 4,
            los_in_path_count: true,
            scatter_loss: db_to_linear(-15.0),
            t_max: 80e-12,
            eta_ttd: 1.0,
            eta_splitter: 1.0,
            equalized: true,
        }
    }

    /// Reduced-size preset: 128 antennas, 5 subcarriers, two users. Eight
    /// TTDs per chain keep the sub-array size at 16, so `N_sub d / c`
    /// stays at 80 ps.
    pub fn desk() -> Self {
        Self {
            n_antennas: 128,
            n_rf: 2,
            n_users: 2,
            n_ttd_per_chain: 8,
            n_subcarriers: 5,
            ..Self::paper()
        }
    }

    /// Same system with one RF chain serving one user.
    pub fn single_user(mut self) -> Self {
        self.n_rf = 1;
        self.n_users = 1;
        self
    }

    /// Sub-array size `N / Q`.
    pub fn n_sub(&self) -> usize {
        self.n_antennas / self.n_ttd_per_chain
    }

    /// Noise power on one subcarrier, `noise_density * B / M`.
    pub fn noise_power(&self) -> f64 {
        self.noise_density * self.bandwidth / self.n_subcarriers as f64
    }

    /// Combined per-stage insertion loss `eta_ttd * eta_splitter`.
    pub fn eta(&self) -> f64 {
        self.eta_ttd * self.eta_splitter
    }

    pub fn n_scatterers(&self) -> usize {
        if self.los_in_path_count {
            self.n_paths.saturating_sub(1)
        } else {
            self.n_paths
        }
    }

    /// Largest sub-array delay spread, `(N - N_sub) d / c`; a parallel TTD
    /// with at least this range behaves like an unbounded one.
    pub fn unbounded_delay(&self) -> f64 {
        (self.n_antennas - self.n_sub()) as f64 * self.antenna_spacing / self.speed_of_light
    }

    pub fn validate(&self) -> Result<()> {
        let positive_count = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::config(name, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive_count("n_antennas", self.n_antennas)?;
        positive_count("n_rf", self.n_rf)?;
        positive_count("n_users", self.n_users)?;
        positive_count("n_ttd_per_chain", self.n_ttd_per_chain)?;
        positive_count("n_subcarriers", self.n_subcarriers)?;
        if self.n_antennas % self.n_ttd_per_chain != 0 {
            return Err(Error::config(
                "n_ttd_per_chain",
                format!(
                    "{} does not divide n_antennas = {}",
                    self.n_ttd_per_chain, self.n_antennas
                ),
            ));
        }
        if self.n_ttd_per_chain % 2 != 0 {
            return Err(Error::config(
                "n_ttd_per_chain",
                format!("{} must be even (hybrid grouping)", self.n_ttd_per_chain),
            ));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        };
        positive("center_freq", self.center_freq)?;
        positive("bandwidth", self.bandwidth)?;
        positive("transmit_power", self.transmit_power)?;
        positive("noise_density", self.noise_density)?;
        positive("antenna_spacing", self.antenna_spacing)?;
        positive("speed_of_light", self.speed_of_light)?;
        positive("tx_gain", self.tx_gain)?;
        positive("rx_gain", self.rx_gain)?;
        positive("scatter_loss", self.scatter_loss)?;
        if self.center_freq <= self.bandwidth / 2.0 {
            return Err(Error::config(
                "bandwidth",
                "center_freq must exceed bandwidth / 2 so every subcarrier is positive",
            ));
        }
        if !(self.absorption_coeff.is_finite() && self.absorption_coeff >= 0.0) {
            return Err(Error::config("absorption_coeff", "must be finite and >= 0"));
        }
        if !(self.t_max >= 0.0) || self.t_max.is_nan() {
            return Err(Error::config("t_max", "must be >= 0"));
        }
        if !(self.eta_ttd >= 1.0 && self.eta_ttd.is_finite()) {
            return Err(Error::config(
                "eta_ttd",
                "insertion loss must be >= 1 (>= 0 dB)",
            ));
        }
        if !(self.eta_splitter >= 1.0 && self.eta_splitter.is_finite()) {
            return Err(Error::config(
                "eta_splitter",
                "insertion loss must be >= 1 (>= 0 dB)",
            ));
        }
        if self.los_in_path_count && self.n_paths == 0 {
            return Err(Error::config("n_paths", "must count at least the LoS path"));
        }
        Ok(())
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::paper()
    }
}
