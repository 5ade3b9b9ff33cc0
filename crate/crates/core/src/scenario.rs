//! Scenario files: a TOML document with a `[system]` table, an optional
//! `[solver]` hyperparameter table and an optional `[campaign]` table.
//!
//! Quantities may be given in SI units under the field name of
//! [`SystemConfig`] or in decibels under an explicitly tagged name
//! (`transmit_power_dbm`, `tx_gain_db`, `t_max_ps`, ...). Giving both forms
//! of one quantity is an error. A top-level `preset = "paper" | "desk"`
//! supplies every field not set in the file; without a preset all
//! fields except the ones with physical defaults are required.
//!
//! ```toml
//! preset = "desk"
//!
//! [system]
//! t_max_ps = 80
//! eta_ttd_db = 0.3
//!
//! [campaign]
//! axis = "t_max"
//! grid = [10, 40, 80, 200, 500, 2480]
//! n_realizations = 20
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{db_to_linear, dbm_to_watts, SystemConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::solver::Hyperparams;
use crate::topology::TopologyKind;

/// Built-in parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

impl Preset {
    pub fn config(self) -> SystemConfig {
        match self {
            Preset::Paper => SystemConfig::paper(),
            Preset::Desk => SystemConfig::desk(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset `{other}` (expected paper or desk)"
            ))),
        }
    }
}

/// Swept quantity of a campaign. Grid values are in degrees, dBm,
/// picoseconds and dB respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Angle,
    TransmitPower,
    TMax,
    InsertionLoss,
}

impl Axis {
    pub fn tag(self) -> &'static str {
        match self {
            Axis::Angle => "angle",
            Axis::TransmitPower => "transmit_power",
            Axis::TMax => "t_max",
            Axis::InsertionLoss => "insertion_loss",
        }
    }

    /// Grid used when a scenario does not give one.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Axis::Angle => (0..=36).map(|i| 5.0 * i as f64).collect(),
            Axis::TransmitPower => vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            Axis::TMax => vec![10.0, 40.0, 80.0, 200.0, 500.0, 2480.0],
            Axis::InsertionLoss => vec![0.0, 0.3, 0.6, 0.9, 1.2],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Monte-Carlo settings. Every field has a default, so the table may be
/// omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSettings {
    pub axis: Option<Axis>,
    pub grid: Option<Vec<f64>>,
    pub n_realizations: usize,
    pub seed: u64,
    /// Users and scatterers are drawn in `r_min <= r <= r_max`, meters.
    pub r_min: f64,
    pub r_max: f64,
    /// User distance of the angle sweep, meters.
    pub user_distance: f64,
    pub topologies: Vec<TopologyKind>,
    /// Also run the full-digital, unbounded-TTD and phase-shifter-only
    /// reference schemes.
    pub benchmarks: bool,
    pub output: Option<PathBuf>,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        Self {
            axis: None,
            grid: None,
            n_realizations: 20,
            seed: 0,
            r_min: 5.0,
            r_max: 15.0,
            user_distance: 10.0,
            topologies: TopologyKind::ALL.to_vec(),
            benchmarks: true,
            output: None,
        }
    }
}

/// Parsed and normalized scenario; all values SI and linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub system: SystemConfig,
    pub solver: Hyperparams,
    pub campaign: CampaignSettings,
}

impl Scenario {
    pub fn from_preset(preset: Preset) -> Self {
        Self {
            system: preset.config(),
            solver: Hyperparams::default(),
            campaign: CampaignSettings::default(),
        }
    }

    /// Parse scenario text; `origin` names the source in diagnostics.
    pub fn parse(src: &str, origin: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(src).map_err(|e| {
            let message = match e.span() {
                Some(span) => format!("line {}: {}", line_of(src, span.start), e.message()),
                None => e.message().to_string(),
            };
            Error::Scenario {
                path: origin.to_string(),
                message,
            }
        })?;
        raw.normalize().map_err(|(section, field, reason)| {
            let at = locate(src, section, field).map_or(String::new(), |l| format!("line {l}: "));
            Error::Scenario {
                path: origin.to_string(),
                message: format!("{at}field `{section}.{field}`: {reason}"),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src, &path.display().to_string())
    }

    /// Normalized TOML: SI field names only, no preset. Parsing the output
    /// gives back an identical scenario.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| Error::InvalidArgument(format!("cannot serialize scenario: {e}")))
    }
}

type FieldError = (&'static str, &'static str, String);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: Option<Preset>,
    #[serde(default)]
    system: RawSystem,
    #[serde(default)]
    solver: Hyperparams,
    #[serde(default)]
    campaign: CampaignSettings,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n_antennas: Option<usize>,
    n_rf: Option<usize>,
    n_users: Option<usize>,
    n_ttd_per_chain: Option<usize>,
    n_subcarriers: Option<usize>,
    cp_length: Option<usize>,
    center_freq: Option<f64>,
    bandwidth: Option<f64>,
    transmit_power: Option<f64>,
    transmit_power_dbm: Option<f64>,
    noise_density: Option<f64>,
    noise_density_dbm_hz: Option<f64>,
    antenna_spacing: Option<f64>,
    speed_of_light: Option<f64>,
    tx_gain: Option<f64>,
    tx_gain_db: Option<f64>,
    rx_gain: Option<f64>,
    rx_gain_db: Option<f64>,
    absorption_coeff: Option<f64>,
    n_paths: Option<usize>,
    los_in_path_count: Option<bool>,
    scatter_loss: Option<f64>,
    scatter_loss_db: Option<f64>,
    t_max: Option<f64>,
    t_max_ps: Option<f64>,
    eta_ttd: Option<f64>,
    eta_ttd_db: Option<f64>,
    eta_splitter: Option<f64>,
    eta_splitter_db: Option<f64>,
    equalized: Option<bool>,
}

fn pick<T>(
    name: &'static str,
    value: Option<T>,
    base: Option<T>,
) -> std::result::Result<T, FieldError> {
    value
        .or(base)
        .ok_or_else(|| ("system", name, "missing (no preset given)".to_string()))
}

/// SI value, or the converted tagged value; both at once is an error.
fn either(
    si_name: &'static str,
    si: Option<f64>,
    tagged_name: &'static str,
    tagged: Option<f64>,
    convert: fn(f64) -> f64,
) -> std::result::Result<Option<f64>, FieldError> {
    match (si, tagged) {
        (Some(_), Some(_)) => Err((
            "system",
            tagged_name,
            format!("conflicts with `{si_name}`; give one of the two"),
        )),
        (Some(v), None) => Ok(Some(v)),
        (None, Some(v)) if v.is_finite() => Ok(Some(convert(v))),
        (None, Some(v)) => Err(("system", tagged_name, format!("must be finite, got {v}"))),
        (None, None) => Ok(None),
    }
}

const SYSTEM_FIELDS: [&str; 21] = [
    "n_antennas",
    "n_rf",
    "n_users",
    "n_ttd_per_chain",
    "n_subcarriers",
    "cp_length",
    "center_freq",
    "bandwidth",
    "transmit_power",
    "noise_density",
    "antenna_spacing",
    "speed_of_light",
    "tx_gain",
    "rx_gain",
    "absorption_coeff",
    "n_paths",
    "los_in_path_count",
    "scatter_loss",
    "t_max",
    "eta_ttd",
    "eta_splitter",
];

impl RawScenario {
    fn normalize(self) -> std::result::Result<Scenario, FieldError> {
        let base = self.preset.map(Preset::config);
        let b = base.as_ref();
        let s = self.system;
        let transmit_power = either(
            "transmit_power",
            s.transmit_power,
            "transmit_power_dbm",
            s.transmit_power_dbm,
            dbm_to_watts,
        )?;
        let noise_density = either(
            "noise_density",
            s.noise_density,
            "noise_density_dbm_hz",
            s.noise_density_dbm_hz,
            dbm_to_watts,
        )?;
        let tx_gain = either(
            "tx_gain",
            s.tx_gain,
            "tx_gain_db",
            s.tx_gain_db,
            db_to_linear,
        )?;
        let rx_gain = either(
            "rx_gain",
            s.rx_gain,
            "rx_gain_db",
            s.rx_gain_db,
            db_to_linear,
        )?;
        let scatter_loss = either(
            "scatter_loss",
            s.scatter_loss,
            "scatter_loss_db",
            s.scatter_loss_db,
            db_to_linear,
        )?;
        let t_max = either("t_max", s.t_max, "t_max_ps", s.t_max_ps, |ps| ps * 1e-12)?;
        let eta_ttd = either(
            "eta_ttd",
            s.eta_ttd,
            "eta_ttd_db",
            s.eta_ttd_db,
            db_to_linear,
        )?;
        let eta_splitter = either(
            "eta_splitter",
            s.eta_splitter,
            "eta_splitter_db",
            s.eta_splitter_db,
            db_to_linear,
        )?;

        let center_freq = pick("center_freq", s.center_freq, b.map(|c| c.center_freq))?;
        let speed_of_light = s
            .speed_of_light
            .or(b.map(|c| c.speed_of_light))
            .unwrap_or(SPEED_OF_LIGHT);
        // half wavelength of the final carrier unless given explicitly
        let antenna_spacing = s
            .antenna_spacing
            .unwrap_or(speed_of_light / (2.0 * center_freq));
        let system = SystemConfig {
            n_antennas: pick("n_antennas", s.n_antennas, b.map(|c| c.n_antennas))?,
            n_rf: pick("n_rf", s.n_rf, b.map(|c| c.n_rf))?,
            n_users: pick("n_users", s.n_users, b.map(|c| c.n_users))?,
            n_ttd_per_chain: pick(
                "n_ttd_per_chain",
                s.n_ttd_per_chain,
                b.map(|c| c.n_ttd_per_chain),
            )?,
            n_subcarriers: pick("n_subcarriers", s.n_subcarriers, b.map(|c| c.n_subcarriers))?,
            cp_length: pick("cp_length", s.cp_length, b.map(|c| c.cp_length))?,
            center_freq,
            bandwidth: pick("bandwidth", s.bandwidth, b.map(|c| c.bandwidth))?,
            transmit_power: pick(
                "transmit_power",
                transmit_power,
                b.map(|c| c.transmit_power),
            )?,
            noise_density: pick("noise_density", noise_density, b.map(|c| c.noise_density))?,
            antenna_spacing,
            speed_of_light,
            tx_gain: pick("tx_gain", tx_gain, b.map(|c| c.tx_gain))?,
            rx_gain: pick("rx_gain", rx_gain, b.map(|c| c.rx_gain))?,
            absorption_coeff: s
                .absorption_coeff
                .or(b.map(|c| c.absorption_coeff))
                .unwrap_or(0.0),
            n_paths: pick("n_paths", s.n_paths, b.map(|c| c.n_paths))?,
            los_in_path_count: s
                .los_in_path_count
                .or(b.map(|c| c.los_in_path_count))
                .unwrap_or(true),
            scatter_loss: pick("scatter_loss", scatter_loss, b.map(|c| c.scatter_loss))?,
            t_max: pick("t_max", t_max, b.map(|c| c.t_max))?,
            eta_ttd: eta_ttd.or(b.map(|c| c.eta_ttd)).unwrap_or(1.0),
            eta_splitter: eta_splitter.or(b.map(|c| c.eta_splitter)).unwrap_or(1.0),
            equalized: s.equalized.or(b.map(|c| c.equalized)).unwrap_or(true),
        };
        if !system.t_max.is_finite() {
            return Err(("system", "t_max", "must be finite".into()));
        }
        system.validate().map_err(|e| match e {
            Error::InvalidConfig { field, reason } => {
                let name = SYSTEM_FIELDS
                    .iter()
                    .find(|f| **f == field)
                    .copied()
                    .unwrap_or("?");
                ("system", name, reason)
            }
            other => ("system", "?", other.to_string()),
        })?;
        self.solver.validate().map_err(|e| match e {
            Error::InvalidConfig { field, reason } => ("solver", hyper_field(&field), reason),
            other => ("solver", "?", other.to_string()),
        })?;
        validate_campaign(&self.campaign)?;
        Ok(Scenario {
            system,
            solver: self.solver,
            campaign: self.campaign,
        })
    }
}

fn hyper_field(name: &str) -> &'static str {
    const NAMES: [&str; 10] = [
        "rho_init",
        "rho_factor",
        "inner_tol",
        "xi_tol",
        "grid_size",
        "outer_max",
        "inner_max",
        "cd_tol",
        "cd_max_sweeps",
        "digital_rule",
    ];
    NAMES.iter().find(|n| **n == name).copied().unwrap_or("?")
}

fn validate_campaign(c: &CampaignSettings) -> std::result::Result<(), FieldError> {
    if let Some(grid) = &c.grid {
        if grid.is_empty() {
            return Err(("campaign", "grid", "sweep grid is empty".into()));
        }
        if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
            return Err(("campaign", "grid", format!("non-finite grid value {v}")));
        }
        if let Some(axis) = c.axis {
            check_grid(axis, grid).map_err(|reason| ("campaign", "grid", reason))?;
        }
    }
    if c.n_realizations == 0 {
        return Err(("campaign", "n_realizations", "must be at least 1".into()));
    }
    if !(c.r_min > 0.0 && c.r_max >= c.r_min && c.r_max.is_finite()) {
        return Err(("campaign", "r_max", "need 0 < r_min <= r_max".into()));
    }
    if !(c.user_distance > 0.0 && c.user_distance.is_finite()) {
        return Err(("campaign", "user_distance", "must be finite and > 0".into()));
    }
    if c.topologies.is_empty() {
        return Err((
            "campaign",
            "topologies",
            "at least one topology is needed".into(),
        ));
    }
    Ok(())
}

/// Axis-specific range checks on sweep values.
pub fn check_grid(axis: Axis, grid: &[f64]) -> std::result::Result<(), String> {
    let bad = match axis {
        Axis::Angle => grid.iter().find(|v| !(0.0..=180.0).contains(*v)),
        Axis::TMax | Axis::InsertionLoss => grid.iter().find(|v| **v < 0.0),
        Axis::TransmitPower => None,
    };
    match bad {
        Some(v) => Err(format!("value {v} is out of range for the {axis} axis")),
        None => Ok(()),
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// 1-based line of `key` inside `[section]`, if the file sets it.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current != section {
            continue;
        }
        if let Some((k, _)) = t.split_once('=') {
            let k = k.trim();
            if k == key || k.starts_with(&format!("{key}_")) {
                return Some(i + 1);
            }
        }
    }
    None
}
