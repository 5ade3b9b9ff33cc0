//! Python bindings for the `ttdbf` crate.
//!
//! Complex vectors cross the boundary as lists of Python `complex`; delays
//! are in seconds and angles in radians unless a name says otherwise.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ttdbf::channel::{self, random_channel};
use ttdbf::evaluation::{benchmark_full_digital, evaluate_ttd};
use ttdbf::scenario::Scenario;
use ttdbf::single_user::{self, classify_monotonicity, Region};
use ttdbf::solver::SolveOptions;
use ttdbf::topology::{self, TopologyKind};

fn py_err(e: ttdbf::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kind(tag: &str) -> PyResult<TopologyKind> {
    tag.parse().map_err(py_err)
}

/// System parameters; all fields SI and linear.
#[pyclass(name = "SystemConfig", module = "ttdbf_py", skip_from_py_object)]
#[derive(Clone)]
struct PySystemConfig {
    inner: ttdbf::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    /// 512 antennas, 32 TTDs per chain, 4 users at 100 GHz.
    #[staticmethod]
    fn paper() -> Self {
        Self {
            inner: ttdbf::SystemConfig::paper(),
        }
    }

    /// 128 antennas, 8 TTDs per chain, 2 users, 5 subcarriers.
    #[staticmethod]
    fn desk() -> Self {
        Self {
            inner: ttdbf::SystemConfig::desk(),
        }
    }

    /// Normalized system block of a scenario file.
    #[staticmethod]
    fn from_scenario(text: &str) -> PyResult<Self> {
        let sc = Scenario::parse(text, "<string>").map_err(py_err)?;
        Ok(Self { inner: sc.system })
    }

    fn single_user(&self) -> Self {
        Self {
            inner: self.inner.clone().single_user(),
        }
    }

    #[getter]
    fn n_antennas(&self) -> usize {
        self.inner.n_antennas
    }

    #[getter]
    fn n_rf(&self) -> usize {
        self.inner.n_rf
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users
    }

    #[getter]
    fn n_ttd_per_chain(&self) -> usize {
        self.inner.n_ttd_per_chain
    }

    #[getter]
    fn n_subcarriers(&self) -> usize {
        self.inner.n_subcarriers
    }

    #[getter]
    fn n_sub(&self) -> usize {
        self.inner.n_sub()
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.t_max
    }

    #[setter]
    fn set_t_max(&mut self, v: f64) -> PyResult<()> {
        let mut cfg = self.inner.clone();
        cfg.t_max = v;
        cfg.validate().map_err(py_err)?;
        self.inner = cfg;
        Ok(())
    }

    #[getter]
    fn transmit_power(&self) -> f64 {
        self.inner.transmit_power
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.inner.noise_power()
    }

    #[getter]
    fn antenna_spacing(&self) -> f64 {
        self.inner.antenna_spacing
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SystemConfig(N={}, N_RF={}, K={}, Q={}, M={}, t_max={:e})",
            c.n_antennas, c.n_rf, c.n_users, c.n_ttd_per_chain, c.n_subcarriers, c.t_max
        )
    }
}

#[pyfunction]
fn subcarrier_frequencies(cfg: &PySystemConfig) -> Vec<f64> {
    channel::subcarrier_frequencies(&cfg.inner)
}

#[pyfunction]
fn array_response(f: f64, distance: f64, angle: f64, cfg: &PySystemConfig) -> Vec<Complex64> {
    channel::array_response(f, &ttdbf::UserLocation::new(distance, angle), &cfg.inner)
        .iter()
        .copied()
        .collect()
}

#[pyfunction]
fn pathloss(f: f64, r: f64, cfg: &PySystemConfig) -> f64 {
    channel::pathloss(f, r, &cfg.inner)
}

/// Cumulative delays of one chain from its raw TTD delays.
#[pyfunction]
fn cumulative_delays(topology: &str, raw: Vec<f64>) -> PyResult<Vec<f64>> {
    let topo = topology::TtdTopology::new(kind(topology)?, 1, raw.len()).map_err(py_err)?;
    Ok(topo.chain_rule(0).cumulative(&raw))
}

/// `(coefficients, fractions, effective_loss)` of the equalizing splitters.
#[pyfunction]
fn splitter_equalized(q: usize, eta: f64) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let plan = topology::splitter_equalized(q, eta).map_err(py_err)?;
    Ok((plan.coefficients, plan.fractions, plan.effective_loss))
}

#[pyfunction]
fn cascade_output_powers(coefficients: Vec<f64>, eta: f64) -> Vec<f64> {
    topology::cascade_output_powers(&coefficients, eta)
}

/// `(J, region, peak)` with `peak` the 1-based turning index or `None`.
#[pyfunction]
fn classify(
    distance: f64,
    angle: f64,
    cfg: &PySystemConfig,
) -> PyResult<(f64, &'static str, Option<usize>)> {
    let r = classify_monotonicity(&ttdbf::UserLocation::new(distance, angle), &cfg.inner)
        .map_err(py_err)?;
    let peak = match r.region {
        Region::Unimodal { peak } => Some(peak),
        _ => None,
    };
    Ok((r.j, r.region.label(), peak))
}

/// Closed-form single-user design on a LoS channel.
#[pyfunction]
#[pyo3(signature = (distance, angle, topology, cfg, t_max=None))]
fn design_single_user<'py>(
    py: Python<'py>,
    distance: f64,
    angle: f64,
    topology: &str,
    cfg: &PySystemConfig,
    t_max: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = cfg.inner.clone().single_user();
    let loc = ttdbf::UserLocation::new(distance, angle);
    let t_max = t_max.unwrap_or(cfg.t_max);
    let design =
        single_user::design_single_user(&loc, kind(topology)?, t_max, &cfg).map_err(py_err)?;
    let ch = channel::generate_los_channel(&[loc], &cfg);
    let rate = single_user::single_user_rate(&ch, &design.beamformer, &cfg).map_err(py_err)?;
    let gains = single_user::array_gains(&loc, &design.beamformer, 0, &cfg);
    let n = cfg.n_antennas as f64;
    let out = PyDict::new(py);
    out.set_item("raw_delays", design.beamformer.delays.raw[0].clone())?;
    out.set_item(
        "cumulative_delays",
        design.beamformer.cumulative()[0].clone(),
    )?;
    out.set_item("infinite_delays", design.profile.delays.clone())?;
    out.set_item(
        "gain_fractions",
        gains.iter().map(|g| g / n).collect::<Vec<_>>(),
    )?;
    out.set_item("rate", rate.aggregate)?;
    Ok(out)
}

/// Penalty solver on a random multi-user channel drawn from `seed`.
#[pyfunction]
#[pyo3(signature = (topology, cfg, seed, r_min=5.0, r_max=15.0))]
fn solve_random<'py>(
    py: Python<'py>,
    topology: &str,
    cfg: &PySystemConfig,
    seed: u64,
    r_min: f64,
    r_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = kind(topology)?;
    let cfg = cfg.inner.clone();
    let (report, sol, full) = py
        .detach(|| {
            let ch = random_channel(&cfg, r_min, r_max, seed);
            let (report, sol) = evaluate_ttd(&ch, kind, &cfg, &SolveOptions::default())?;
            let full = benchmark_full_digital(&ch, &cfg)?;
            Ok::<_, ttdbf::Error>((report, sol, full))
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("spectral_efficiency", report.spectral_efficiency)?;
    out.set_item("full_digital", full.spectral_efficiency)?;
    out.set_item("converged", sol.diagnostics.converged)?;
    out.set_item("outer_iterations", sol.diagnostics.outer_iterations)?;
    out.set_item("final_xi", sol.diagnostics.final_xi)?;
    out.set_item("raw_delays", sol.beamformers.delays.raw.clone())?;
    Ok(out)
}

/// Parse scenario text and return its normalized TOML.
#[pyfunction]
fn normalize_scenario(text: &str) -> PyResult<String> {
    Scenario::parse(text, "<string>")
        .and_then(|s| s.to_toml())
        .map_err(py_err)
}

#[pymodule]
fn ttdbf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_function(wrap_pyfunction!(subcarrier_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(array_response, m)?)?;
    m.add_function(wrap_pyfunction!(pathloss, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_delays, m)?)?;
    m.add_function(wrap_pyfunction!(splitter_equalized, m)?)?;
    m.add_function(wrap_pyfunction!(cascade_output_powers, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(design_single_user, m)?)?;
    m.add_function(wrap_pyfunction!(solve_random, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_scenario, m)?)?;
    m.add(
        "TOPOLOGIES",
        TopologyKind::ALL
            .iter()
            .map(|k| k.tag())
            .collect::<Vec<_>>(),
    )?;
    Ok(())
}
