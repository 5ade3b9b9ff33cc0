//! Monte-Carlo campaigns over one swept quantity and their CSV export.
//!
//! Realizations run on the rayon pool; rows are assembled afterwards in
//! (grid point, realization, scheme) order, so the output depends only on
//! the scenario and the seed base.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{generate_los_channel, random_channel, NearFieldChannel, UserLocation};
use crate::config::{db_to_linear, dbm_to_watts, linear_to_db, SystemConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    benchmark_conventional, benchmark_full_digital, benchmark_optimal_ttd, spectral_efficiency,
    InsertionLoss, Scheme,
};
use crate::scenario::{check_grid, Axis, Scenario};
use crate::single_user::{classify_with_endfire_limit, design_single_user, Region};
use crate::solver::{penalty_solve, Solution, SolveOptions};
use crate::topology::{TopologyKind, TtdTopology};

/// A scenario bound to one sweep axis and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub scenario: Scenario,
    pub axis: Axis,
    /// Sweep values in the axis units (degrees, dBm, ps or dB).
    pub grid: Vec<f64>,
    pub trace: bool,
}

impl Campaign {
    /// Fails when the scenario names a different axis or its grid does
    /// not fit `axis`.
    pub fn new(scenario: Scenario, axis: Axis) -> Result<Self> {
        if let Some(other) = scenario.campaign.axis {
            if other != axis {
                return Err(Error::config(
                    "campaign.axis",
                    format!("scenario sweeps `{other}`, but a `{axis}` sweep was requested"),
                ));
            }
        }
        let grid = scenario
            .campaign
            .grid
            .clone()
            .unwrap_or_else(|| axis.default_grid());
        if grid.is_empty() {
            return Err(Error::config("campaign.grid", "sweep grid is empty"));
        }
        check_grid(axis, &grid).map_err(|reason| Error::config("campaign.grid", reason))?;
        Ok(Self {
            scenario,
            axis,
            grid,
            trace: false,
        })
    }

    /// System configuration at one grid value.
    pub fn config_at(&self, value: f64) -> SystemConfig {
        let mut cfg = self.scenario.system.clone();
        match self.axis {
            Axis::Angle => cfg = cfg.single_user(),
            Axis::TransmitPower => cfg.transmit_power = dbm_to_watts(value),
            Axis::TMax => cfg.t_max = value * 1e-12,
            Axis::InsertionLoss => {
                cfg.eta_ttd = db_to_linear(value);
                cfg.eta_splitter = 1.0;
            }
        }
        cfg
    }

    fn seeds(&self) -> Vec<u64> {
        let base = self.scenario.campaign.seed;
        (0..self.scenario.campaign.n_realizations as u64)
            .map(|i| base.wrapping_add(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRow {
    pub axis: String,
    pub axis_value: f64,
    pub seed: u64,
    pub scheme: String,
    pub topology: String,
    pub t_max_ps: f64,
    pub eta_db: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub rate_bps_hz: f64,
    pub converged: bool,
}

/// One inner sweep of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub axis_value: f64,
    pub seed: u64,
    pub scheme: String,
    pub topology: String,
    pub outer: usize,
    pub inner: usize,
    pub rho: f64,
    pub objective: f64,
    pub xi: f64,
}

/// Mean and standard error of the rate over realizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub axis_value: f64,
    pub scheme: String,
    pub topology: String,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub converged: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignResult {
    pub rows: Vec<CampaignRow>,
    pub trace: Vec<TraceRecord>,
}

impl CampaignResult {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    /// Cells keyed by (axis value, scheme, topology) in first-appearance
    /// order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut cells: Vec<(f64, &str, &str, Vec<f64>, usize)> = Vec::new();
        for r in &self.rows {
            let pos = cells
                .iter()
                .position(|c| c.0 == r.axis_value && c.1 == r.scheme && c.2 == r.topology);
            let idx = pos.unwrap_or_else(|| {
                cells.push((r.axis_value, &r.scheme, &r.topology, Vec::new(), 0));
                cells.len() - 1
            });
            cells[idx].3.push(r.rate_bps_hz);
            cells[idx].4 += r.converged as usize;
        }
        cells
            .into_iter()
            .map(|(axis_value, scheme, topology, v, converged)| {
                let (mean, stderr) = mean_stderr(&v);
                SummaryRow {
                    axis_value,
                    scheme: scheme.to_string(),
                    topology: topology.to_string(),
                    n: v.len(),
                    mean,
                    stderr,
                    converged,
                }
            })
            .collect()
    }

    pub fn write_rows(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.rows)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.summary())
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.trace)
    }
}

/// Sample mean and standard error (`s / sqrt(n)`, 0 for one sample).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

#[derive(Clone)]
struct Outcome {
    scheme: Scheme,
    topology: &'static str,
    cfg: SystemConfig,
    rate: f64,
    converged: bool,
}

struct Cell {
    outcomes: Vec<Outcome>,
    trace: Vec<TraceRecord>,
}

pub fn run_campaign(c: &Campaign) -> Result<CampaignResult> {
    let seeds = c.seeds();
    // per_seed[r][g]
    let per_seed: Vec<Vec<Cell>> = seeds
        .par_iter()
        .map(|&seed| match c.axis {
            Axis::Angle => c.grid.iter().map(|&v| angle_cell(c, v)).collect(),
            Axis::InsertionLoss => loss_cells(c, seed),
            Axis::TransmitPower | Axis::TMax => multi_user_cells(c, seed),
        })
        .collect::<Result<_>>()?;

    let mut result = CampaignResult::default();
    for (g, &value) in c.grid.iter().enumerate() {
        for (r, &seed) in seeds.iter().enumerate() {
            let cell = &per_seed[r][g];
            for o in &cell.outcomes {
                result.rows.push(CampaignRow {
                    axis: c.axis.tag().to_string(),
                    axis_value: value,
                    seed,
                    scheme: o.scheme.tag().to_string(),
                    topology: o.topology.to_string(),
                    t_max_ps: o.cfg.t_max * 1e12,
                    eta_db: linear_to_db(o.cfg.eta()),
                    k: o.cfg.n_users,
                    rate_bps_hz: o.rate,
                    converged: o.converged,
                });
            }
            result.trace.extend(cell.trace.iter().cloned());
        }
    }
    Ok(result)
}

fn options(c: &Campaign) -> SolveOptions {
    SolveOptions {
        hyper: c.scenario.solver.clone(),
        freeze_delays: false,
        trace: c.trace,
    }
}

fn channel_for(c: &Campaign, cfg: &SystemConfig, seed: u64) -> NearFieldChannel {
    random_channel(
        cfg,
        c.scenario.campaign.r_min,
        c.scenario.campaign.r_max,
        seed,
    )
}

fn record_trace(
    c: &Campaign,
    out: &mut Vec<TraceRecord>,
    value: f64,
    seed: u64,
    scheme: Scheme,
    topology: &str,
    sol: &Solution,
) {
    if !c.trace {
        return;
    }
    out.extend(sol.diagnostics.trace.iter().map(|t| TraceRecord {
        axis_value: value,
        seed,
        scheme: scheme.tag().to_string(),
        topology: topology.to_string(),
        outer: t.outer,
        inner: t.inner,
        rho: t.rho,
        objective: t.objective,
        xi: t.xi,
    }));
}

/// Reference schemes on one channel; the fully digital scheme has no
/// topology.
fn benchmarks(
    c: &Campaign,
    ch: &NearFieldChannel,
    cfg: &SystemConfig,
    value: f64,
    seed: u64,
) -> Result<Cell> {
    let mut cell = Cell {
        outcomes: Vec::new(),
        trace: Vec::new(),
    };
    if !c.scenario.campaign.benchmarks {
        return Ok(cell);
    }
    let opts = options(c);
    let fd = benchmark_full_digital(ch, cfg)?;
    cell.outcomes.push(Outcome {
        scheme: Scheme::FullDigital,
        topology: "none",
        cfg: cfg.clone(),
        rate: fd.spectral_efficiency,
        converged: true,
    });
    let (opt, sol) = benchmark_optimal_ttd(ch, cfg, &opts)?;
    record_trace(
        c,
        &mut cell.trace,
        value,
        seed,
        Scheme::OptimalTtd,
        "parallel",
        &sol,
    );
    cell.outcomes.push(Outcome {
        scheme: Scheme::OptimalTtd,
        topology: "parallel",
        cfg: cfg.clone(),
        rate: opt.spectral_efficiency,
        converged: sol.diagnostics.converged,
    });
    let (conv, sol) = benchmark_conventional(ch, cfg, &opts)?;
    record_trace(
        c,
        &mut cell.trace,
        value,
        seed,
        Scheme::Conventional,
        "parallel",
        &sol,
    );
    cell.outcomes.push(Outcome {
        scheme: Scheme::Conventional,
        topology: "parallel",
        cfg: cfg.clone(),
        rate: conv.spectral_efficiency,
        converged: sol.diagnostics.converged,
    });
    Ok(cell)
}

fn multi_user_cells(c: &Campaign, seed: u64) -> Result<Vec<Cell>> {
    let ch = channel_for(c, &c.scenario.system, seed);
    // delay bounds do not enter the reference schemes
    let shared = if c.axis == Axis::TMax {
        Some(benchmarks(
            c,
            &ch,
            &c.config_at(c.grid[0]),
            c.grid[0],
            seed,
        )?)
    } else {
        None
    };
    c.grid
        .par_iter()
        .map(|&value| {
            let cfg = c.config_at(value);
            let mut cell = Cell {
                outcomes: Vec::new(),
                trace: Vec::new(),
            };
            let opts = options(c);
            for &kind in &c.scenario.campaign.topologies {
                let topo = TtdTopology::new(kind, cfg.n_rf, cfg.n_ttd_per_chain)?;
                let sol = penalty_solve(&ch, &topo, &cfg, &opts)?;
                let scheme = if cfg.equalized {
                    Scheme::Ttd
                } else {
                    Scheme::TtdUnequalized
                };
                let rep = spectral_efficiency(
                    &sol.beamformers,
                    &ch,
                    &cfg,
                    Some(InsertionLoss::from_config(&cfg)),
                    scheme,
                )?;
                record_trace(c, &mut cell.trace, value, seed, scheme, kind.tag(), &sol);
                cell.outcomes.push(Outcome {
                    scheme,
                    topology: kind.tag(),
                    cfg: cfg.clone(),
                    rate: rep.spectral_efficiency,
                    converged: sol.diagnostics.converged,
                });
            }
            let bench = match &shared {
                Some(b) => Cell {
                    outcomes: b
                        .outcomes
                        .iter()
                        .map(|o| Outcome {
                            cfg: cfg.clone(),
                            ..o.clone()
                        })
                        .collect(),
                    trace: if value == c.grid[0] {
                        b.trace.clone()
                    } else {
                        Vec::new()
                    },
                },
                None => benchmarks(c, &ch, &cfg, value, seed)?,
            };
            cell.outcomes.extend(bench.outcomes);
            cell.trace.extend(bench.trace);
            Ok(cell)
        })
        .collect()
}

/// The design ignores insertion loss, so every topology is solved once
/// and rated at each loss value with and without equalization.
fn loss_cells(c: &Campaign, seed: u64) -> Result<Vec<Cell>> {
    let base = c.config_at(0.0);
    let ch = channel_for(c, &base, seed);
    let opts = options(c);
    let mut trace = Vec::new();
    let solutions = c
        .scenario
        .campaign
        .topologies
        .iter()
        .map(|&kind| {
            let topo = TtdTopology::new(kind, base.n_rf, base.n_ttd_per_chain)?;
            let sol = penalty_solve(&ch, &topo, &base, &opts)?;
            record_trace(
                c,
                &mut trace,
                c.grid[0],
                seed,
                Scheme::Ttd,
                kind.tag(),
                &sol,
            );
            Ok((kind, sol))
        })
        .collect::<Result<Vec<_>>>()?;
    let bench = benchmarks(c, &ch, &base, c.grid[0], seed)?;
    trace.extend(bench.trace);

    let mut cells = Vec::with_capacity(c.grid.len());
    for (g, &value) in c.grid.iter().enumerate() {
        let cfg = c.config_at(value);
        let mut outcomes = Vec::new();
        for (kind, sol) in &solutions {
            for (scheme, equalized) in [(Scheme::Ttd, true), (Scheme::TtdUnequalized, false)] {
                let loss = InsertionLoss {
                    eta: cfg.eta(),
                    equalized,
                };
                let rep = spectral_efficiency(&sol.beamformers, &ch, &cfg, Some(loss), scheme)?;
                outcomes.push(Outcome {
                    scheme,
                    topology: kind.tag(),
                    cfg: cfg.clone(),
                    rate: rep.spectral_efficiency,
                    converged: sol.diagnostics.converged,
                });
            }
        }
        outcomes.extend(bench.outcomes.iter().map(|o| Outcome {
            cfg: cfg.clone(),
            ..o.clone()
        }));
        cells.push(Cell {
            outcomes,
            trace: if g == 0 {
                std::mem::take(&mut trace)
            } else {
                Vec::new()
            },
        });
    }
    Ok(cells)
}

/// Single user at `user_distance` on a LoS channel with the closed-form
/// designs; the unbounded and zero-delay parallel designs stand in for the
/// reference schemes.
fn angle_cell(c: &Campaign, angle_deg: f64) -> Result<Cell> {
    let cfg = c.config_at(angle_deg);
    let loc = UserLocation::from_degrees(c.scenario.campaign.user_distance, angle_deg);
    let ch = generate_los_channel(&[loc], &cfg);
    let loss = Some(InsertionLoss::from_config(&cfg));
    let mut outcomes = Vec::new();
    for kind in single_chain(&c.scenario.campaign.topologies) {
        let bf = design_single_user(&loc, kind, cfg.t_max, &cfg)?.beamformer;
        let rep = spectral_efficiency(&bf, &ch, &cfg, loss, Scheme::Ttd)?;
        outcomes.push(Outcome {
            scheme: Scheme::Ttd,
            topology: kind.tag(),
            cfg: cfg.clone(),
            rate: rep.spectral_efficiency,
            converged: true,
        });
    }
    if c.scenario.campaign.benchmarks {
        let fd = benchmark_full_digital(&ch, &cfg)?;
        outcomes.push(Outcome {
            scheme: Scheme::FullDigital,
            topology: "none",
            cfg: cfg.clone(),
            rate: fd.spectral_efficiency,
            converged: true,
        });
        for (scheme, t_max) in [
            (Scheme::OptimalTtd, f64::INFINITY),
            (Scheme::Conventional, 0.0),
        ] {
            let bf = design_single_user(&loc, TopologyKind::Parallel, t_max, &cfg)?.beamformer;
            let rep = spectral_efficiency(&bf, &ch, &cfg, None, scheme)?;
            let mut shown = cfg.clone();
            shown.t_max = t_max;
            outcomes.push(Outcome {
                scheme,
                topology: "parallel",
                cfg: shown,
                rate: rep.spectral_efficiency,
                converged: true,
            });
        }
    }
    Ok(Cell {
        outcomes,
        trace: Vec::new(),
    })
}

/// Topologies that exist with a single RF chain (HFB needs two).
fn single_chain(kinds: &[TopologyKind]) -> impl Iterator<Item = TopologyKind> + '_ {
    kinds.iter().copied().filter(|k| *k != TopologyKind::Hfb)
}

/// One line of the single-user design table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignRow {
    pub theta_deg: f64,
    pub topology: String,
    pub rate_bps_hz: f64,
    pub min_gain_frac: f64,
    #[serde(rename = "J_over_Nsub_d")]
    pub j_over_nsub_d: f64,
    pub region: String,
}

/// Closed-form designs for one user at `distance` over `angles_deg`,
/// rated on the LoS channel with the configured insertion loss.
pub fn single_user_design_table(
    cfg: &SystemConfig,
    distance: f64,
    angles_deg: &[f64],
    topologies: &[TopologyKind],
) -> Result<Vec<DesignRow>> {
    let cfg = cfg.clone().single_user();
    let loss = Some(InsertionLoss::from_config(&cfg));
    let rows = angles_deg
        .par_iter()
        .map(|&deg| {
            let loc = UserLocation::from_degrees(distance, deg);
            let ch = generate_los_channel(&[loc], &cfg);
            let region = classify_with_endfire_limit(&loc, &cfg)?;
            let label = match region.region {
                Region::Unimodal { peak } => format!("unimodal:{peak}"),
                r => r.label().to_string(),
            };
            single_chain(topologies)
                .map(|kind| {
                    let bf = design_single_user(&loc, kind, cfg.t_max, &cfg)?.beamformer;
                    let rep = spectral_efficiency(&bf, &ch, &cfg, loss, Scheme::Ttd)?;
                    Ok(DesignRow {
                        theta_deg: deg,
                        topology: kind.tag().to_string(),
                        rate_bps_hz: rep.spectral_efficiency,
                        min_gain_frac: rep
                            .gain_fractions
                            .iter()
                            .cloned()
                            .fold(f64::INFINITY, f64::min),
                        j_over_nsub_d: region.j_normalized(&cfg),
                        region: label.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Preset;

    fn small(axis: Axis, grid: Vec<f64>) -> Campaign {
        let mut sc = Scenario::from_preset(Preset::Desk);
        sc.system.n_antennas = 32;
        sc.system.n_ttd_per_chain = 4;
        sc.system.n_subcarriers = 2;
        sc.solver.grid_size = 50;
        sc.campaign.n_realizations = 2;
        sc.campaign.seed = 11;
        sc.campaign.topologies = vec![TopologyKind::Parallel, TopologyKind::Hybrid];
        sc.campaign.grid = Some(grid);
        Campaign::new(sc, axis).unwrap()
    }

    #[test]
    fn row_order_and_columns() {
        let c = small(Axis::TMax, vec![10.0, 80.0]);
        let res = run_campaign(&c).unwrap();
        // 2 grid x 2 seeds x (2 topologies + 3 references)
        assert_eq!(res.rows.len(), 20);
        assert_eq!(res.rows[0].axis_value, 10.0);
        assert_eq!(res.rows[0].seed, 11);
        assert_eq!(res.rows[5].seed, 12);
        assert_eq!(res.rows[10].axis_value, 80.0);
        assert_eq!(res.rows[0].topology, "parallel");
        assert_eq!(res.rows[2].scheme, "full_digital");
        assert!((res.rows[10].t_max_ps - 80.0).abs() < 1e-9);
        let fd_a = &res.rows[2];
        let fd_b = &res.rows[12];
        assert_eq!(fd_a.rate_bps_hz, fd_b.rate_bps_hz);
    }

    #[test]
    fn loss_axis_has_both_splitter_modes() {
        let c = small(Axis::InsertionLoss, vec![0.0, 1.0]);
        let res = run_campaign(&c).unwrap();
        let at = |v: f64, scheme: &str, topo: &str| {
            res.rows
                .iter()
                .find(|r| {
                    r.axis_value == v && r.scheme == scheme && r.topology == topo && r.seed == 11
                })
                .unwrap()
                .rate_bps_hz
        };
        assert_eq!(at(0.0, "ttd", "hybrid"), at(0.0, "ttd_noeq", "hybrid"));
        assert!(at(1.0, "ttd_noeq", "hybrid") < at(1.0, "ttd", "hybrid"));
        assert!(at(1.0, "ttd", "hybrid") < at(0.0, "ttd", "hybrid"));
        assert_eq!(at(1.0, "ttd", "parallel"), at(0.0, "ttd", "parallel"));
    }

    #[test]
    fn axis_mismatch_rejected() {
        let mut sc = Scenario::from_preset(Preset::Desk);
        sc.campaign.axis = Some(Axis::Angle);
        assert!(Campaign::new(sc.clone(), Axis::TMax).is_err());
        sc.campaign.axis = None;
        sc.campaign.grid = Some(vec![-1.0]);
        assert!(Campaign::new(sc, Axis::TMax).is_err());
    }

    #[test]
    fn summary_statistics() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample sd sqrt(5/3), over sqrt(4)
        assert!((s - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn design_table_regions() {
        let cfg = SystemConfig::desk();
        let kinds = [TopologyKind::Parallel, TopologyKind::Hfb];
        let rows = single_user_design_table(&cfg, 10.0, &[0.0, 90.0, 180.0], &kinds).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].region, "increasing");
        assert_eq!(
            rows[1].region,
            format!("unimodal:{}", cfg.n_ttd_per_chain / 2 + 1)
        );
        assert_eq!(rows[2].region, "decreasing");
        assert!(rows[1].j_over_nsub_d.abs() < 1e-9);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.min_gain_frac)));
    }
}
