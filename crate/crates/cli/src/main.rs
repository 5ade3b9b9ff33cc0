//! `ttdbf` command-line front end: Monte-Carlo sweeps, the single-user
//! design table and scenario validation.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 invalid scenario or
//! arguments, 3 at least one solver run did not converge.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ttdbf::campaign::{
    run_campaign, single_user_design_table, write_csv, Campaign, CampaignResult,
};
use ttdbf::scenario::{Axis, Preset, Scenario};
use ttdbf::Error;

#[derive(Parser)]
#[command(
    name = "ttdbf",
    version,
    about = "Near-field hybrid beamforming with TTD networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single user at a fixed distance, closed-form designs over angle.
    SweepAngle(Common),
    /// Multi-user sum rate over transmit power (dBm).
    SweepPower(Common),
    /// Multi-user sum rate over the TTD range (ps).
    SweepTmax(Common),
    /// Multi-user sum rate over per-stage insertion loss (dB).
    SweepLoss(Common),
    /// Per-angle closed-form design table with monotonicity regions.
    SingleUserDesign(Common),
    /// Parse a scenario and print its normalized form.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in parameter set used when no scenario is given.
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    preset: PresetArg,
    /// Seed of the first realization.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of channel realizations.
    #[arg(long)]
    realizations: Option<usize>,
    /// Output CSV; the summary and trace go next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-sweep solver trace.
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }
    }
}

enum Failure {
    Validation(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } | Error::Scenario { .. } | Error::InvalidArgument(_) => {
                Failure::Validation(e.to_string())
            }
            other => Failure::Other(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let mut sc = match &common.scenario {
        Some(path) => Scenario::load(path).map_err(|e| match e {
            Error::Io(io) => Failure::Validation(format!("{}: {io}", path.display())),
            other => other.into(),
        })?,
        None => Scenario::from_preset(common.preset.into()),
    };
    if let Some(seed) = common.seed {
        sc.campaign.seed = seed;
    }
    if let Some(n) = common.realizations {
        if n == 0 {
            return Err(Failure::Validation(
                "--realizations must be at least 1".into(),
            ));
        }
        sc.campaign.n_realizations = n;
    }
    Ok(sc)
}

fn output_path(common: &Common, sc: &Scenario, default: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| sc.campaign.output.clone())
        .unwrap_or_else(|| PathBuf::from(default))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or("out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    let (common, axis) = match command {
        Command::Validate(common) => {
            let sc = load(&common)?;
            print!("{}", sc.to_toml()?);
            return Ok(ExitCode::SUCCESS);
        }
        Command::SingleUserDesign(common) => return design(&common),
        Command::SweepAngle(c) => (c, Axis::Angle),
        Command::SweepPower(c) => (c, Axis::TransmitPower),
        Command::SweepTmax(c) => (c, Axis::TMax),
        Command::SweepLoss(c) => (c, Axis::InsertionLoss),
    };
    let sc = load(&common)?;
    let out = output_path(&common, &sc, &format!("sweep_{}.csv", axis.tag()));
    let mut campaign = Campaign::new(sc, axis)?;
    campaign.trace = common.trace;
    log::info!(
        "{} sweep: {} points x {} realizations",
        axis,
        campaign.grid.len(),
        campaign.scenario.campaign.n_realizations
    );
    let result = run_campaign(&campaign)?;
    write_outputs(&result, &out, common.trace)?;
    print_summary(&result);
    if result.all_converged() {
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = result.rows.iter().filter(|r| !r.converged).count();
        eprintln!("warning: {failed} solver runs did not reach the constraint tolerance");
        Ok(ExitCode::from(3))
    }
}

fn write_outputs(result: &CampaignResult, out: &Path, trace: bool) -> Result<(), Failure> {
    result.write_rows(out)?;
    result.write_summary(&sibling(out, "summary"))?;
    if trace {
        result.write_trace(&sibling(out, "trace"))?;
    }
    Ok(())
}

fn print_summary(result: &CampaignResult) {
    println!(
        "{:>10}  {:<13} {:<10} {:>9} {:>8}",
        "value", "scheme", "topology", "mean", "stderr"
    );
    for s in result.summary() {
        println!(
            "{:>10.3}  {:<13} {:<10} {:>9.4} {:>8.4}",
            s.axis_value, s.scheme, s.topology, s.mean, s.stderr
        );
    }
}

fn design(common: &Common) -> Result<ExitCode, Failure> {
    let sc = load(common)?;
    if let Some(axis) = sc.campaign.axis.filter(|a| *a != Axis::Angle) {
        return Err(Failure::Validation(format!(
            "the design table sweeps angle, scenario sweeps `{axis}`"
        )));
    }
    let angles = sc
        .campaign
        .grid
        .clone()
        .unwrap_or_else(|| Axis::Angle.default_grid());
    let rows = single_user_design_table(
        &sc.system,
        sc.campaign.user_distance,
        &angles,
        &sc.campaign.topologies,
    )?;
    let out = output_path(common, &sc, "single_user_design.csv");
    write_csv(&out, &rows)?;
    println!(
        "{:>7}  {:<9} {:>9} {:>9} {:>9}  region",
        "theta", "topology", "rate", "min_gain", "J/Nsub_d"
    );
    for r in &rows {
        println!(
            "{:>7.1}  {:<9} {:>9.4} {:>9.4} {:>9.3}  {}",
            r.theta_deg, r.topology, r.rate_bps_hz, r.min_gain_frac, r.j_over_nsub_d, r.region
        );
    }
    Ok(ExitCode::SUCCESS)
}
