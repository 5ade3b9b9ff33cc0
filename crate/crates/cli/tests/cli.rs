use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
preset = "desk"

[system]
n_antennas = 32
n_ttd_per_chain = 4
n_subcarriers = 2

[solver]
grid_size = 50

[campaign]
n_realizations = 1
seed = 3
topologies = ["parallel", "hybrid"]
grid = [80]
"#;

fn ttdbf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttdbf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn validate_prints_normalized_form() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", TINY);
    let out = ttdbf(&["validate", "--scenario", &sc], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("n_antennas = 32"));
    assert!(text.contains("n_rf = 2"));
    // the normalized form is itself a valid scenario
    let again = write(dir.path(), "n.toml", &text);
    let out = ttdbf(&["validate", "--scenario", &again], dir.path());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn invalid_scenarios_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            TINY.replace("n_ttd_per_chain = 4", "n_ttd_per_chain = 5"),
            "n_ttd_per_chain",
        ),
        (TINY.replace("grid = [80]", "grid = []"), "grid"),
        (format!("{TINY}colour = 1\n"), "colour"),
    ];
    for (i, (body, field)) in cases.iter().enumerate() {
        let sc = write(dir.path(), &format!("bad{i}.toml"), body);
        for cmd in ["validate", "sweep-tmax"] {
            let out = ttdbf(&[cmd, "--scenario", &sc], dir.path());
            assert_eq!(out.status.code(), Some(2), "{cmd} {field}");
            let err = String::from_utf8(out.stderr).unwrap();
            assert!(err.contains(field) && err.contains("line"), "{err}");
        }
    }
    let out = ttdbf(&["validate", "--scenario", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn axis_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "s.toml",
        &TINY.replace("[campaign]", "[campaign]\naxis = \"angle\""),
    );
    let out = ttdbf(&["sweep-power", "--scenario", &sc], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", TINY);
    let mut bodies = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = ttdbf(
            &["sweep-tmax", "--scenario", &sc, "--out", name, "--trace"],
            dir.path(),
        );
        assert!(matches!(out.status.code(), Some(0) | Some(3)), "{out:?}");
        bodies.push(fs::read(dir.path().join(name)).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    let text = String::from_utf8(bodies[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "axis,axis_value,seed,scheme,topology,t_max_ps,eta_db,K,rate_bps_hz,converged"
    );
    // two topologies and three reference schemes
    assert_eq!(lines.count(), 5);
    let summary = fs::read_to_string(dir.path().join("a.summary.csv")).unwrap();
    assert!(summary.starts_with("axis_value,scheme,topology,n,mean,stderr,converged"));
    let trace = fs::read_to_string(dir.path().join("a.trace.csv")).unwrap();
    assert!(trace.starts_with("axis_value,seed,scheme,topology,outer,inner,rho,objective,xi"));
    assert!(trace.lines().count() > 1);
}

#[test]
fn seed_flag_changes_realization() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", TINY);
    ttdbf(
        &["sweep-tmax", "--scenario", &sc, "--out", "a.csv"],
        dir.path(),
    );
    ttdbf(
        &[
            "sweep-tmax",
            "--scenario",
            &sc,
            "--out",
            "b.csv",
            "--seed",
            "4",
        ],
        dir.path(),
    );
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(a.contains(",3,") && b.contains(",4,"));
    assert_ne!(a, b);
}

#[test]
fn non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = TINY.replace(
        "grid_size = 50",
        "grid_size = 50\nouter_max = 1\nrho_factor = 0.9",
    );
    let sc = write(dir.path(), "s.toml", &body);
    let out = ttdbf(
        &["sweep-tmax", "--scenario", &sc, "--out", "x.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let text = fs::read_to_string(dir.path().join("x.csv")).unwrap();
    assert!(text.contains(",false"));
}

#[test]
fn loss_and_power_sweeps_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = TINY.replace("grid = [80]", "grid = [0.0, 0.6]");
    let sc = write(dir.path(), "s.toml", &body);
    let out = ttdbf(
        &["sweep-loss", "--scenario", &sc, "--out", "l.csv"],
        dir.path(),
    );
    assert!(matches!(out.status.code(), Some(0) | Some(3)));
    let text = fs::read_to_string(dir.path().join("l.csv")).unwrap();
    assert!(text.contains("ttd_noeq"));
    let body = TINY.replace("grid = [80]", "grid = [10.0]");
    let sc = write(dir.path(), "p.toml", &body);
    let out = ttdbf(
        &["sweep-power", "--scenario", &sc, "--out", "p.csv"],
        dir.path(),
    );
    assert!(matches!(out.status.code(), Some(0) | Some(3)));
    assert!(fs::read_to_string(dir.path().join("p.csv"))
        .unwrap()
        .contains("transmit_power,10.0"));
}

#[test]
fn angle_sweep_and_design_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ttdbf(
        &[
            "sweep-angle",
            "--preset",
            "desk",
            "--realizations",
            "1",
            "--out",
            "a.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    // 37 angles x (4 single-chain topologies + 3 references)
    assert_eq!(text.lines().count(), 1 + 37 * 7);

    let out = ttdbf(&["single-user-design", "--out", "d.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(text.starts_with("theta_deg,topology,rate_bps_hz,min_gain_frac,J_over_Nsub_d,region"));
    assert!(text.contains("90.0,hybrid,"));
}
