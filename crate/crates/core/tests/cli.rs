use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn pvdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvdyn")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CROUCH: &str = "--q0=0,0,0.55,1,0,0,0,0,0.6,-1.2,0,0.6,-1.2,0,0.6,-1.2,0,0.6,-1.2";

#[test]
fn unconstrained_pendulum_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = pvdyn(&["simulate", "--model", path(&data("pendulum.json")), "--q0", "0.3,0,0", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,q0,q1,q2,qd0,qd1,qd2,qdd0,qdd1,qdd2,con_pos_err,con_vel_err,energy");
    assert_eq!(lines.count(), 1001);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1001 samples"));
}

#[test]
fn soft_quadruped_keeps_its_feet() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = pvdyn(&[
        "simulate",
        "--model",
        path(&data("quadruped.json")),
        "--constraints",
        path(&data("quadruped_feet.json")),
        "--solver",
        "pv-soft:1e6",
        CROUCH,
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "con_pos_err").unwrap();
    let last: f64 = text.lines().last().unwrap().split(',').nth(col).unwrap().parse().unwrap();
    assert!(last < 1e-3, "{last}");
}

#[test]
fn simulation_output_is_deterministic() {
    let run = || {
        let o = pvdyn(&["simulate", "--model", path(&data("quadruped.json")), "--constraints", path(&data("quadruped_feet.json")), CROUCH, "--duration", "0.1"]);
        assert_eq!(o.status.code(), Some(0));
        o.stdout
    };
    assert_eq!(run(), run());
}

#[test]
fn missing_constraint_file_is_a_usage_error() {
    let o = pvdyn(&["simulate", "--model", path(&data("pendulum.json")), "--constraints", "/nonexistent/pin.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/pin.json"));
}

#[test]
fn malformed_model_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"links\": [\n    {\"name\": \"a\",, }\n  ]\n}\n").unwrap();
    let o = pvdyn(&["simulate", "--model", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(pvdyn(&["bench", "--family", "star"]).status.code(), Some(2));
    assert_eq!(pvdyn(&["bench", "--sizes", "64,32"]).status.code(), Some(2));
    assert_eq!(pvdyn(&["verify", "--count", "0"]).status.code(), Some(2));
    assert_eq!(pvdyn(&["simulate", "--model", path(&data("pendulum.json")), "--baumgarte-T", "soon"]).status.code(), Some(2));
    assert_eq!(pvdyn(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_catches_a_sign_fault() {
    let ok = pvdyn(&["verify", "--count", "5"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = pvdyn(&["verify", "--count", "5", "--inject-fault", "sign"]);
    assert_eq!(bad.status.code(), Some(1));
    let report = String::from_utf8_lossy(&bad.stdout);
    assert!(report.lines().any(|l| l.starts_with("FAIL pv_matches_oracle")), "{report}");
}

#[test]
fn verify_accepts_a_user_model() {
    let o = pvdyn(&["verify", "--count", "3", "--model", path(&data("pendulum.json")), "--constraints", path(&data("pendulum_rows.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn osim_prints_a_symmetric_matrix() {
    let o = pvdyn(&["osim", "--model", path(&data("pendulum.json")), "--constraints", path(&data("pendulum_rows.json")), "--q=0.4,-0.9,0.7"]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<Vec<f64>> = String::from_utf8_lossy(&o.stdout).lines().map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], rows[1][0]);
    assert!(rows[0][0] > 0.0 && rows[1][1] > 0.0);
}

#[test]
fn bench_writes_verified_rows() {
    let o = pvdyn(&["bench", "--family", "chain", "--sizes", "8,16", "--solvers", "pv,oracle", "--reps", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().next().unwrap(), "scenario,n,m,d,solver,median_ns,p10_ns,p90_ns,iterations,checksum");
    assert_eq!(text.lines().count(), 5);
    let checksums: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    // Same instance, same verified answer.
    assert_eq!(checksums[0], checksums[1]);
    assert_eq!(checksums[2], checksums[3]);
}
