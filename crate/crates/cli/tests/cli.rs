//! End-to-end tests of the `magatom` binary: exit codes, artifact layout,
//! and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn magatom() -> Command {
    Command::new(env!("CARGO_BIN_EXE_magatom"))
}

fn repo_scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

const SMALL_ENSEMBLE: &str = r#"
seed = 5
softening = 0.05

[constants]
m_p = 4.0
m_e = 1.0
e = 1.0
c = 10.0

[field]
kind = "stern-gerlach"
h = 2.0
g = 0.5

[ensemble]
n-atoms = 16
beam-velocity = [2.0, 0.0, 0.0]
position-jitter = [0.02, 0.02, 0.02]
write-endpoints = true

[ensemble.internal]
kind = "linear-oscillation"
amplitude = 1.0
axis = [0.0, 1.0, 1.0]

[integrator]
steps-per-period = 2000.0
periods = 3.0

[output]
dir = "unused"
"#;

#[test]
fn compare_on_uniform_scenario_passes_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let status = magatom()
        .arg("compare")
        .arg(repo_scenario("uniform_compare.toml"))
        .arg("--out-dir")
        .arg(&out)
        // Trim the run for test speed; the full ten periods run in the
        // acceptance suite.
        .args(["--set", "integrator.periods=3.0"])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "compare failed: {}",
        stderr_of(&status)
    );
    let report = fs::read_to_string(out.join("compare_report.toml")).unwrap();
    assert!(report.contains("passed = true"), "report: {report}");
    assert!(out.join("trajectory_reduced.csv").exists());
    assert!(out.join("trajectory_direct.csv").exists());
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"compare\""));
    assert!(manifest.contains("[scenario]"));
}

#[test]
fn compare_over_threshold_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let status = magatom()
        .arg("compare")
        .arg(repo_scenario("uniform_compare.toml"))
        .arg("--out-dir")
        .arg(&out)
        .args(["--set", "integrator.periods=2.0"])
        .args(["--set", "compare.rms-threshold=1e-20"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "{}", stderr_of(&status));
    assert!(stderr_of(&status).contains("threshold"));
    // The deviation report itself is a valid (marked) artifact.
    let report = fs::read_to_string(out.join("compare_report.toml")).unwrap();
    assert!(report.contains("passed = false"));
}

#[test]
fn simulate_direct_writes_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let status = magatom()
        .arg("simulate-direct")
        .arg(repo_scenario("uniform_compare.toml"))
        .arg("--out-dir")
        .arg(&out)
        .args(["--set", "integrator.periods=1.0"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", stderr_of(&status));
    assert!(out.join("trajectory.csv").exists());
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"simulate-direct\""));
}

#[test]
fn ensemble_reports_are_byte_identical_for_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL_ENSEMBLE);
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = magatom()
            .arg("ensemble")
            .arg(&scenario)
            .arg("--out-dir")
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "ensemble failed: {}",
            stderr_of(&status)
        );
        reports.push(fs::read(out.join("ensemble_report.toml")).unwrap());
        assert!(out.join("endpoints.csv").exists());
    }
    assert_eq!(reports[0], reports[1], "reports differ between runs");
}

#[test]
fn different_seed_changes_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL_ENSEMBLE);
    let mut reports = Vec::new();
    for (run, seed) in [("a", "5"), ("b", "6")] {
        let out = tmp.path().join(run);
        let status = magatom()
            .arg("ensemble")
            .arg(&scenario)
            .arg("--out-dir")
            .arg(&out)
            .arg("--seed")
            .arg(seed)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", stderr_of(&status));
        reports.push(fs::read(out.join("ensemble_report.toml")).unwrap());
    }
    assert_ne!(reports[0], reports[1]);
}

#[test]
fn fieldmap_inside_validity_region_exits_2_and_cleans_up() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("map");
    let status = magatom()
        .arg("fieldmap")
        .arg(repo_scenario("fieldmap.toml"))
        .arg("--out-dir")
        .arg(&out)
        // Move the observation plane through the atom.
        .args(["--set", "fieldmap.center=[0.0, 0.0, 0.0]"])
        .args(["--set", "fieldmap.extent-u=2.0"])
        .args(["--set", "fieldmap.extent-v=2.0"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "{}", stderr_of(&status));
    assert!(
        stderr_of(&status).contains("validity"),
        "stderr: {}",
        stderr_of(&status)
    );
    // Partial outputs are removed on failure.
    assert!(!out.join("fieldmap.csv").exists());
    assert!(!out.join("manifest.toml").exists());
}

#[test]
fn fieldmap_outside_validity_region_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("map");
    let status = magatom()
        .arg("fieldmap")
        .arg(repo_scenario("fieldmap.toml"))
        .arg("--out-dir")
        .arg(&out)
        .args(["--set", "fieldmap.n-u=4"])
        .args(["--set", "fieldmap.n-v=4"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", stderr_of(&status));
    let map = fs::read_to_string(out.join("fieldmap.csv")).unwrap();
    let mut lines = map.lines();
    assert!(lines.next().unwrap().starts_with("# magatom far-field map"));
    assert!(map.contains("# columns: x,y,z,Ax"));
    assert_eq!(map.lines().filter(|l| !l.starts_with('#')).count(), 1 + 16);
}

#[test]
fn moment_run_reports_gyromagnetic_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let status = magatom()
        .arg("moment")
        .arg(repo_scenario("moment.toml"))
        .arg("--out-dir")
        .arg(&out)
        .args(["--set", "integrator.periods=3.0"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", stderr_of(&status));
    let report = fs::read_to_string(out.join("moment_report.toml")).unwrap();
    assert!(report.contains("g-measured"));
    assert!(report.contains("g-predicted"));
}

#[test]
fn moving_atom_moment_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let status = magatom()
        .arg("moment")
        .arg(repo_scenario("moment.toml"))
        .arg("--out-dir")
        .arg(&out)
        .args(["--set", "initial.com_vel=[0.5, 0.0, 0.0]"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "{}", stderr_of(&status));
    assert!(stderr_of(&status).contains("rest"));
}

#[test]
fn unknown_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        tmp.path(),
        &SMALL_ENSEMBLE.replace("n-atoms = 16", "n-atoms = 16\nn-atomsss = 2"),
    );
    let status = magatom().arg("ensemble").arg(&scenario).output().unwrap();
    assert_eq!(status.status.code(), Some(1), "{}", stderr_of(&status));
    assert!(stderr_of(&status).contains("n-atomsss"));
}

#[test]
fn collisional_run_without_softening_exits_2() {
    // Exact head-on infall: zero field (nothing bends the line) and a
    // hard-Coulomb oscillation through the origin. Every atom fails, the
    // run is invalid, and no partial artifacts survive.
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        tmp.path(),
        &SMALL_ENSEMBLE
            .replace("softening = 0.05", "softening = 0.0")
            .replace("steps-per-period = 2000.0", "")
            .replace(
                "kind = \"stern-gerlach\"\nh = 2.0\ng = 0.5",
                "kind = \"uniform\"\nh0 = [0.0, 0.0, 0.0]",
            )
            .replace("axis = [0.0, 1.0, 1.0]", "axis = [0.0, 0.0, 1.0]"),
    );
    let out = tmp.path().join("x");
    let status = magatom()
        .arg("ensemble")
        .arg(&scenario)
        .arg("--out-dir")
        .arg(&out)
        .args(["--set", "integrator.method=\"rk45\""])
        .args(["--set", "integrator.tolerance=1e-8"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "{}", stderr_of(&status));
    // The report survives as the marked record of the invalid run.
    let report = fs::read_to_string(out.join("ensemble_report.toml")).unwrap();
    assert!(report.contains("valid = false"), "report: {report}");
    assert!(report.contains("n-failed = 16"), "report: {report}");
}

#[test]
fn simulate_reduced_writes_trajectory_with_header() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let status = magatom()
        .arg("simulate-reduced")
        .arg(repo_scenario("uniform_compare.toml"))
        .arg("--out-dir")
        .arg(&out)
        .args(["--set", "integrator.periods=1.0"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", stderr_of(&status));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# magatom trajectory"));
    assert!(lines.next().unwrap().starts_with("# columns: t,"));
    assert_eq!(
        lines.next().unwrap(),
        "t,Rx,Ry,Rz,Rdotx,Rdoty,Rdotz,rx,ry,rz,rdotx,rdoty,rdotz,E,Lx,Ly,Lz,Sx,Sy,Sz"
    );
    // 2000 steps / stride 10 -> 201 samples.
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 201);
}

#[test]
fn simplified_flag_requires_linear_field() {
    let tmp = tempfile::tempdir().unwrap();
    let status = magatom()
        .arg("simulate-reduced")
        .arg(repo_scenario("uniform_compare.toml"))
        .arg("--out-dir")
        .arg(tmp.path().join("s"))
        .arg("--simplified")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1), "{}", stderr_of(&status));
}
