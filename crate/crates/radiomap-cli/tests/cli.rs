//! Command-line behavior: exit codes, artifact sets, flag semantics, and
//! the frozen golden checksums of the bundled scenario.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_radiomap"))
}

fn default_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.json")
}

fn sha256_hex(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn simulate_default(dir: &Path) -> Output {
    bin()
        .arg("simulate")
        .arg(default_scenario())
        .arg("-o")
        .arg(dir)
        .output()
        .expect("simulate runs")
}

fn write_trace(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const VALID_TRACE: &str = "t_s,lat_deg,lon_deg,rssi_dbm\n\
    0,37.5503,127.0405,-70\n\
    1,37.5504,127.0406,-71\n\
    2,37.5505,127.0407,-72\n\
    3,37.5506,127.0408,-72.5\n";

fn build_args(cmd: &mut Command, traces: &[&Path], out: &Path) {
    cmd.arg("build");
    for t in traces {
        cmd.arg(t);
    }
    cmd.args([
        "--grid-origin",
        "37.55,127.04",
        "--cell-size",
        "10",
        "--rows",
        "70",
        "--cols",
        "100",
        "-o",
    ])
    .arg(out);
}

#[test]
fn build_writes_five_artifacts_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = write_trace(tmp.path(), "survey.csv", VALID_TRACE);
    let out_dir = tmp.path().join("out");
    let mut cmd = bin();
    build_args(&mut cmd, &[&trace], &out_dir);
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "map_raw.csv",
        "map.csv",
        "map_meta.json",
        "map.pgm",
        "defects.jsonl",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 5);
}

#[test]
fn build_rejects_empty_trace_naming_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = write_trace(tmp.path(), "empty.csv", "t_s,lat_deg,lon_deg,rssi_dbm\n");
    let mut cmd = bin();
    build_args(&mut cmd, &[&trace], &tmp.path().join("out"));
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("empty.csv"), "stderr: {stderr}");
}

#[test]
fn build_rejects_malformed_trace_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = write_trace(
        tmp.path(),
        "bad.csv",
        "t_s,lat_deg,lon_deg,rssi_dbm\n0,37.55,127.04,abc\n",
    );
    let mut cmd = bin();
    build_args(&mut cmd, &[&trace], &tmp.path().join("out"));
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn build_with_no_in_grid_samples_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    // Valid coordinates, but ~11 km north of the grid origin.
    let trace = write_trace(
        tmp.path(),
        "far.csv",
        "t_s,lat_deg,lon_deg,rssi_dbm\n0,37.65,127.04,-70\n1,37.6501,127.04,-71\n",
    );
    let mut cmd = bin();
    build_args(&mut cmd, &[&trace], &tmp.path().join("out"));
    let out = cmd.output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn build_toggles_produce_the_uncorrected_map() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert!(simulate_default(&sim).status.success());
    let traces: Vec<PathBuf> = ["w1", "w2", "w3"]
        .iter()
        .map(|w| sim.join(format!("trace_{w}.csv")))
        .collect();
    let trace_refs: Vec<&Path> = traces.iter().map(|p| p.as_path()).collect();

    let corrected_dir = tmp.path().join("corrected");
    let mut cmd = bin();
    build_args(&mut cmd, &trace_refs, &corrected_dir);
    assert!(cmd.output().unwrap().status.success());

    let before_dir = tmp.path().join("before");
    let mut cmd = bin();
    build_args(&mut cmd, &trace_refs, &before_dir);
    cmd.args(["--no-stuck-correction", "--no-disc-update"]);
    assert!(cmd.output().unwrap().status.success());

    let corrected = std::fs::read_to_string(corrected_dir.join("map.csv")).unwrap();
    let before = std::fs::read_to_string(before_dir.join("map.csv")).unwrap();
    assert_ne!(
        corrected, before,
        "corrections must change the map on a defective scenario"
    );

    // The flags are recorded in the metadata.
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(before_dir.join("map_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["params"]["disc_update"], serde_json::json!(false));
    assert_eq!(meta["params"]["stuck_correction"], serde_json::json!(false));

    // And the uncorrected build is itself deterministic.
    let again_dir = tmp.path().join("before2");
    let mut cmd = bin();
    build_args(&mut cmd, &trace_refs, &again_dir);
    cmd.args(["--no-stuck-correction", "--no-disc-update"]);
    assert!(cmd.output().unwrap().status.success());
    assert_eq!(
        before,
        std::fs::read_to_string(again_dir.join("map.csv")).unwrap()
    );
}

/// Golden checksums of the bundled scenario's artifacts, generated once and
/// frozen. A change here means the simulator's output format or numerics
/// changed and the scenario artifacts are no longer reproducible.
#[test]
fn simulate_default_scenario_matches_golden_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(simulate_default(tmp.path()).status.success());
    let golden = [
        (
            "trace_w1.csv",
            "1184d7e61a5fec95c683b1ee4a585e6d82a11bf897926542d6de0d65a44a9bbd",
        ),
        (
            "trace_w2.csv",
            "04a57544bbd0ab21771965abe47afc780a6fa36596cda695300a9bf10a5d34f7",
        ),
        (
            "trace_w3.csv",
            "462bf50446d22895e0e5d7910a737e3ddd944d969cac2d6a0825f5205452418f",
        ),
        (
            "truth_grid.csv",
            "d3aa24d854f9fd85acd29eb34187e7639dc43392b5f0bd62543098f506d234db",
        ),
        (
            "truth_positions.csv",
            "2e139112cdb3f2c074bbe76c6aac0e2afda6bb258be43848277e5faeabbba520",
        ),
    ];
    for (name, expected) in golden {
        let got = sha256_hex(&tmp.path().join(name));
        assert_eq!(got, expected, "{name} drifted from its golden checksum");
    }
}

#[test]
fn simulate_seed_change_changes_trace_bytes_not_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = std::fs::read_to_string(default_scenario()).unwrap();
    let reseeded = scenario.replace("\"seed\": 20240817", "\"seed\": 99");
    assert_ne!(scenario, reseeded, "seed replacement must hit");
    let alt = tmp.path().join("alt.json");
    std::fs::write(&alt, reseeded).unwrap();

    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    assert!(simulate_default(&dir_a).status.success());
    assert!(bin()
        .arg("simulate")
        .arg(&alt)
        .arg("-o")
        .arg(&dir_b)
        .output()
        .unwrap()
        .status
        .success());

    // w2 carries the noise window, so its bytes depend on the seed.
    let a = std::fs::read_to_string(dir_a.join("trace_w2.csv")).unwrap();
    let b = std::fs::read_to_string(dir_b.join("trace_w2.csv")).unwrap();
    assert_ne!(a, b);
    assert!(b.starts_with("t_s,lat_deg,lon_deg,rssi_dbm\n"));
    assert_eq!(a.lines().count(), b.lines().count());
}

#[test]
fn simulate_rejects_overlapping_windows_with_pointer() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = std::fs::read_to_string(default_scenario()).unwrap();
    let broken = scenario.replace(
        "\"stuck_windows\": [[300.0, 420.0]]",
        "\"stuck_windows\": [[300.0, 420.0], [400.0, 500.0]]",
    );
    assert_ne!(scenario, broken);
    let path = tmp.path().join("broken.json");
    std::fs::write(&path, broken).unwrap();
    let out = bin()
        .arg("simulate")
        .arg(&path)
        .arg("-o")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("/walkers/2/defects/stuck_windows"),
        "stderr: {stderr}"
    );
}

#[test]
fn simulate_rejects_wrong_field_type_with_pointer() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = std::fs::read_to_string(default_scenario()).unwrap();
    let broken = scenario.replace("\"rows\": 70", "\"rows\": \"seventy\"");
    let path = tmp.path().join("broken.json");
    std::fs::write(&path, broken).unwrap();
    let out = bin()
        .arg("simulate")
        .arg(&path)
        .arg("-o")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/grid/rows"), "stderr: {stderr}");
}

#[test]
fn eval_map_against_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert!(simulate_default(&sim).status.success());
    let truth = sim.join("truth_grid.csv");
    let out = bin().arg("eval").arg(&truth).arg(&truth).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rmse_db: 0.000000"), "stdout: {stdout}");
    assert!(stdout.contains("argmax_match: yes"), "stdout: {stdout}");
    // The last line is the machine-readable duplicate.
    let json: serde_json::Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert_eq!(json["rmse_db"], serde_json::json!(0.0));
    assert_eq!(json["peak_match"], serde_json::json!(true));
}

#[test]
fn eval_shows_corrections_beating_the_uncorrected_map() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert!(simulate_default(&sim).status.success());
    let traces: Vec<PathBuf> = ["w1", "w2", "w3"].iter().map(|w| sim.join(format!("trace_{w}.csv"))).collect();
    let trace_refs: Vec<&Path> = traces.iter().map(|p| p.as_path()).collect();

    let rmse_of = |dir: &Path, extra: &[&str]| -> f64 {
        let mut cmd = bin();
        build_args(&mut cmd, &trace_refs, dir);
        cmd.args(extra);
        assert!(cmd.output().unwrap().status.success());
        let out = bin().arg("eval").arg(dir.join("map.csv")).arg(sim.join("truth_grid.csv")).output().unwrap();
        assert!(out.status.success());
        let stdout = String::from_utf8_lossy(&out.stdout);
        let json: serde_json::Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
        json["rmse_db"].as_f64().unwrap()
    };

    let corrected = rmse_of(&tmp.path().join("after"), &[]);
    let uncorrected = rmse_of(&tmp.path().join("before"), &["--no-stuck-correction", "--no-disc-update"]);
    assert!(corrected < uncorrected, "corrected {corrected} vs uncorrected {uncorrected}");
}

#[test]
fn eval_dimension_mismatch_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    std::fs::write(&a, "# radiomap-grid-v1\n-70,-71\n-72,-73\n").unwrap();
    std::fs::write(&b, "# radiomap-grid-v1\n-70,-71,-72\n-73,-74,-75\n").unwrap();
    let out = bin().arg("eval").arg(&a).arg(&b).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("do not match"));
}

#[test]
fn build_parameter_flags_are_recorded_in_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = write_trace(tmp.path(), "survey.csv", VALID_TRACE);
    let out_dir = tmp.path().join("out");
    let mut cmd = bin();
    build_args(&mut cmd, &[&trace], &out_dir);
    cmd.args([
        "--alpha",
        "0.5",
        "--sigma-window",
        "10",
        "--stuck-min-len",
        "5",
    ]);
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("map_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["params"]["alpha"], serde_json::json!(0.5));
    assert_eq!(meta["params"]["sigma_window"], serde_json::json!(10));
    assert_eq!(meta["params"]["stuck_min_len"], serde_json::json!(5));
    assert_eq!(meta["sources"], serde_json::json!(["survey"]));
}

#[test]
fn build_rejects_out_of_range_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = write_trace(tmp.path(), "survey.csv", VALID_TRACE);
    let mut cmd = bin();
    build_args(&mut cmd, &[&trace], &tmp.path().join("out"));
    cmd.args(["--alpha", "1.0"]);
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let out = bin().arg("build").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}
