use std::path::Path;
use std::process::{Command, Output};

fn ghostbohm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghostbohm"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GHOSTBOHM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const BAD_STEP: &str = r#"
name = "bad"

[model]
kind = "ghost"
nu = 0.2
omega = -0.1
g = -0.03

[packet]
q_c = [0.0, 0.0]
p_c = [0.0, 0.0]
a = [[0.5, 0.0], [0.0, 0.5]]
b = [[0.0, 0.0], [0.0, 0.0]]

[grid]
t_end = 1.0
step = 0.0
"#;

#[test]
fn zero_step_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, BAD_STEP).unwrap();
    let out = ghostbohm(&["run", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid.step"), "{err}");
}

#[test]
fn malformed_toml_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "name = \"x\"\n[model\n").unwrap();
    assert_eq!(code(&ghostbohm(&["run", path.to_str().unwrap()], dir.path())), 2);
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ghostbohm(&["run", "fig99"], dir.path())), 2);
}

#[test]
fn run_writes_to_the_requested_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = ghostbohm(
        &["run", "fig5", "--t-end", "3", "--ensemble-size", "3", "--format", "json", "--out-dir", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stdout).contains("critical-runaway"));
    assert!(out.join("series.json").exists());
    assert!(out.join("report.json").exists());
}

#[test]
fn env_var_moves_only_the_default_root() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("env-root");
    let res = Command::new(env!("CARGO_BIN_EXE_ghostbohm"))
        .args(["run", "fig1", "--t-end", "1", "--no-plot"])
        .current_dir(dir.path())
        .env("GHOSTBOHM_OUT_DIR", &root)
        .output()
        .unwrap();
    assert_eq!(code(&res), 0);
    assert!(root.join("fig1").join("series.csv").exists());

    let explicit = dir.path().join("explicit");
    let res = Command::new(env!("CARGO_BIN_EXE_ghostbohm"))
        .args(["run", "fig1", "--t-end", "1", "--no-plot", "--out-dir", explicit.to_str().unwrap()])
        .current_dir(dir.path())
        .env("GHOSTBOHM_OUT_DIR", &root)
        .output()
        .unwrap();
    assert_eq!(code(&res), 0);
    assert!(explicit.join("series.csv").exists());
}

#[test]
fn overflow_guard_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let preset = ghostbohm(&["presets", "--show"], dir.path());
    let text = String::from_utf8_lossy(&preset.stdout);
    let fig4 = text.split("# ").find(|s| s.starts_with("fig4")).unwrap();
    let body = fig4.split_once('\n').unwrap().1.replace("overflow_guard = 1000000000000.0", "overflow_guard = 2.0");
    assert!(body.contains("overflow_guard = 2.0"), "{body}");
    let path = dir.path().join("guarded.toml");
    std::fs::write(&path, body).unwrap();
    let res = ghostbohm(&["run", path.to_str().unwrap(), "--no-plot", "--out-dir", "g"], dir.path());
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("g/report.json")).unwrap()).unwrap();
    assert_eq!(report["truncated"], true);
}

#[test]
fn plot_rerenders_an_export() {
    let dir = tempfile::tempdir().unwrap();
    let run = ghostbohm(&["run", "fig3", "--t-end", "2", "--no-plot", "--out-dir", "r"], dir.path());
    assert_eq!(code(&run), 0);
    let res = ghostbohm(&["plot", "r/series.csv", "--out-dir", "p"], dir.path());
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let svg = std::fs::read_to_string(dir.path().join("p/series_trajectories.svg")).unwrap();
    assert!(svg.contains("version=\"1.1\""));
}

#[test]
fn validate_exits_zero_or_one_and_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let res = ghostbohm(&["validate", "--out-dir", "v"], dir.path());
    let c = code(&res);
    assert!(c == 0 || c == 1, "exit {c}: {}", String::from_utf8_lossy(&res.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("v/validation.json")).unwrap()).unwrap();
    let checks = summary["checks"].as_array().unwrap();
    let all_passed = checks.iter().all(|c| c["passed"] == true);
    assert_eq!(c == 0, all_passed);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), checks.len());
}

#[test]
fn presets_lists_all_seven() {
    let dir = tempfile::tempdir().unwrap();
    let out = ghostbohm(&["presets"], dir.path());
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for i in 1..=7 {
        assert!(text.contains(&format!("fig{i}")));
    }
}
