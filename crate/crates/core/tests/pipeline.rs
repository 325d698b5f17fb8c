use std::path::Path;

use ghostbohm::diagnostics::Regime;
use ghostbohm::export::{read_csv, read_json};
use ghostbohm::parallel::Execution;
use ghostbohm::run::{run_scenario, RunOptions};
use ghostbohm::scenario::{preset, Format, SamplingMode, Scenario};
use ghostbohm::trajectories::TrajectoryKind;

fn short(name: &str, t_end: f64) -> Scenario {
    let mut s = preset(name).unwrap();
    s.grid.t_end = t_end;
    s
}

fn options(s: &Scenario, dir: &Path) -> RunOptions {
    RunOptions::for_scenario(s, dir.to_path_buf())
}

#[test]
fn rigid_preset_reports_rigid_transport() {
    let dir = tempfile::tempdir().unwrap();
    let s = preset("fig1").unwrap();
    let report = run_scenario(&s, &options(&s, dir.path())).unwrap();
    assert_eq!(report.regime, Some(Regime::RigidTransport));
    assert!(!report.truncated);
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["regime"], "rigid-transport");
    assert!(json.get("wall_clock").is_none());
}

#[test]
fn csv_has_one_row_per_kind_member_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short("fig3", 2.0);
    s.ensemble.size = 5;
    let report = run_scenario(&s, &options(&s, dir.path())).unwrap();
    let bundle = read_csv(&dir.path().join("series.csv")).unwrap();
    let grid = 201;
    assert_eq!(bundle.records.len(), grid * (2 * 5 + 1));
    assert_eq!(report.manifest[0].rows, Some(bundle.records.len()));
    assert_eq!(bundle.members(TrajectoryKind::Bohmian).len(), 5);
    assert_eq!(bundle.members(TrajectoryKind::Centre), vec![0]);
    let header = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert!(header.starts_with("t,member_id,kind,qx,qy,px,py,ux,uy,dx,dy,det_lambda,sm_eig1,sm_eig2,q_b\n"));
}

#[test]
fn biham_manifest_names_both_representations() {
    let dir = tempfile::tempdir().unwrap();
    let s = short("fig7", 10.0);
    let report = run_scenario(&s, &options(&s, dir.path())).unwrap();
    let series: Vec<&str> = report.manifest.iter().flat_map(|m| m.series.iter().map(String::as_str)).collect();
    for name in ["delta_g", "delta_2", "q_b_g", "q_b_2"] {
        assert!(series.contains(&name), "{name} missing from {series:?}");
    }
    assert!(report.regime.is_none());
    for entry in &report.manifest {
        assert!(entry.path.exists(), "{} listed but not written", entry.path.display());
    }
}

#[test]
fn single_zero_offset_member_rides_the_centre() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short("fig4", 20.0);
    s.ensemble.size = 1;
    s.ensemble.sampling = SamplingMode::FixedOffsets;
    s.ensemble.offsets = vec![[0.0, 0.0]];
    s.output.format = Format::Json;
    run_scenario(&s, &options(&s, dir.path())).unwrap();
    let bundle = read_json(&dir.path().join("series.json")).unwrap();
    let centre = bundle.member(TrajectoryKind::Centre, 0);
    let member = bundle.member(TrajectoryKind::Bohmian, 0);
    assert_eq!(centre.len(), member.len());
    for (c, m) in centre.iter().zip(&member) {
        assert!((c.qx - m.qx).abs() < 1e-8 && (c.qy - m.qy).abs() < 1e-8, "t = {}", c.t);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let s = short("fig2", 5.0);
    let mut oa = options(&s, a.path());
    oa.execution = Execution::Sequential;
    run_scenario(&s, &oa).unwrap();
    run_scenario(&s, &options(&s, b.path())).unwrap();
    for file in ["series.csv", "trajectories.svg", "diagnostics.svg"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
}

#[test]
fn different_seeds_draw_different_ensembles() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut s = short("fig1", 0.5);
    s.output.plot = false;
    run_scenario(&s, &options(&s, a.path())).unwrap();
    s.ensemble.seed += 1;
    run_scenario(&s, &options(&s, b.path())).unwrap();
    let x = read_csv(&a.path().join("series.csv")).unwrap();
    let y = read_csv(&b.path().join("series.csv")).unwrap();
    assert_eq!(x.records.len(), y.records.len());
    assert_ne!(x.records, y.records);
}

#[test]
fn spiral_preset_grows() {
    let dir = tempfile::tempdir().unwrap();
    let s = preset("fig4").unwrap();
    let report = run_scenario(&s, &options(&s, dir.path())).unwrap();
    assert_eq!(report.regime, Some(Regime::SpiralInstability));
    let svg = std::fs::read_to_string(dir.path().join("trajectories.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.contains("<svg") && svg.contains("<polyline"));
}
