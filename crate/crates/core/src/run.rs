//! Scenario execution: simulation, file output and the run report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::biham::{biham_compare, BihamComparison};
use crate::diagnostics::{classify_regime, ensemble_diagnostics, EnsembleDiagnostics, Regime, RegimeLabel};
use crate::error::{Error, Result};
use crate::evolve::{evolve_packet, PacketSeries};
use crate::export::{build_bundle, export_series, format_f64, ManifestEntry, Metadata, SeriesBundle, TOOL_VERSION};
use crate::linalg::Vec2;
use crate::model::QuadraticModel;
use crate::parallel::Execution;
use crate::plot::{emit_diagnostics_plot, emit_plot};
use crate::scenario::{Format, ResolvedModel, Scenario};
use crate::trajectories::{propagate_ensemble, sample_ensemble, Ensemble};

/// Overrides the default output root (not an explicit `--out-dir` or a
/// scenario's `output.dir`).
pub const OUT_DIR_ENV: &str = "GHOSTBOHM_OUT_DIR";
pub const DEFAULT_OUT_ROOT: &str = "ghostbohm-out";

/// `explicit`, else the scenario's `output.dir`, else
/// `$GHOSTBOHM_OUT_DIR/<name>` or `ghostbohm-out/<name>`.
pub fn resolve_out_dir(explicit: Option<&Path>, scenario: &Scenario) -> PathBuf {
    if let Some(dir) = explicit {
        return dir.to_path_buf();
    }
    if let Some(dir) = &scenario.output.dir {
        return dir.clone();
    }
    let root = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
    root.join(&scenario.name)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub format: Format,
    pub plot: bool,
    pub execution: Execution,
}

impl RunOptions {
    pub fn for_scenario(scenario: &Scenario, out_dir: PathBuf) -> Self {
        Self { out_dir, format: scenario.output.format, plot: scenario.output.plot, execution: Execution::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub model: QuadraticModel,
    pub packet: PacketSeries,
    pub ensemble: Ensemble,
    pub diagnostics: EnsembleDiagnostics,
    pub regime: Result<RegimeLabel, String>,
}

#[derive(Debug, Clone)]
pub enum Simulation {
    Single(Box<SingleRun>),
    BiHamiltonian(Box<BihamComparison>),
}

/// Runs the numerical pipeline without touching the file system.
pub fn simulate(scenario: &Scenario, execution: Execution) -> Result<Simulation> {
    scenario.validate()?;
    let grid = scenario.time_grid()?;
    let config = scenario.integrator();
    let packet0 = scenario.initial_packet();
    let spec = scenario.ensemble_spec();
    match scenario.resolve_model()? {
        ResolvedModel::Ghost(model) => {
            let initial = sample_ensemble(&packet0, model.hbar(), &spec)?;
            let packet = evolve_packet(&packet0, &model, &grid, &config)?;
            let ensemble = propagate_ensemble(&packet, &initial, model.g(), &model.flow_matrix(), &config, execution)?;
            let diagnostics = ensemble_diagnostics(&ensemble, &packet, model.g(), execution)?;
            let regime = classify_regime(&model, &packet, &diagnostics, &scenario.thresholds).map_err(|e| e.to_string());
            Ok(Simulation::Single(Box::new(SingleRun { model, packet, ensemble, diagnostics, regime })))
        }
        ResolvedModel::BiHamiltonian { pair, convention } => {
            let initial = sample_ensemble(&packet0, pair.model_g.hbar(), &spec)?;
            let offsets: Vec<Vec2> = initial.iter().map(|q| q - packet0.q_c).collect();
            let cmp = biham_compare(&pair, &packet0, &offsets, &grid, convention, &config, execution)?;
            Ok(Simulation::BiHamiltonian(Box::new(cmp)))
        }
    }
}

fn metadata(scenario: &Scenario, representation: Option<&str>) -> Metadata {
    Metadata {
        tool_version: TOOL_VERSION.to_string(),
        seed: scenario.ensemble.seed,
        plane: "x-y".into(),
        representation: representation.map(str::to_string),
        scenario: serde_json::to_value(scenario).expect("scenario serialises to JSON"),
    }
}

/// Series bundles keyed by file stem.
pub fn bundles(scenario: &Scenario, sim: &Simulation, execution: Execution) -> Result<Vec<(String, SeriesBundle)>> {
    match sim {
        Simulation::Single(run) => Ok(vec![(
            "series".to_string(),
            build_bundle(&run.packet, &run.ensemble, &run.diagnostics, run.model.g(), metadata(scenario, None)),
        )]),
        Simulation::BiHamiltonian(cmp) => {
            let mut out = Vec::new();
            for (stem, rep) in [("series_g", &cmp.rep_g), ("series_2", &cmp.rep_2)] {
                // Δ and Q_B are measured against the shared classical reference.
                let ensemble = Ensemble {
                    centre: rep.ensemble.centre.clone(),
                    classical: cmp.classical().to_vec(),
                    bohmian: rep.ensemble.bohmian.clone(),
                };
                let diag = ensemble_diagnostics(&ensemble, &rep.packet, &rep.guidance, execution)?;
                let bundle = build_bundle(&rep.packet, &ensemble, &diag, &rep.guidance, metadata(scenario, Some(&rep.label)));
                out.push((stem.to_string(), bundle));
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationFlag {
    pub series: String,
    pub index: usize,
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub tool_version: String,
    pub seed: u64,
    pub regime: Option<Regime>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime_note: Option<String>,
    pub evidence: BTreeMap<String, f64>,
    pub truncated: bool,
    pub truncations: Vec<TruncationFlag>,
    pub manifest: Vec<ManifestEntry>,
    /// Printed, never written, so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock: Duration,
    pub config: Scenario,
}

fn collect_truncations(sim: &Simulation) -> Vec<TruncationFlag> {
    let mut out = Vec::new();
    let mut add = |label: String, packet: &PacketSeries, ensemble: &Ensemble| {
        if let Some(tr) = packet.truncation {
            out.push(TruncationFlag { series: format!("{label}packet"), index: tr.index, t: tr.t });
        }
        for c in &ensemble.classical {
            if let Some(i) = c.truncated_at {
                out.push(TruncationFlag { series: format!("{label}classical-{}", c.member_id), index: i, t: packet.grid.time(i) });
            }
        }
        for b in &ensemble.bohmian {
            if let Some(i) = b.series.truncated_at {
                let series = format!("{label}bohmian-{}", b.series.member_id);
                out.push(TruncationFlag { series, index: i, t: packet.grid.time(i) });
            }
        }
    };
    match sim {
        Simulation::Single(run) => add(String::new(), &run.packet, &run.ensemble),
        Simulation::BiHamiltonian(cmp) => {
            add("g/".into(), &cmp.rep_g.packet, &cmp.rep_g.ensemble);
            add("2/".into(), &cmp.rep_2.packet, &cmp.rep_2.ensemble);
        }
    }
    out
}

fn last_or_nan(v: &[f64]) -> f64 {
    v.last().copied().unwrap_or(f64::NAN)
}

fn write_means(cmp: &BihamComparison, path: &Path, format: Format) -> Result<ManifestEntry> {
    let columns = [
        ("mean_delta_g", cmp.rep_g.mean_delta_norm()),
        ("mean_delta_2", cmp.rep_2.mean_delta_norm()),
        ("mean_q_b_g", cmp.rep_g.mean_q_b()),
        ("mean_q_b_2", cmp.rep_2.mean_q_b()),
        ("mean_gap", cmp.mean_gap()),
    ];
    let rows = cmp.times.len();
    match format {
        Format::Csv => {
            let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
            let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
            let header: Vec<&str> = std::iter::once("t").chain(columns.iter().map(|(n, _)| *n)).collect();
            w.write_record(&header).map_err(csv_err)?;
            for k in 0..rows {
                let mut row = vec![format_f64(cmp.times[k])];
                row.extend(columns.iter().map(|(_, v)| v.get(k).map(|x| format_f64(*x)).unwrap_or_default()));
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        Format::Json => {
            let mut obj = serde_json::Map::new();
            obj.insert("t".into(), serde_json::to_value(&cmp.times).expect("finite times"));
            for (name, v) in &columns {
                let vals: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
                obj.insert((*name).into(), serde_json::to_value(vals).expect("serialisable"));
            }
            let text = serde_json::to_string_pretty(&obj).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
            std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(ManifestEntry {
        path: path.to_path_buf(),
        kind: format.extension().into(),
        series: columns.iter().map(|(n, _)| n.to_string()).collect(),
        rows: Some(rows),
    })
}

fn biham_evidence(cmp: &BihamComparison) -> BTreeMap<String, f64> {
    let mut e = BTreeMap::new();
    e.insert("max_gap".into(), cmp.max_gap());
    e.insert("classical_discrepancy".into(), cmp.classical_discrepancy());
    e.insert("mean_final_delta_g".into(), last_or_nan(&cmp.rep_g.mean_delta_norm()));
    e.insert("mean_final_delta_2".into(), last_or_nan(&cmp.rep_2.mean_delta_norm()));
    e.insert("q_b_variance_g".into(), cmp.rep_g.q_b_variance());
    e.insert("q_b_variance_2".into(), cmp.rep_2.q_b_variance());
    e
}

/// Simulates, writes every configured output under `options.out_dir` and
/// returns the report. The report itself is written last as `report.json`.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunReport> {
    let started = Instant::now();
    let sim = simulate(scenario, options.execution)?;
    let dir = &options.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut manifest = Vec::new();
    let ext = options.format.extension();
    for (stem, bundle) in bundles(scenario, &sim, options.execution)? {
        let mut entry = export_series(&bundle, &dir.join(format!("{stem}.{ext}")), options.format)?;
        entry.series = match stem.as_str() {
            "series_g" => vec!["delta_g".into(), "q_b_g".into(), "trajectories_g".into()],
            "series_2" => vec!["delta_2".into(), "q_b_2".into(), "trajectories_2".into()],
            _ => vec!["trajectories".into(), "u".into(), "delta".into(), "det_lambda".into(), "q_b".into()],
        };
        manifest.push(entry);
        if options.plot && !bundle.records.is_empty() {
            let suffix = stem.strip_prefix("series").unwrap_or("");
            let traj = dir.join(format!("trajectories{suffix}.svg"));
            emit_plot(&bundle, &traj)?;
            manifest.push(ManifestEntry { path: traj, kind: "svg".into(), series: vec![], rows: None });
            let diag = dir.join(format!("diagnostics{suffix}.svg"));
            emit_diagnostics_plot(&bundle, &diag)?;
            manifest.push(ManifestEntry { path: diag, kind: "svg".into(), series: vec![], rows: None });
        }
    }

    let (regime, regime_note, evidence) = match &sim {
        Simulation::Single(run) => match &run.regime {
            Ok(label) => (Some(label.regime), None, label.evidence.clone()),
            Err(msg) => (None, Some(msg.clone()), BTreeMap::new()),
        },
        Simulation::BiHamiltonian(cmp) => {
            manifest.push(write_means(cmp, &dir.join(format!("biham_means.{ext}")), options.format)?);
            (None, Some("bi-Hamiltonian comparison; no single-model regime".into()), biham_evidence(cmp))
        }
    };

    let truncations = collect_truncations(&sim);
    let report_path = dir.join("report.json");
    manifest.push(ManifestEntry { path: report_path.clone(), kind: "json".into(), series: vec![], rows: None });
    let mut report = RunReport {
        scenario: scenario.name.clone(),
        tool_version: TOOL_VERSION.to_string(),
        seed: scenario.ensemble.seed,
        regime,
        regime_note,
        evidence,
        truncated: !truncations.is_empty(),
        truncations,
        manifest,
        wall_clock: Duration::ZERO,
        config: scenario.clone(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|source| Error::Json { path: report_path.clone(), source })?;
    std::fs::write(&report_path, text + "\n").map_err(|e| Error::io(&report_path, e))?;
    report.wall_clock = started.elapsed();
    Ok(report)
}
