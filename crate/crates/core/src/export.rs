//! Time-series bundles and their CSV/JSON serialisation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{curvature_mismatch, internal_flow_symmetric, quantum_potential_with, EnsembleDiagnostics};
use crate::error::{Error, Result};
use crate::evolve::PacketSeries;
use crate::linalg::{sym_eigenvalues, Mat2};
use crate::scenario::Format;
use crate::trajectories::{Ensemble, TrajectoryKind};

pub const CSV_HEADER: [&str; 15] = [
    "t", "member_id", "kind", "qx", "qy", "px", "py", "ux", "uy", "dx", "dy", "det_lambda", "sm_eig1", "sm_eig2", "q_b",
];

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One row: a member of one kind at one time. Columns that do not apply to
/// the kind are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub member_id: usize,
    pub kind: TrajectoryKind,
    pub qx: f64,
    pub qy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub py: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ux: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sm_eig1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sm_eig2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_b: Option<f64>,
}

impl Record {
    fn new(t: f64, member_id: usize, kind: TrajectoryKind, q: [f64; 2]) -> Self {
        Record {
            t,
            member_id,
            kind,
            qx: q[0],
            qy: q[1],
            px: None,
            py: None,
            ux: None,
            uy: None,
            dx: None,
            dy: None,
            det_lambda: None,
            sm_eig1: None,
            sm_eig2: None,
            q_b: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub seed: u64,
    /// Position plane drawn by the plot emitter.
    pub plane: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representation: Option<String>,
    pub scenario: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBundle {
    pub metadata: Metadata,
    pub records: Vec<Record>,
}

impl SeriesBundle {
    pub fn members(&self, kind: TrajectoryKind) -> Vec<usize> {
        let mut ids: Vec<usize> = self.records.iter().filter(|r| r.kind == kind).map(|r| r.member_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Records of one member in time order.
    pub fn member(&self, kind: TrajectoryKind, id: usize) -> Vec<&Record> {
        self.records.iter().filter(|r| r.kind == kind && r.member_id == id).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.t) {
                out.push(r.t);
            }
        }
        out
    }
}

/// Rows in time-major order: the centre, then classical members, then
/// Bohmian members.
pub fn build_bundle(
    packet: &PacketSeries,
    ensemble: &Ensemble,
    diag: &EnsembleDiagnostics,
    kinetic: &Mat2,
    metadata: Metadata,
) -> SeriesBundle {
    let model = &packet.model;
    let mut records = Vec::new();
    for (k, state) in packet.states.iter().enumerate() {
        let lambda = curvature_mismatch(&state.a, model);
        let sm = sym_eigenvalues(&internal_flow_symmetric(&state.b, kinetic));
        let q_centre = quantum_potential_with(&state.q_c, state, kinetic, model.hbar());

        let mut centre = Record::new(state.t, 0, TrajectoryKind::Centre, [state.q_c[0], state.q_c[1]]);
        centre.px = Some(state.p_c[0]);
        centre.py = Some(state.p_c[1]);
        centre.det_lambda = Some(lambda.determinant());
        centre.sm_eig1 = Some(sm[0]);
        centre.sm_eig2 = Some(sm[1]);
        centre.q_b = q_centre.is_finite().then_some(q_centre);
        records.push(centre);

        for c in &ensemble.classical {
            if k >= c.len() {
                continue;
            }
            let mut r = Record::new(c.times[k], c.member_id, TrajectoryKind::Classical, [c.positions[k][0], c.positions[k][1]]);
            if let Some(p) = c.momenta.as_ref().map(|m| m[k]) {
                r.px = Some(p[0]);
                r.py = Some(p[1]);
            }
            records.push(r);
        }

        for (m, b) in ensemble.bohmian.iter().enumerate() {
            let Some(s) = diag.members.get(m).and_then(|d| d.get(k)) else { continue };
            let q = b.series.positions[k];
            let mut r = Record::new(s.t, b.series.member_id, TrajectoryKind::Bohmian, [q[0], q[1]]);
            r.ux = Some(s.u[0]);
            r.uy = Some(s.u[1]);
            r.dx = Some(s.delta[0]);
            r.dy = Some(s.delta[1]);
            r.det_lambda = Some(s.det_lambda);
            r.sm_eig1 = Some(s.s_m_eigs[0]);
            r.sm_eig2 = Some(s.s_m_eigs[1]);
            r.q_b = s.q_b;
            records.push(r);
        }
    }
    SeriesBundle { metadata, records }
}

/// 17 significant digits, lossless for binary64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn csv_row(r: &Record) -> [String; 15] {
    [
        format_f64(r.t),
        r.member_id.to_string(),
        r.kind.as_str().to_string(),
        format_f64(r.qx),
        format_f64(r.qy),
        opt(r.px),
        opt(r.py),
        opt(r.ux),
        opt(r.uy),
        opt(r.dx),
        opt(r.dy),
        opt(r.det_lambda),
        opt(r.sm_eig1),
        opt(r.sm_eig2),
        opt(r.q_b),
    ]
}

/// CSV text of a bundle, as [`write_csv`] would write it.
pub fn to_csv_bytes(bundle: &SeriesBundle) -> Result<Vec<u8>> {
    let csv_err = |source| Error::Csv { path: PathBuf::from("<memory>"), source };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &bundle.records {
        w.write_record(csv_row(r)).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

pub fn write_csv(bundle: &SeriesBundle, path: &Path) -> Result<()> {
    let bytes = to_csv_bytes(bundle)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json(bundle: &SeriesBundle, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, bundle).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn parse_field(path: &Path, line: u64, column: &str, text: &str) -> Result<Option<f64>> {
    if text.is_empty() {
        return Ok(None);
    }
    text.parse::<f64>().map(Some).map_err(|e| Error::Parse {
        context: format!("{} line {line}, column {column}", path.display()),
        message: e.to_string(),
    })
}

/// Reads a CSV written by [`write_csv`]. The metadata is not stored in CSV
/// and comes back empty.
pub fn read_csv(path: &Path) -> Result<SeriesBundle> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            context: path.display().to_string(),
            message: format!("unexpected header, expected {}", CSV_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| parse_field(path, line, CSV_HEADER[i], &row[i]);
        let required = |i: usize| -> Result<f64> {
            num(i)?.ok_or_else(|| Error::Parse {
                context: format!("{} line {line}", path.display()),
                message: format!("column {} is empty", CSV_HEADER[i]),
            })
        };
        let parse_err = |message: String| Error::Parse { context: format!("{} line {line}", path.display()), message };
        records.push(Record {
            t: required(0)?,
            member_id: row[1].parse().map_err(|e| parse_err(format!("member_id: {e}")))?,
            kind: row[2].parse().map_err(parse_err)?,
            qx: required(3)?,
            qy: required(4)?,
            px: num(5)?,
            py: num(6)?,
            ux: num(7)?,
            uy: num(8)?,
            dx: num(9)?,
            dy: num(10)?,
            det_lambda: num(11)?,
            sm_eig1: num(12)?,
            sm_eig2: num(13)?,
            q_b: num(14)?,
        });
    }
    Ok(SeriesBundle {
        metadata: Metadata {
            tool_version: String::new(),
            seed: 0,
            plane: "x-y".into(),
            representation: None,
            scenario: serde_json::Value::Null,
        },
        records,
    })
}

pub fn read_json(path: &Path) -> Result<SeriesBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

/// Picks the reader from the file extension.
pub fn read_series(path: &Path) -> Result<SeriesBundle> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_json(path),
        _ => read_csv(path),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub kind: String,
    /// Named series the file carries.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
}

pub fn export_series(bundle: &SeriesBundle, path: &Path, format: Format) -> Result<ManifestEntry> {
    match format {
        Format::Csv => write_csv(bundle, path)?,
        Format::Json => write_json(bundle, path)?,
    }
    Ok(ManifestEntry {
        path: path.to_path_buf(),
        kind: format.extension().to_string(),
        series: Vec::new(),
        rows: Some(bundle.records.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Metadata {
        Metadata {
            tool_version: TOOL_VERSION.into(),
            seed: 3,
            plane: "x-y".into(),
            representation: None,
            scenario: serde_json::json!({"name": "t"}),
        }
    }

    fn sample() -> SeriesBundle {
        let mut a = Record::new(0.1, 0, TrajectoryKind::Centre, [1.0 / 3.0, -2.5e-300]);
        a.px = Some(std::f64::consts::PI);
        a.q_b = Some(-0.076388888888888895);
        let mut b = Record::new(0.1, 4, TrajectoryKind::Bohmian, [0.1 + 0.2, 1e300]);
        b.ux = Some(-0.0);
        b.sm_eig2 = Some(f64::MIN_POSITIVE);
        SeriesBundle { metadata: meta(), records: vec![a, b] }
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(1.0).len(), "1.0000000000000000e0".len());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let bundle = sample();
        write_csv(&bundle, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.records, bundle.records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let bundle = sample();
        write_json(&bundle, &path).unwrap();
        assert_eq!(read_json(&path).unwrap(), bundle);
    }

    #[test]
    fn empty_bundle_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_csv(&SeriesBundle { metadata: meta(), records: vec![] }, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim_end(), CSV_HEADER.join(","));
        assert!(read_csv(&path).unwrap().records.is_empty());
    }

    #[test]
    fn bad_number_names_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, format!("{}\n0,0,centre,1,x,,,,,,,,,,\n", CSV_HEADER.join(","))).unwrap();
        let msg = read_csv(&path).unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("qy"), "{msg}");
    }
}
