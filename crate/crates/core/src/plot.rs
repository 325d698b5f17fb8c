//! Static SVG 1.1 rendering of exported series.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::export::{Record, SeriesBundle};
use crate::linalg::pairwise_mean;
use crate::trajectories::TrajectoryKind;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PANEL_HEIGHT: f64 = 180.0;
/// Polylines are thinned to at most this many vertices.
const MAX_VERTICES: usize = 2000;

const STYLE: &str = "\
.classical{fill:none;stroke:#1f5fbf;stroke-width:0.8;stroke-dasharray:4 3}
.bohmian{fill:none;stroke:#c0282d;stroke-width:0.8}
.centre{fill:none;stroke:#000000;stroke-width:1.6}
.mean-u{fill:none;stroke:#000000;stroke-width:1.2}
.mean-delta{fill:none;stroke:#b0209f;stroke-width:1.2}
.det-lambda{fill:none;stroke:#1f7f3f;stroke-width:1.2}
.q-b{fill:none;stroke:#d06000;stroke-width:1.2}
.axis{stroke:#333333;stroke-width:1}
.tick{stroke:#333333;stroke-width:0.8}
text{font-family:sans-serif;font-size:11px;fill:#222222}";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    fn empty() -> Self {
        Bounds { x_min: f64::INFINITY, x_max: f64::NEG_INFINITY, y_min: f64::INFINITY, y_max: f64::NEG_INFINITY }
    }

    fn include(&mut self, x: f64, y: f64) {
        if x.is_finite() && y.is_finite() {
            self.x_min = self.x_min.min(x);
            self.x_max = self.x_max.max(x);
            self.y_min = self.y_min.min(y);
            self.y_max = self.y_max.max(y);
        }
    }

    fn is_empty(&self) -> bool {
        self.x_min > self.x_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Strictly contains `other` with at least one side pushed out.
    pub fn strictly_exceeds(&self, other: &Bounds) -> bool {
        self.x_min <= other.x_min
            && self.x_max >= other.x_max
            && self.y_min <= other.y_min
            && self.y_max >= other.y_max
            && (self.width() > other.width() || self.height() > other.height())
    }

    /// Widens zero-extent axes and adds a small margin.
    fn padded(&self) -> Bounds {
        let pad = |lo: f64, hi: f64| {
            let span = hi - lo;
            if span > 0.0 {
                (lo - 0.05 * span, hi + 0.05 * span)
            } else {
                let w = lo.abs().max(1.0) * 0.5;
                (lo - w, hi + w)
            }
        };
        let (x_min, x_max) = pad(self.x_min, self.x_max);
        let (y_min, y_max) = pad(self.y_min, self.y_max);
        Bounds { x_min, x_max, y_min, y_max }
    }
}

/// Position-plane bounding box of every member of `kind` over samples with
/// `t ≤ t_max`.
pub fn bounding_box(bundle: &SeriesBundle, kind: TrajectoryKind, t_max: f64) -> Option<Bounds> {
    let mut b = Bounds::empty();
    for r in bundle.records.iter().filter(|r| r.kind == kind && r.t <= t_max) {
        b.include(r.qx, r.qy);
    }
    (!b.is_empty()).then_some(b)
}

/// 1-2-5 tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    if !(raw > 0.0) || !raw.is_finite() {
        return vec![lo];
    }
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    bounds: Bounds,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.bounds.x_min) / self.bounds.width() * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.bounds.y_min) / self.bounds.height() * self.h
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let y1 = self.y0 + self.h;
        let _ = writeln!(out, r#"<rect class="axis" fill="none" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#, self.x0, self.y0, self.w, self.h);
        for v in ticks(self.bounds.x_min, self.bounds.x_max) {
            let x = self.px(v);
            let _ = writeln!(out, r#"<line class="tick" x1="{x:.2}" y1="{y1:.2}" x2="{x:.2}" y2="{:.2}"/>"#, y1 + 5.0);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y1 + 18.0, tick_label(v));
        }
        for v in ticks(self.bounds.y_min, self.bounds.y_max) {
            let y = self.py(v);
            let _ = writeln!(out, r#"<line class="tick" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#, self.x0 - 5.0, self.x0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, self.x0 - 8.0, y + 4.0, tick_label(v));
        }
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, self.x0 + self.w / 2.0, y1 + 36.0, escape(x_label));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
            self.x0 - 50.0,
            self.y0 + self.h / 2.0,
            self.x0 - 50.0,
            self.y0 + self.h / 2.0,
            escape(y_label)
        );
    }

    fn polyline(&self, out: &mut String, class: &str, id: &str, points: &[(f64, f64)]) {
        let stride = points.len().div_ceil(MAX_VERTICES).max(1);
        let mut coords = String::new();
        let last = points.len().saturating_sub(1);
        for (i, (x, y)) in points.iter().enumerate() {
            if i % stride == 0 || i == last {
                if !coords.is_empty() {
                    coords.push(' ');
                }
                let _ = write!(coords, "{:.2},{:.2}", self.px(*x), self.py(*y));
            }
        }
        let _ = writeln!(out, r#"<polyline class="{class}" data-member="{id}" points="{coords}"/>"#);
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, height: f64, title: &str, description: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, "<metadata>{}</metadata>", escape(description));
    let _ = writeln!(out, "<style type=\"text/css\"><![CDATA[\n{STYLE}\n]]></style>");
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="#ffffff"/>"##);
}

fn legend(out: &mut String, x: f64, y: f64, entries: &[(&str, &str)]) {
    for (i, (class, label)) in entries.iter().enumerate() {
        let yy = y + 18.0 * i as f64;
        let _ = writeln!(out, r#"<line class="{class}" x1="{x:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}"/>"#, x + 28.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 34.0, yy + 4.0, escape(label));
    }
}

fn write_svg(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn plot_title(bundle: &SeriesBundle) -> String {
    let name = bundle.metadata.scenario.get("name").and_then(|v| v.as_str()).unwrap_or("series");
    match &bundle.metadata.representation {
        Some(rep) => format!("{name} ({rep})"),
        None => name.to_string(),
    }
}

/// Position-plane trajectories: one polyline per classical and Bohmian
/// member plus one for the packet centre.
pub fn render_trajectories(bundle: &SeriesBundle) -> Result<String> {
    if bundle.records.is_empty() {
        return Err(Error::InvalidGrid("cannot plot an empty series".into()));
    }
    let mut bounds = Bounds::empty();
    for r in &bundle.records {
        bounds.include(r.qx, r.qy);
    }
    let frame = Frame {
        x0: MARGIN_LEFT,
        y0: MARGIN_TOP,
        w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        h: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
        bounds: bounds.padded(),
    };
    let title = plot_title(bundle);
    let mut out = String::new();
    header(&mut out, HEIGHT, &title, &format!("position plane: {}; horizontal qx, vertical qy", bundle.metadata.plane));
    frame.axes(&mut out, "qx", "qy");
    for kind in [TrajectoryKind::Classical, TrajectoryKind::Bohmian, TrajectoryKind::Centre] {
        for id in bundle.members(kind) {
            let pts: Vec<(f64, f64)> = bundle.member(kind, id).iter().map(|r| (r.qx, r.qy)).collect();
            frame.polyline(&mut out, kind.as_str(), &format!("{}-{id}", kind.as_str()), &pts);
        }
    }
    legend(
        &mut out,
        WIDTH - MARGIN_RIGHT + 12.0,
        MARGIN_TOP + 10.0,
        &[("classical", "classical"), ("bohmian", "Bohmian"), ("centre", "centre")],
    );
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_plot(bundle: &SeriesBundle, path: &Path) -> Result<()> {
    write_svg(path, &render_trajectories(bundle)?)
}

/// Ensemble means over Bohmian rows of `f` at every time, skipping rows
/// where `f` has no value.
fn bohmian_mean(bundle: &SeriesBundle, f: impl Fn(&Record) -> Option<f64>) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut current: Option<f64> = None;
    let mut vals: Vec<f64> = Vec::new();
    let flush = |t: Option<f64>, vals: &mut Vec<f64>, out: &mut Vec<(f64, f64)>| {
        if let (Some(t), false) = (t, vals.is_empty()) {
            out.push((t, pairwise_mean(vals)));
        }
        vals.clear();
    };
    for r in bundle.records.iter().filter(|r| r.kind == TrajectoryKind::Bohmian) {
        if current != Some(r.t) {
            flush(current, &mut vals, &mut out);
            current = Some(r.t);
        }
        if let Some(v) = f(r).filter(|v| v.is_finite()) {
            vals.push(v);
        }
    }
    flush(current, &mut vals, &mut out);
    out
}

fn norm(x: Option<f64>, y: Option<f64>) -> Option<f64> {
    Some(x?.hypot(y?))
}

/// Time-series panels: mean `‖u‖` and `‖Δ‖`, `det Λ`, mean `Q_B`.
pub fn render_diagnostics(bundle: &SeriesBundle) -> Result<String> {
    if bundle.records.is_empty() {
        return Err(Error::InvalidGrid("cannot plot an empty series".into()));
    }
    let mean_u = bohmian_mean(bundle, |r| norm(r.ux, r.uy));
    let mean_d = bohmian_mean(bundle, |r| norm(r.dx, r.dy));
    let det: Vec<(f64, f64)> = bundle
        .records
        .iter()
        .filter(|r| r.kind == TrajectoryKind::Centre)
        .filter_map(|r| Some((r.t, r.det_lambda?)))
        .collect();
    let q_b = bohmian_mean(bundle, |r| r.q_b);

    let panels: [(&str, Vec<(&str, &str, &[(f64, f64)])>); 3] = [
        ("mean |u|, |Delta|", vec![("mean-u", "mean |u|", &mean_u), ("mean-delta", "mean |Delta|", &mean_d)]),
        ("det Lambda", vec![("det-lambda", "det Lambda", &det)]),
        ("mean Q_B", vec![("q-b", "mean Q_B", &q_b)]),
    ];
    let height = MARGIN_TOP + panels.len() as f64 * (PANEL_HEIGHT + MARGIN_BOTTOM);
    let mut out = String::new();
    header(&mut out, height, &format!("{} diagnostics", plot_title(bundle)), "time series against t");
    for (i, (label, series)) in panels.iter().enumerate() {
        let mut bounds = Bounds::empty();
        for (_, _, pts) in series {
            for (t, v) in pts.iter() {
                bounds.include(*t, *v);
            }
        }
        if bounds.is_empty() {
            bounds = Bounds { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };
        }
        let frame = Frame {
            x0: MARGIN_LEFT,
            y0: MARGIN_TOP + i as f64 * (PANEL_HEIGHT + MARGIN_BOTTOM),
            w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            h: PANEL_HEIGHT,
            bounds: bounds.padded(),
        };
        frame.axes(&mut out, "t", label);
        for (class, name, pts) in series {
            if !pts.is_empty() {
                frame.polyline(&mut out, class, name, pts);
            }
        }
        let entries: Vec<(&str, &str)> = series.iter().map(|(c, n, _)| (*c, *n)).collect();
        legend(&mut out, WIDTH - MARGIN_RIGHT + 12.0, frame.y0 + 10.0, &entries);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_diagnostics_plot(bundle: &SeriesBundle, path: &Path) -> Result<()> {
    write_svg(path, &render_diagnostics(bundle)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::export::Metadata;

    fn bundle(records: Vec<Record>) -> SeriesBundle {
        SeriesBundle {
            metadata: Metadata {
                tool_version: "0".into(),
                seed: 0,
                plane: "x-y".into(),
                representation: None,
                scenario: serde_json::json!({"name": "unit"}),
            },
            records,
        }
    }

    fn rec(t: f64, id: usize, kind: TrajectoryKind, q: [f64; 2]) -> Record {
        let json = serde_json::json!({"t": t, "member_id": id, "kind": kind, "qx": q[0], "qy": q[1]});
        serde_json::from_value(json).unwrap()
    }

    #[test]
    fn constant_series_gives_one_degenerate_polyline() {
        let b = bundle((0..5).map(|k| rec(k as f64, 0, TrajectoryKind::Centre, [1.0, 1.0])).collect());
        let svg = render_trajectories(&b).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn one_polyline_per_member() {
        let mut recs = Vec::new();
        for k in 0..4 {
            let t = k as f64;
            recs.push(rec(t, 0, TrajectoryKind::Centre, [t, 0.0]));
            for m in 0..3 {
                recs.push(rec(t, m, TrajectoryKind::Classical, [t, m as f64]));
                recs.push(rec(t, m, TrajectoryKind::Bohmian, [t, -(m as f64)]));
            }
        }
        let svg = render_trajectories(&bundle(recs)).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 7);
        assert!(svg.contains("x-y"));
    }

    #[test]
    fn empty_bundle_rejected() {
        assert!(render_trajectories(&bundle(vec![])).is_err());
    }

    #[test]
    fn tick_positions() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(ticks(-1.0, 1.0).len(), 5);
    }

    #[test]
    fn bounds_growth() {
        let recs = (0..10).map(|k| rec(k as f64, 0, TrajectoryKind::Bohmian, [k as f64, 0.5 * k as f64])).collect();
        let b = bundle(recs);
        let early = bounding_box(&b, TrajectoryKind::Bohmian, 4.0).unwrap();
        let late = bounding_box(&b, TrajectoryKind::Bohmian, 9.0).unwrap();
        assert!(late.strictly_exceeds(&early));
        assert!(bounding_box(&b, TrajectoryKind::Classical, 9.0).is_none());
    }
}
