//! Scenario documents (TOML) and the built-in figure presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biham::BihamConvention;
use crate::diagnostics::RegimeThresholds;
use crate::error::{Error, Result};
use crate::evolve::{IntegratorConfig, PacketState, TimeGrid, DEFAULT_HORIZON, DEFAULT_OVERFLOW_GUARD, DEFAULT_STEP};
use crate::linalg::{Mat2, Vec2};
use crate::model::{build_biham_pair, build_ghost_model, BiHamiltonianPair, QuadraticModel};
use crate::trajectories::{reference_offsets, EnsembleSpec, Sampling};

pub const PRESET_NAMES: [&str; 7] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

pub const DEFAULT_ENSEMBLE_SIZE: usize = 20;
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Rigid-transport packet parameters: `σ_x = 1.2`, `σ_y = 1.0`.
const SIGMA_X: f64 = 1.2;
const SIGMA_Y: f64 = 1.0;
const NU: f64 = 0.200703;
const OMEGA: f64 = -0.105;
const G_CROSS: f64 = -0.0305556;

pub type Pair = [f64; 2];
pub type Matrix = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Ghost {
        nu: f64,
        omega: f64,
        g: f64,
        #[serde(default = "default_hbar")]
        hbar: f64,
    },
    BiHamiltonian {
        nu: f64,
        omega: f64,
        #[serde(default = "default_hbar")]
        hbar: f64,
        #[serde(default)]
        convention: BihamConvention,
    },
}

fn default_hbar() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn hbar(&self) -> f64 {
        match self {
            ModelConfig::Ghost { hbar, .. } | ModelConfig::BiHamiltonian { hbar, .. } => *hbar,
        }
    }

    pub fn set_hbar(&mut self, value: f64) {
        match self {
            ModelConfig::Ghost { hbar, .. } | ModelConfig::BiHamiltonian { hbar, .. } => *hbar = value,
        }
    }

    pub fn is_biham(&self) -> bool {
        matches!(self, ModelConfig::BiHamiltonian { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub q_c: Pair,
    pub p_c: Pair,
    /// Row-major.
    pub a: Matrix,
    #[serde(default)]
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "default_horizon")]
    pub t_end: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_guard")]
    pub overflow_guard: f64,
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn default_guard() -> f64 {
    DEFAULT_OVERFLOW_GUARD
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t_start: 0.0, t_end: DEFAULT_HORIZON, step: DEFAULT_STEP, overflow_guard: DEFAULT_OVERFLOW_GUARD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Draw from `|ψ(q, 0)|²`.
    #[default]
    Density,
    /// Use the `offsets` list verbatim.
    FixedOffsets,
    /// Offsets drawn from the Gaussian built on `|A(0)|`; usable when `A(0)`
    /// is indefinite.
    MagnitudeDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub sampling: SamplingMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offsets: Vec<Pair>,
}

fn default_size() -> usize {
    DEFAULT_ENSEMBLE_SIZE
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { size: DEFAULT_ENSEMBLE_SIZE, seed: DEFAULT_SEED, sampling: SamplingMode::Density, offsets: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default = "default_true")]
    pub plot: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, format: Format::Csv, plot: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub model: ModelConfig,
    pub packet: PacketConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub thresholds: RegimeThresholds,
    #[serde(default)]
    pub output: OutputConfig,
}

fn mat(m: &Matrix) -> Mat2 {
    Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn vec2(p: &Pair) -> Vec2 {
    Vec2::new(p[0], p[1])
}

/// The model(s) a scenario resolves to.
#[derive(Debug, Clone)]
pub enum ResolvedModel {
    Ghost(QuadraticModel),
    BiHamiltonian { pair: BiHamiltonianPair, convention: BihamConvention },
}

impl ResolvedModel {
    /// The model that governs the packet of a single-model run, or the
    /// ghost representation of a pair.
    pub fn primary(&self) -> &QuadraticModel {
        match self {
            ResolvedModel::Ghost(m) => m,
            ResolvedModel::BiHamiltonian { pair, .. } => &pair.model_g,
        }
    }
}

impl Scenario {
    /// Every violated invariant, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut finite = |field: &str, v: f64| {
            if !v.is_finite() {
                out.push(format!("{field} must be finite (got {v})"));
            }
        };
        match &self.model {
            ModelConfig::Ghost { nu, omega, g, hbar } => {
                finite("model.nu", *nu);
                finite("model.omega", *omega);
                finite("model.g", *g);
                finite("model.hbar", *hbar);
            }
            ModelConfig::BiHamiltonian { nu, omega, hbar, .. } => {
                finite("model.nu", *nu);
                finite("model.omega", *omega);
                finite("model.hbar", *hbar);
            }
        }
        for (i, v) in self.packet.q_c.iter().enumerate() {
            finite(&format!("packet.q_c[{i}]"), *v);
        }
        for (i, v) in self.packet.p_c.iter().enumerate() {
            finite(&format!("packet.p_c[{i}]"), *v);
        }
        for (name, m) in [("packet.a", &self.packet.a), ("packet.b", &self.packet.b)] {
            for (i, row) in m.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    finite(&format!("{name}[{i}][{j}]"), *v);
                }
            }
        }
        finite("grid.t_start", self.grid.t_start);
        finite("grid.t_end", self.grid.t_end);
        finite("grid.step", self.grid.step);

        let hbar = self.model.hbar();
        if !(hbar > 0.0) {
            out.push(format!("model.hbar must be positive (got {hbar})"));
        }
        if let ModelConfig::BiHamiltonian { nu, omega, .. } = &self.model {
            if (nu * nu - omega).abs() <= crate::model::DEGENERACY_TOLERANCE {
                out.push(format!("model: nu^2 = Omega ({nu}^2 vs {omega}) makes the second representation singular"));
            }
        }
        for (name, m) in [("packet.a", &self.packet.a), ("packet.b", &self.packet.b)] {
            if m[0][1] != m[1][0] {
                out.push(format!("{name} must be symmetric ({} vs {})", m[0][1], m[1][0]));
            }
        }
        if !(self.grid.step > 0.0) {
            out.push(format!("grid.step must be positive (got {})", self.grid.step));
        }
        if !(self.grid.t_end >= self.grid.t_start) {
            out.push(format!(
                "grid.t_end ({}) must not precede grid.t_start ({})",
                self.grid.t_end, self.grid.t_start
            ));
        }
        if !(self.grid.overflow_guard > 0.0) {
            out.push(format!("grid.overflow_guard must be positive (got {})", self.grid.overflow_guard));
        }
        if self.ensemble.size == 0 {
            out.push("ensemble.size must be at least 1".into());
        }
        match self.ensemble.sampling {
            SamplingMode::FixedOffsets if self.ensemble.offsets.len() != self.ensemble.size => out.push(format!(
                "ensemble.offsets has {} entries but ensemble.size is {}",
                self.ensemble.offsets.len(),
                self.ensemble.size
            )),
            SamplingMode::Density | SamplingMode::MagnitudeDensity if !self.ensemble.offsets.is_empty() => {
                out.push("ensemble.offsets is only allowed with sampling = \"fixed-offsets\"".into())
            }
            SamplingMode::Density => {
                let a = mat(&self.packet.a);
                if a.iter().all(|v| v.is_finite()) && !(crate::linalg::sym_eigenvalues(&a)[0] > 0.0) {
                    out.push(
                        "ensemble.sampling = \"density\" needs a positive-definite packet.a; \
                         use \"magnitude-density\" or \"fixed-offsets\""
                            .into(),
                    );
                }
            }
            _ => {}
        }
        for (i, o) in self.ensemble.offsets.iter().enumerate() {
            if !o.iter().all(|v| v.is_finite()) {
                out.push(format!("ensemble.offsets[{i}] must be finite"));
            }
        }
        let t = &self.thresholds;
        for (name, v) in [
            ("thresholds.rigid_relative", t.rigid_relative),
            ("thresholds.growth_min", t.growth_min),
            ("thresholds.det_c", t.det_c),
            ("thresholds.spectral_relative", t.spectral_relative),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(format!("{name} must be positive and finite (got {v})"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn resolve_model(&self) -> Result<ResolvedModel> {
        match &self.model {
            ModelConfig::Ghost { nu, omega, g, hbar } => Ok(ResolvedModel::Ghost(build_ghost_model(*nu, *omega, *g, *hbar)?)),
            ModelConfig::BiHamiltonian { nu, omega, hbar, convention } => Ok(ResolvedModel::BiHamiltonian {
                pair: build_biham_pair(*nu, *omega, *hbar)?,
                convention: *convention,
            }),
        }
    }

    pub fn initial_packet(&self) -> PacketState {
        PacketState::new(
            self.grid.t_start,
            vec2(&self.packet.q_c),
            vec2(&self.packet.p_c),
            mat(&self.packet.a),
            mat(&self.packet.b),
        )
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.t_start, self.grid.t_end, self.grid.step)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { overflow_guard: self.grid.overflow_guard }
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        let e = &self.ensemble;
        let sampling = match e.sampling {
            SamplingMode::Density => Sampling::Density,
            SamplingMode::FixedOffsets => Sampling::FixedOffsets(e.offsets.iter().map(vec2).collect()),
            SamplingMode::MagnitudeDensity => Sampling::FixedOffsets(reference_offsets(
                &mat(&self.packet.a),
                self.model.hbar(),
                e.size,
                e.seed,
            )),
        };
        EnsembleSpec { size: e.size, seed: e.seed, sampling }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are always representable in TOML")
    }

    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { context: context.to_string(), message: e.to_string() })
    }
}

fn rigid_a() -> Matrix {
    [[1.0 / (2.0 * SIGMA_X * SIGMA_X), 0.2], [0.2, 1.0 / (2.0 * SIGMA_Y * SIGMA_Y)]]
}

fn ghost(nu: f64, omega: f64, g: f64) -> ModelConfig {
    ModelConfig::Ghost { nu, omega, g, hbar: 1.0 }
}

fn base(name: &str, model: ModelConfig) -> Scenario {
    Scenario {
        name: name.to_string(),
        notes: Vec::new(),
        model,
        packet: PacketConfig { q_c: [-3.0, 2.0], p_c: [1.0, -0.75], a: rigid_a(), b: [[0.0; 2]; 2] },
        grid: GridConfig::default(),
        ensemble: EnsembleConfig::default(),
        thresholds: RegimeThresholds::default(),
        output: OutputConfig::default(),
    }
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Result<Scenario> {
    let mut s = match name {
        "fig1" => {
            let mut s = base(name, ghost(NU, OMEGA, G_CROSS));
            s.notes.push("rigid transport: Lambda(0) = C - A G A vanishes to the precision of the printed parameters, B(0) = 0".into());
            s
        }
        "fig2" => {
            let mut s = base(name, ghost(NU, OMEGA, G_CROSS));
            s.notes.push("rigid-transport packet with a density-sampled ensemble of 200 members".into());
            s.ensemble.size = 200;
            s
        }
        "fig3" => {
            let mut s = base(name, ghost(NU, OMEGA - 0.4, G_CROSS));
            s.notes.push("Omega reduced by 0.4 read as subtraction: Omega = -0.505".into());
            s
        }
        "fig4" => {
            let mut s = base(name, ghost(NU + 0.1, OMEGA, G_CROSS));
            s.notes.push(
                "nu shifted to 0.300703: subtracting 0.1 gives a purely imaginary flow spectrum, \
                 while the spiral regime needs |nu^2 + Omega| < |g|"
                    .into(),
            );
            s
        }
        "fig5" => {
            let mut s = base(name, ghost(NU, 0.00579446, G_CROSS));
            s.notes.push("critical point det C = 4 nu^2 Omega - g^2 = 0; B(0) = 0 member family".into());
            s
        }
        "fig6" => {
            let mut s = base(name, ghost(NU, OMEGA, -G_CROSS));
            s.packet.a = [[-1.0 / (2.0 * SIGMA_X * SIGMA_X), 0.2], [0.2, -1.0 / (2.0 * SIGMA_Y * SIGMA_Y)]];
            s.ensemble.sampling = SamplingMode::MagnitudeDensity;
            s.notes.push("off-diagonal c = 0.2 makes Lambda(0) vanish for the sign-flipped g".into());
            s.notes.push("A(0) is indefinite, so offsets are drawn from the Gaussian on |A(0)|".into());
            s
        }
        "fig7" => {
            let mut s = base(
                name,
                ModelConfig::BiHamiltonian { nu: NU, omega: OMEGA, hbar: 1.0, convention: BihamConvention::Canonical },
            );
            s.packet.b = [[0.0, 0.01], [0.01, 0.0]];
            s.notes.push("listed A(0) is positive definite, so the packet is normalisable despite the figure title".into());
            s
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    s.output.dir = None;
    Ok(s)
}

/// A preset name or a path to a TOML scenario document.
pub fn load_scenario(source: &str) -> Result<Scenario> {
    let scenario = if PRESET_NAMES.contains(&source) {
        preset(source)?
    } else {
        let path = Path::new(source);
        if !path.exists() && !source.ends_with(".toml") && !source.contains(std::path::MAIN_SEPARATOR) {
            return Err(Error::UnknownPreset(source.to_string()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_toml(&text, &path.display().to_string())?
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig1_matches_reference_values() {
        let s = load_scenario("fig1").unwrap();
        let ModelConfig::Ghost { nu, omega, g, hbar } = s.model else { panic!("fig1 is a ghost model") };
        assert_eq!((nu, omega, g, hbar), (0.200703, -0.105, -0.0305556, 1.0));
        assert!((s.packet.a[0][0] - 0.347222).abs() < 1e-6);
        assert_eq!(s.packet.a[0][1], 0.2);
        assert_eq!(s.packet.a[1][1], 0.5);
        assert_eq!(s.packet.b, [[0.0; 2]; 2]);
        assert_eq!((s.grid.t_start, s.grid.t_end), (0.0, 115.0));
    }

    #[test]
    fn fig5_differs_only_in_omega() {
        let (f1, mut f5) = (preset("fig1").unwrap(), preset("fig5").unwrap());
        let ModelConfig::Ghost { omega, g, .. } = f5.model else { panic!() };
        assert_eq!((omega, g), (0.00579446, -0.0305556));
        f5.model = f1.model.clone();
        f5.name = f1.name.clone();
        f5.notes = f1.notes.clone();
        assert_eq!(f5, f1);
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            let back = Scenario::from_toml(&s.to_toml(), name).unwrap();
            assert_eq!(back, s, "{name}");
            s.validate().unwrap();
        }
    }

    #[test]
    fn zero_step_names_field() {
        let mut s = preset("fig1").unwrap();
        s.grid.step = 0.0;
        let text = s.to_toml();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, text).unwrap();
        let err = load_scenario(path.to_str().unwrap()).unwrap_err();
        assert!(matches!(&err, Error::Validation(v) if v.iter().any(|m| m.contains("grid.step"))), "{err}");
    }

    #[test]
    fn every_violation_is_listed() {
        let mut s = preset("fig1").unwrap();
        s.grid.step = -1.0;
        s.packet.a[0][1] = 0.3;
        s.ensemble.size = 0;
        let v = s.violations();
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn parse_error_reports_location() {
        let err = Scenario::from_toml("name = \"x\"\n[model]\nkind = \"ghost\"\nnu = oops\n", "inline").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(load_scenario("fig9"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn indefinite_packet_refuses_density() {
        let mut s = preset("fig6").unwrap();
        s.validate().unwrap();
        s.ensemble.sampling = SamplingMode::Density;
        assert!(s.validate().is_err());
    }
}
