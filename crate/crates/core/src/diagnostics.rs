//! Trajectory-based quantum-classical diagnostics and regime classification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{PacketSeries, PacketState};
use crate::linalg::{max_abs, pairwise_mean, sym_eigenvalues, symmetrize, Mat2, Vec2};
use crate::model::{flow_spectrum_with, QuadraticModel, SpectralTolerances, StabilityClass};
use crate::parallel::{map_members, Execution};
use crate::trajectories::{Ensemble, TrajectorySeries};

/// Smallest amplitude `R` accepted by the finite-difference quantum potential.
pub const AMPLITUDE_FLOOR: f64 = 1e-300;

/// `Λ = C − AGA`, the mismatch between classical and quantum curvature.
pub fn curvature_mismatch(a: &Mat2, model: &QuadraticModel) -> Mat2 {
    symmetrize(&(model.c() - a * model.g() * a))
}

/// Outcome of the `Λ = 0 ⇒ det C < 0` check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstruction {
    pub lambda_norm: f64,
    pub det_c: f64,
    /// `Λ` is below tolerance at this sample.
    pub cancelled: bool,
    /// `false` only when `Λ` cancelled against a non-indefinite `C`.
    pub consistent: bool,
}

/// With `det G < 0`, exact cancellation `C = AGA` forces `det C < 0`.
pub fn obstruction_check(a: &Mat2, model: &QuadraticModel, tolerance: f64) -> Obstruction {
    let lambda_norm = max_abs(&curvature_mismatch(a, model));
    let det_c = model.det_c();
    let cancelled = lambda_norm < tolerance;
    let consistent = !cancelled || model.g().determinant() > 0.0 || det_c < 0.0;
    Obstruction { lambda_norm, det_c, cancelled, consistent }
}

/// Closed-form Gaussian quantum potential
/// `Q = −½(q−q_c)ᵀAGA(q−q_c) + (ħ/2)Tr(GA)`.
pub fn quantum_potential(q: &Vec2, state: &PacketState, model: &QuadraticModel) -> f64 {
    quantum_potential_with(q, state, model.g(), model.hbar())
}

pub fn quantum_potential_with(q: &Vec2, state: &PacketState, kinetic: &Mat2, hbar: f64) -> f64 {
    let d = q - state.q_c;
    let aga = state.a * kinetic * state.a;
    -0.5 * d.dot(&(aga * d)) + 0.5 * hbar * (kinetic * state.a).trace()
}

fn amplitude(q: &Vec2, state: &PacketState, hbar: f64) -> f64 {
    let d = q - state.q_c;
    (-(d.dot(&(state.a * d))) / (2.0 * hbar)).exp()
}

/// `Q = −(ħ²/2)(1/R)∂ᵢ(Gⁱʲ∂ⱼR)` by finite differences of the amplitude:
/// five-point stencils on the diagonal of the Hessian, a four-corner stencil
/// for the mixed derivative.
pub fn quantum_potential_fd(q: &Vec2, state: &PacketState, model: &QuadraticModel, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidGrid(format!("stencil width must be positive, got {h}")));
    }
    let hbar = model.hbar();
    let r = |dx: f64, dy: f64| amplitude(&(q + Vec2::new(dx, dy)), state, hbar);
    let r0 = r(0.0, 0.0);
    if !(r0 > AMPLITUDE_FLOOR) || !r0.is_finite() {
        return Err(Error::AmplitudeUnderflow { x: q[0], y: q[1], amplitude: r0 });
    }
    let second = |ex: f64, ey: f64| {
        (-r(2.0 * h * ex, 2.0 * h * ey) + 16.0 * r(h * ex, h * ey) - 30.0 * r0 + 16.0 * r(-h * ex, -h * ey)
            - r(-2.0 * h * ex, -2.0 * h * ey))
            / (12.0 * h * h)
    };
    let rxx = second(1.0, 0.0);
    let ryy = second(0.0, 1.0);
    let rxy = (r(h, h) - r(h, -h) - r(-h, h) + r(-h, -h)) / (4.0 * h * h);
    let g = model.g();
    let contraction = g[(0, 0)] * rxx + (g[(0, 1)] + g[(1, 0)]) * rxy + g[(1, 1)] * ryy;
    let value = -0.5 * hbar * hbar * contraction / r0;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::AmplitudeUnderflow { x: q[0], y: q[1], amplitude: r0 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSample {
    pub t: f64,
    /// `q_B − q_c`.
    pub u: Vec2,
    /// `q_B − q_cl`.
    pub delta: Vec2,
    pub lambda: Mat2,
    pub det_lambda: f64,
    /// Spectrum of `S_M = sym(−GB)`, ascending.
    pub s_m_eigs: [f64; 2],
    /// `Q(q_B(t), t)`; `None` where it is not finite.
    pub q_b: Option<f64>,
}

/// Symmetric part of the internal flow generator `M = −GB`.
pub fn internal_flow_symmetric(b: &Mat2, guidance: &Mat2) -> Mat2 {
    symmetrize(&(-(guidance * b)))
}

fn grids_agree(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
}

pub fn diagnostics_series(
    bohmian: &TrajectorySeries,
    classical: &TrajectorySeries,
    packet: &PacketSeries,
) -> Result<Vec<DiagnosticsSample>> {
    diagnostics_series_with(bohmian, classical, packet, packet.model.g())
}

/// As [`diagnostics_series`] with the kinetic tensor used in the guidance
/// law and quantum potential given explicitly.
pub fn diagnostics_series_with(
    bohmian: &TrajectorySeries,
    classical: &TrajectorySeries,
    packet: &PacketSeries,
    kinetic: &Mat2,
) -> Result<Vec<DiagnosticsSample>> {
    let packet_times: Vec<f64> = packet.states.iter().map(|s| s.t).collect();
    if !grids_agree(&bohmian.times, &classical.times) || !grids_agree(&bohmian.times, &packet_times) {
        return Err(Error::GridMismatch("bohmian, classical and packet series are sampled differently".into()));
    }
    if bohmian.len() > packet.len() {
        return Err(Error::GridMismatch(format!(
            "bohmian series has {} samples but the packet only {}",
            bohmian.len(),
            packet.len()
        )));
    }
    let model = &packet.model;
    let n = bohmian.len().min(classical.len());
    Ok((0..n)
        .map(|k| {
            let state = packet.state(k);
            let q_b = bohmian.positions[k];
            let lambda = curvature_mismatch(&state.a, model);
            let q_val = quantum_potential_with(&q_b, state, kinetic, model.hbar());
            DiagnosticsSample {
                t: bohmian.times[k],
                u: q_b - state.q_c,
                delta: q_b - classical.positions[k],
                det_lambda: lambda.determinant(),
                lambda,
                s_m_eigs: sym_eigenvalues(&internal_flow_symmetric(&state.b, kinetic)),
                q_b: q_val.is_finite().then_some(q_val),
            }
        })
        .collect())
}

/// Per-member diagnostics with ensemble means of `‖u‖` and `‖Δ‖`.
#[derive(Debug, Clone)]
pub struct EnsembleDiagnostics {
    pub times: Vec<f64>,
    pub members: Vec<Vec<DiagnosticsSample>>,
    pub mean_u: Vec<f64>,
    pub mean_delta: Vec<f64>,
}

impl EnsembleDiagnostics {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean of `Q_B` over members at each sample (members with a gap are
    /// skipped at that sample).
    pub fn mean_q_b(&self) -> Vec<Option<f64>> {
        (0..self.len())
            .map(|k| {
                let vals: Vec<f64> = self.members.iter().filter_map(|m| m[k].q_b).collect();
                (!vals.is_empty()).then(|| pairwise_mean(&vals))
            })
            .collect()
    }
}

pub fn ensemble_diagnostics(
    ensemble: &Ensemble,
    packet: &PacketSeries,
    kinetic: &Mat2,
    execution: Execution,
) -> Result<EnsembleDiagnostics> {
    let members: Result<Vec<_>> = map_members(execution, ensemble.size(), |m| {
        diagnostics_series_with(&ensemble.bohmian[m].series, &ensemble.classical[m], packet, kinetic)
    })
    .into_iter()
    .collect();
    let members = members?;
    let n = members.iter().map(Vec::len).min().unwrap_or(0);
    let times = members.first().map(|m| m[..n].iter().map(|s| s.t).collect()).unwrap_or_default();
    let mean_over = |f: &dyn Fn(&DiagnosticsSample) -> f64| -> Vec<f64> {
        (0..n).map(|k| pairwise_mean(&members.iter().map(|m| f(&m[k])).collect::<Vec<_>>())).collect()
    };
    let mean_u = mean_over(&|s| s.u.norm());
    let mean_delta = mean_over(&|s| s.delta.norm());
    Ok(EnsembleDiagnostics { times, members, mean_u, mean_delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    RigidTransport,
    QuasiSemiclassical,
    SpiralInstability,
    CriticalRunaway,
    NonNormalisableSector,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::RigidTransport => "rigid-transport",
            Regime::QuasiSemiclassical => "quasi-semiclassical",
            Regime::SpiralInstability => "spiral-instability",
            Regime::CriticalRunaway => "critical-runaway",
            Regime::NonNormalisableSector => "non-normalisable-sector",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeLabel {
    pub regime: Regime,
    pub evidence: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeThresholds {
    /// Rigid threshold as a fraction of `‖C‖∞`.
    pub rigid_relative: f64,
    /// Growth factor of the mean `‖u‖` separating spiral growth from
    /// bounded motion.
    pub growth_min: f64,
    /// Absolute `|det C|` tolerance for the critical branch.
    pub det_c: f64,
    /// Relative spectral tolerance for the flow spectrum.
    pub spectral_relative: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            rigid_relative: 1e-3,
            growth_min: 3.0,
            det_c: crate::model::DET_C_TOLERANCE,
            spectral_relative: crate::model::SPECTRAL_TOLERANCE,
        }
    }
}

fn sup(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

/// Ratio of the largest value in the second half of the series to the
/// largest value in the first half.
fn late_to_early(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 1.0;
    }
    let (early, late) = values.split_at(values.len() / 2);
    let (e, l) = (sup(early), sup(late));
    if e == 0.0 {
        if l == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        l / e
    }
}

/// Assigns one of the five regimes, checking in order: normalisability,
/// critical curvature, spiral growth, rigid transport, bounded
/// deformation.
pub fn classify_regime(
    model: &QuadraticModel,
    packet: &PacketSeries,
    diag: &EnsembleDiagnostics,
    thresholds: &RegimeThresholds,
) -> Result<RegimeLabel> {
    let mut evidence = BTreeMap::new();
    let min_margin = packet.min_margin();
    evidence.insert("min_margin".to_string(), min_margin);
    if !(min_margin > 0.0) {
        return Ok(RegimeLabel { regime: Regime::NonNormalisableSector, evidence });
    }

    let det_c = model.det_c();
    let sup_lambda = packet
        .states
        .iter()
        .map(|s| max_abs(&curvature_mismatch(&s.a, model)))
        .fold(0.0, f64::max);
    let rigid_threshold = thresholds.rigid_relative * max_abs(model.c());
    let spectrum = flow_spectrum_with(
        model,
        SpectralTolerances { relative: thresholds.spectral_relative, det_c: thresholds.det_c },
    );
    let u_growth = match (diag.mean_u.first(), diag.mean_u.last()) {
        (Some(&first), Some(&last)) if first > 0.0 => last / first,
        (Some(_), Some(&last)) if last > 0.0 => f64::INFINITY,
        _ => 1.0,
    };
    let u_late = late_to_early(&diag.mean_u);
    let delta_late = late_to_early(&diag.mean_delta);

    evidence.insert("det_c".into(), det_c);
    evidence.insert("sup_lambda".into(), sup_lambda);
    evidence.insert("rigid_threshold".into(), rigid_threshold);
    evidence.insert("spectrum_max_real".into(), spectrum.max_real_part());
    evidence.insert("spiral_spectrum".into(), f64::from(u8::from(spectrum.class == StabilityClass::SpiralUnstable)));
    evidence.insert("u_growth".into(), u_growth);
    evidence.insert("u_late_to_early".into(), u_late);
    evidence.insert("delta_late_to_early".into(), delta_late);
    evidence.insert("growth_min".into(), thresholds.growth_min);
    evidence.insert("truncated".into(), f64::from(u8::from(packet.is_truncated())));

    let regime = if det_c.abs() <= thresholds.det_c && sup_lambda > rigid_threshold {
        Regime::CriticalRunaway
    } else if spectrum.class == StabilityClass::SpiralUnstable && u_growth > thresholds.growth_min {
        Regime::SpiralInstability
    } else if sup_lambda < rigid_threshold {
        Regime::RigidTransport
    } else if u_late <= thresholds.growth_min && delta_late <= thresholds.growth_min {
        Regime::QuasiSemiclassical
    } else {
        return Err(Error::Inconclusive(format!(
            "spectrum {} with sup|Λ| = {sup_lambda:e}, u growth {u_growth:.3}, late/early u {u_late:.3}, Δ {delta_late:.3}",
            spectrum.class
        )));
    };
    Ok(RegimeLabel { regime, evidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_ghost_model;
    use approx::assert_abs_diff_eq;

    fn fig1() -> (QuadraticModel, PacketState) {
        let m = build_ghost_model(0.200703, -0.105, -0.0305556, 1.0).unwrap();
        let s = PacketState::new(
            0.0,
            Vec2::new(-3.0, 2.0),
            Vec2::new(1.0, -0.75),
            Mat2::new(0.347222, 0.2, 0.2, 0.5),
            Mat2::zeros(),
        );
        (m, s)
    }

    #[test]
    fn mismatch_vanishes_for_rigid_preset() {
        let (m, s) = fig1();
        assert!(max_abs(&curvature_mismatch(&s.a, &m)) < 1e-4);
        assert_eq!(curvature_mismatch(&Mat2::zeros(), &m), *m.c());
    }

    #[test]
    fn mismatch_vanishes_for_sign_flipped_packet() {
        let m = build_ghost_model(0.200703, -0.105, 0.0305556, 1.0).unwrap();
        let a = Mat2::new(-0.347222, 0.2, 0.2, -0.5);
        assert!(max_abs(&curvature_mismatch(&a, &m)) < 1e-4);
    }

    #[test]
    fn obstruction_requires_indefinite_curvature() {
        let (m, s) = fig1();
        let ob = obstruction_check(&s.a, &m, 1e-4);
        assert!(ob.cancelled && ob.consistent && ob.det_c < 0.0);
        let confining = build_ghost_model(0.5, 0.3, 0.0, 1.0).unwrap();
        for a in [Mat2::identity(), Mat2::new(0.5, 0.1, 0.1, 2.0)] {
            let ob = obstruction_check(&a, &confining, 1e-8);
            assert!(!ob.cancelled && ob.consistent);
        }
    }

    #[test]
    fn quantum_potential_at_centre() {
        let (m, s) = fig1();
        assert_abs_diff_eq!(quantum_potential(&s.q_c, &s, &m), -0.0763889, epsilon = 1e-6);
        let off = s.q_c + Vec2::new(1.0, 0.0);
        assert_abs_diff_eq!(quantum_potential(&off, &s, &m), -0.1166706, epsilon = 1e-6);
        let flat = PacketState { a: Mat2::zeros(), ..s };
        assert_eq!(quantum_potential(&off, &flat, &m), 0.0);
    }

    #[test]
    fn finite_difference_quantum_potential() {
        let (m, s) = fig1();
        let at_centre = quantum_potential_fd(&s.q_c, &s, &m, 1e-3).unwrap();
        assert_abs_diff_eq!(at_centre, quantum_potential(&s.q_c, &s, &m), epsilon = 1e-6);
        let off = s.q_c + Vec2::new(1.0, 0.0);
        assert_abs_diff_eq!(quantum_potential_fd(&off, &s, &m, 1e-3).unwrap(), -0.1166706, epsilon = 1e-4);
        let flat = PacketState { a: Mat2::zeros(), ..s };
        assert_eq!(quantum_potential_fd(&off, &flat, &m, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn finite_difference_underflow_is_reported() {
        let (m, s) = fig1();
        let far = s.q_c + Vec2::new(200.0, 0.0);
        assert!(matches!(quantum_potential_fd(&far, &s, &m, 1e-3), Err(Error::AmplitudeUnderflow { .. })));
        assert!(quantum_potential_fd(&s.q_c, &s, &m, 0.0).is_err());
    }

    #[test]
    fn late_to_early_ratio() {
        assert_eq!(late_to_early(&[1.0, 2.0, 1.0, 2.0]), 1.0);
        assert_eq!(late_to_early(&[1.0, 1.0, 4.0, 8.0]), 8.0);
        assert_eq!(late_to_early(&[0.0, 0.0]), 1.0);
    }
}
