//! Invariant and oracle suite run against the built-in presets.
//!
//! Every check lives in [`registry`]; the CLI, the summary file and the
//! tests all iterate that one list.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diagnostics::{
    curvature_mismatch, internal_flow_symmetric, obstruction_check, quantum_potential, quantum_potential_fd, Regime,
};
use crate::error::{Error, Result};
use crate::evolve::{evolve_packet, normalisability_margin, riccati_linear_oracle, width_distance, PacketSeries};
use crate::export::{build_bundle, to_csv_bytes, Metadata};
use crate::linalg::{max_abs, Mat2, Vec2};
use crate::model::{build_biham_pair, build_ghost_model, classical_equivalence_residual, flow_spectrum, QuadraticModel, StabilityClass};
use crate::parallel::Execution;
use crate::plot::{bounding_box, render_trajectories};
use crate::run::{bundles, simulate, Simulation, SingleRun};
use crate::scenario::{preset, ResolvedModel, Scenario, PRESET_NAMES};
use crate::trajectories::{evolve_classical, sample_ensemble, BohmianTrajectory, EnsembleSpec, Sampling, TrajectoryKind};

/// Outcome of one check: whether it held and the measured evidence.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: &'static str,
    pub module: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub tool_version: &'static str,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn passed_count(&self) -> usize {
        self.checks.iter().filter(|c| c.passed).count()
    }
}

pub fn write_summary(report: &ValidationReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Lazily simulated presets shared between checks.
pub struct Context {
    pub execution: Execution,
    cache: HashMap<String, Simulation>,
}

impl Context {
    pub fn new(execution: Execution) -> Self {
        Self { execution, cache: HashMap::new() }
    }

    pub fn sim(&mut self, name: &str) -> Result<&Simulation> {
        if !self.cache.contains_key(name) {
            let sim = simulate(&preset(name)?, self.execution)?;
            self.cache.insert(name.to_string(), sim);
        }
        Ok(&self.cache[name])
    }

    pub fn single(&mut self, name: &str) -> Result<&SingleRun> {
        match self.sim(name)? {
            Simulation::Single(run) => Ok(run),
            Simulation::BiHamiltonian(_) => Err(Error::InvalidModel(format!("{name} is a bi-Hamiltonian preset"))),
        }
    }
}

type Outcome = Result<(bool, String)>;

pub struct Check {
    pub id: &'static str,
    pub module: &'static str,
    pub description: &'static str,
    run: fn(&mut Context) -> Outcome,
}

impl Check {
    pub fn run(&self, ctx: &mut Context) -> CheckResult {
        let (passed, detail) = match (self.run)(ctx) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        CheckResult { id: self.id, module: self.module, description: self.description, passed, detail }
    }
}

const SINGLE_PRESETS: [&str; 6] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"];
const ORACLE_PRESETS: [&str; 5] = ["fig1", "fig2", "fig3", "fig4", "fig5"];

fn ghost_model(name: &str) -> Result<QuadraticModel> {
    match preset(name)?.resolve_model()? {
        ResolvedModel::Ghost(m) => Ok(m),
        ResolvedModel::BiHamiltonian { .. } => Err(Error::InvalidModel(format!("{name} is a bi-Hamiltonian preset"))),
    }
}

/// Every (packet, Bohmian members, guidance) triple a preset produces.
fn packets(sim: &Simulation) -> Vec<(&PacketSeries, &[BohmianTrajectory], Mat2)> {
    match sim {
        Simulation::Single(run) => vec![(&run.packet, run.ensemble.bohmian.as_slice(), *run.model.g())],
        Simulation::BiHamiltonian(cmp) => [&cmp.rep_g, &cmp.rep_2]
            .into_iter()
            .map(|r| (&r.packet, r.ensemble.bohmian.as_slice(), r.guidance))
            .collect(),
    }
}

/// `(sup_t ‖Λ‖∞, sup_t ‖A − A(0)‖∞, sup_t ‖B‖∞)` along a packet series.
pub fn rigid_metrics(packet: &PacketSeries) -> (f64, f64, f64) {
    let a0 = packet.state(0).a;
    packet.states.iter().fold((0.0, 0.0, 0.0), |(l, a, b), s| {
        (
            l.max(max_abs(&curvature_mismatch(&s.a, &packet.model))),
            a.max(max_abs(&(s.a - a0))),
            b.max(max_abs(&s.b)),
        )
    })
}

pub fn rigid_holds(packet: &PacketSeries) -> bool {
    let (l, a, b) = rigid_metrics(packet);
    l < 1e-4 && a < 1e-6 && b < 1e-6
}

/// `sup_t ‖A(t) − U(t)⁻ᵀA(0)U(t)⁻¹‖∞`.
pub fn equivariance_error(packet: &PacketSeries, member: &BohmianTrajectory) -> f64 {
    let a0 = packet.state(0).a;
    (0..member.len())
        .map(|k| match member.flow(k).try_inverse() {
            Some(inv) => max_abs(&(packet.state(k).a - inv.transpose() * a0 * inv)),
            None => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Relative errors of `d‖u‖²/dt = 2uᵀS_Mu` and `ü = −GΛu`, with
/// fourth-order centred differences on the sample grid. The stencils act
/// on `u − u(0)`, which has the same derivatives as `u`.
pub fn identity_errors(packet: &PacketSeries, member: &BohmianTrajectory, guidance: &Mat2) -> (f64, f64) {
    let h = packet.grid.step();
    let n = member.len().min(packet.len());
    let u0 = member.initial_offset;
    let d: Vec<Vec2> = (0..n).map(|k| member.displacement(k)).collect();
    let u: Vec<Vec2> = d.iter().map(|d| u0 + d).collect();
    let (mut e1, mut s1, mut e2, mut s2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 2..n.saturating_sub(2) {
        let state = packet.state(k);
        let sm = internal_flow_symmetric(&state.b, guidance);
        let an1 = 2.0 * u[k].dot(&(sm * u[k]));
        // ‖u‖² − ‖u(0)‖²
        let sq = |j: usize| 2.0 * u0.dot(&d[j]) + d[j].norm_squared();
        let fd1 = (sq(k - 2) - 8.0 * sq(k - 1) + 8.0 * sq(k + 1) - sq(k + 2)) / (12.0 * h);
        e1 = e1.max((fd1 - an1).abs());
        s1 = s1.max(an1.abs());
        let an2 = -(guidance * curvature_mismatch(&state.a, &packet.model)) * u[k];
        let fd2 = (-d[k - 2] + d[k - 1] * 16.0 - d[k] * 30.0 + d[k + 1] * 16.0 - d[k + 2]) / (12.0 * h * h);
        e2 = e2.max((fd2 - an2).amax());
        s2 = s2.max(an2.amax());
    }
    (e1 / s1.max(1e-8), e2 / s2.max(1e-8))
}

fn fmt(v: f64) -> String {
    format!("{v:.3e}")
}

fn check_model_symmetry(_: &mut Context) -> Outcome {
    let mut worst = 0.0f64;
    for name in SINGLE_PRESETS {
        let m = ghost_model(name)?;
        worst = worst.max(max_abs(&(m.g() - m.g().transpose())));
        worst = worst.max(max_abs(&(m.c() - m.c().transpose())));
        worst = worst.max(max_abs(&(m.g().transpose() * m.g() - Mat2::identity())));
    }
    Ok((worst == 0.0, format!("max asymmetry / |GᵀG − I| = {}", fmt(worst))))
}

fn check_spectrum_pairing(ctx: &mut Context) -> Outcome {
    let _ = ctx;
    let mut worst = 0.0f64;
    let mut models: Vec<QuadraticModel> = SINGLE_PRESETS.iter().map(|n| ghost_model(n)).collect::<Result<_>>()?;
    let pair = build_biham_pair(0.200703, -0.105, 1.0)?;
    models.push(pair.model_g.clone());
    models.push(pair.model_2.clone());
    for m in &models {
        let eig = flow_spectrum(m).eigenvalues;
        for l in eig {
            let neg = eig.iter().map(|x| (x + l).norm()).fold(f64::INFINITY, f64::min);
            let conj = eig.iter().map(|x| (x - l.conj()).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(neg).max(conj);
        }
    }
    Ok((worst < 1e-10, format!("max pairing defect {}", fmt(worst))))
}

fn check_stability_classes(_: &mut Context) -> Outcome {
    let fig1 = flow_spectrum(&ghost_model("fig1")?);
    let imag = fig1.eigenvalues.iter().map(|l| l.re.abs()).fold(0.0, f64::max);
    let fig5 = flow_spectrum(&ghost_model("fig5")?).class;
    let fig4 = flow_spectrum(&ghost_model("fig4")?).class;
    let free = flow_spectrum(&build_ghost_model(0.0, 0.0, 0.0, 1.0)?).class;
    let ok = fig1.class == StabilityClass::BoundedOscillatory
        && imag < 1e-8
        && fig5 == StabilityClass::Critical
        && fig4 == StabilityClass::SpiralUnstable
        && free == StabilityClass::Critical;
    Ok((ok, format!("fig1 {} (max |Re| {}), fig4 {fig4}, fig5 {fig5}, free {free}", fig1.class, fmt(imag))))
}

fn check_critical_root(_: &mut Context) -> Outcome {
    let (nu, g) = (0.200703f64, -0.0305556f64);
    let root = g * g / (4.0 * nu * nu);
    let det = ghost_model("fig5")?.det_c();
    let ok = (root - 0.00579446).abs() < 1e-6 && det.abs() <= crate::model::DET_C_TOLERANCE;
    Ok((ok, format!("root {root:.9}, fig5 det C {}", fmt(det))))
}

fn check_biham_residual(_: &mut Context) -> Outcome {
    let pair = build_biham_pair(0.200703, -0.105, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let worst = (0..100)
        .map(|_| {
            let z = Vector4::from_fn(|_, _| rng.random_range(-5.0..5.0));
            classical_equivalence_residual(&pair, &z)
        })
        .fold(0.0, f64::max);
    let flow_gap = max_abs(&(pair.flow_matrix_g() - pair.flow_matrix_2()));
    let antisym = max_abs(&(pair.j_g + pair.j_g.transpose())).max(max_abs(&(pair.j_2 + pair.j_2.transpose())));
    let sign = pair.printed_g_2().determinant().signum();
    let ok = worst < 1e-12 && flow_gap < 1e-12 && antisym == 0.0 && sign < 0.0;
    Ok((ok, format!("residual {}, flow gap {}, sign det G_2 {sign}", fmt(worst), fmt(flow_gap))))
}

fn check_riccati_oracle(ctx: &mut Context) -> Outcome {
    let mut worst = 0.0f64;
    for name in ORACLE_PRESETS {
        let run = ctx.single(name)?;
        let k = run.packet.grid.index_of(10.0);
        let k0 = run.packet.state(0).width();
        let oracle = riccati_linear_oracle(&k0, &run.model, run.packet.state(k).t - run.packet.state(0).t)?;
        worst = worst.max(width_distance(&run.packet.state(k).width(), &oracle));
    }
    Ok((worst < 1e-6, format!("max |K_RK4(10) − K_oracle(10)| = {}", fmt(worst))))
}

fn check_centre_ehrenfest(ctx: &mut Context) -> Outcome {
    let mut worst = 0.0f64;
    for name in SINGLE_PRESETS {
        let s = preset(name)?;
        let run = ctx.single(name)?;
        let p0 = run.packet.state(0);
        let cl = evolve_classical(&p0.q_c, &p0.p_c, &run.model, &run.packet.grid, &s.integrator());
        for (k, q) in cl.positions.iter().enumerate().take(run.packet.len()) {
            worst = worst.max((q - run.packet.state(k).q_c).amax());
        }
    }
    Ok((worst < 1e-8, format!("max |q_c − q_cl| = {}", fmt(worst))))
}

fn check_symmetry_preserved(ctx: &mut Context) -> Outcome {
    let mut worst = 0.0f64;
    for name in PRESET_NAMES {
        let sim = ctx.sim(name)?;
        for (packet, _, _) in packets(sim) {
            for s in &packet.states {
                worst = worst.max(max_abs(&(s.a - s.a.transpose()))).max(max_abs(&(s.b - s.b.transpose())));
            }
        }
    }
    Ok((worst <= 1e-12, format!("max asymmetry of A, B = {}", fmt(worst))))
}

/// fig1's packet under `C := A(0)GA(0)`, so `Λ(0) = 0` to rounding.
fn exact_rigid_packet() -> Result<PacketSeries> {
    let s = preset("fig1")?;
    let model = ghost_model("fig1")?;
    let init = s.initial_packet();
    let c = crate::linalg::symmetrize(&(init.a * model.g() * init.a));
    let exact = QuadraticModel::new(*model.g(), c, model.hbar(), "exact rigid")?;
    evolve_packet(&init, &exact, &s.time_grid()?, &s.integrator())
}

fn check_rigid_fixed_point(_: &mut Context) -> Outcome {
    let packet = exact_rigid_packet()?;
    let (l, a, b) = rigid_metrics(&packet);
    let ok = l < 1e-12 && a < 1e-12 && b < 1e-12;
    Ok((ok, format!("C = A(0)GA(0), B(0) = 0: sup Λ {}, ΔA {}, B {}", fmt(l), fmt(a), fmt(b))))
}

fn check_rigid_preset(ctx: &mut Context) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for name in ["fig1", "fig2"] {
        let run = ctx.single(name)?;
        let (l, a, b) = rigid_metrics(&run.packet);
        ok &= rigid_holds(&run.packet);
        detail.push(format!("{name}: sup Λ {}, ΔA {}, B {}", fmt(l), fmt(a), fmt(b)));
    }
    Ok((ok, detail.join("; ")))
}

fn check_obstruction(ctx: &mut Context) -> Outcome {
    let mut cancelled = 0usize;
    let mut ok = true;
    for name in PRESET_NAMES {
        let sim = ctx.sim(name)?;
        for (packet, _, _) in packets(sim) {
            for s in &packet.states {
                let ob = obstruction_check(&s.a, &packet.model, 1e-8);
                cancelled += usize::from(ob.cancelled);
                ok &= ob.consistent;
            }
        }
    }
    Ok((ok, format!("{cancelled} samples with |Λ| < 1e-8, all with det C < 0: {ok}")))
}

fn check_normalisable_flag(ctx: &mut Context) -> Outcome {
    let mut ok = true;
    for name in PRESET_NAMES {
        let sim = ctx.sim(name)?;
        for (packet, _, _) in packets(sim) {
            ok &= packet.states.iter().zip(&packet.normalisable).all(|(s, f)| *f == (normalisability_margin(s) > 0.0));
        }
    }
    let fig6 = ctx.single("fig6")?.packet.state(0).is_normalisable();
    Ok((ok && !fig6, format!("flag matches margin > 0 everywhere: {ok}; fig6 normalisable: {fig6}")))
}

fn check_equivariance(ctx: &mut Context) -> Outcome {
    let mut worst = 0.0f64;
    for name in PRESET_NAMES {
        let sim = ctx.sim(name)?;
        for (packet, members, _) in packets(sim) {
            if packet.is_truncated() {
                continue;
            }
            if let Some(m) = members.first() {
                worst = worst.max(equivariance_error(packet, m));
            }
        }
    }
    Ok((worst < 1e-6, format!("max |A − U⁻ᵀA(0)U⁻¹| = {}", fmt(worst))))
}

fn check_flow_reconstruction(ctx: &mut Context) -> Outcome {
    let mut worst = 0.0f64;
    for name in PRESET_NAMES {
        let sim = ctx.sim(name)?;
        for (packet, members, _) in packets(sim) {
            for m in members {
                for (k, q) in m.series.positions.iter().enumerate() {
                    let scale = q.amax().max(1.0);
                    worst = worst.max((q - m.reconstructed(packet, k)).amax() / scale);
                }
            }
        }
    }
    Ok((worst < 1e-8, format!("max relative |q_B − (q_c + U u(0))| = {}", fmt(worst))))
}

fn check_rigid_u_constant(ctx: &mut Context) -> Outcome {
    let run = ctx.single("fig1")?;
    let mean_u = &run.diagnostics.mean_u;
    let (lo, hi) = mean_u.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    let rel = (hi - lo) / hi.max(f64::MIN_POSITIVE);
    Ok((rel < 1e-4, format!("relative variation of mean |u| = {}", fmt(rel))))
}

fn check_centre_member(_: &mut Context) -> Outcome {
    let mut s = preset("fig3")?;
    s.ensemble.size = 1;
    s.ensemble.sampling = crate::scenario::SamplingMode::FixedOffsets;
    s.ensemble.offsets = vec![[0.0, 0.0]];
    s.grid.t_end = 40.0;
    let Simulation::Single(run) = simulate(&s, Execution::Sequential)? else { unreachable!() };
    let b = &run.ensemble.bohmian[0].series;
    let worst = b.positions.iter().enumerate().map(|(k, q)| (q - run.packet.state(k).q_c).amax()).fold(0.0, f64::max);
    Ok((worst < 1e-8, format!("max |q_B − q_c| for u(0) = 0: {}", fmt(worst))))
}

fn check_sampling(_: &mut Context) -> Outcome {
    let s = preset("fig1")?;
    let p0 = s.initial_packet();
    let spec = EnsembleSpec { size: 1000, seed: 5, sampling: Sampling::Density };
    let pts = sample_ensemble(&p0, 1.0, &spec)?;
    let again = sample_ensemble(&p0, 1.0, &spec)?;
    let cov = crate::trajectories::density_covariance(&p0.a, 1.0).unwrap_or_else(Mat2::identity);
    let mean = pts.iter().fold(Vec2::zeros(), |a, p| a + p) / pts.len() as f64;
    let z = (0..2).map(|i| (mean[i] - p0.q_c[i]).abs() / (cov[(i, i)].sqrt() / (pts.len() as f64).sqrt())).fold(0.0, f64::max);
    let fig6 = preset("fig6")?;
    let refused = sample_ensemble(&fig6.initial_packet(), 1.0, &EnsembleSpec { size: 4, seed: 1, sampling: Sampling::Density }).is_err();
    let ok = z < 4.0 && pts == again && refused;
    Ok((ok, format!("mean offset {z:.2} σ/√N, deterministic {}, fig6 density refused {refused}", pts == again)))
}

fn check_q_oracle(ctx: &mut Context) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for name in PRESET_NAMES {
        let sim = ctx.sim(name)?;
        for (packet, _, guidance) in packets(sim) {
            if guidance != *packet.model.g() {
                continue;
            }
            for _ in 0..100 {
                let k = rng.random_range(0..packet.len());
                let s = packet.state(k);
                let q = s.q_c + Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                let fd = quantum_potential_fd(&q, s, &packet.model, 1e-3)?;
                worst = worst.max((fd - quantum_potential(&q, s, &packet.model)).abs());
            }
        }
    }
    Ok((worst < 1e-4, format!("max |Q_analytic − Q_fd| over 100 points per packet = {}", fmt(worst))))
}

fn q_drift(packet: &PacketSeries) -> f64 {
    let trace = 0.5 * (packet.model.g() * packet.state(0).a).trace();
    packet
        .states
        .iter()
        .map(|s| (quantum_potential(&s.q_c, s, &packet.model) - trace).abs())
        .fold(0.0, f64::max)
}

fn check_q_spot(ctx: &mut Context) -> Outcome {
    let exact = q_drift(&exact_rigid_packet()?);
    let run = ctx.single("fig1")?;
    let s0 = run.packet.state(0);
    let q = quantum_potential(&s0.q_c, s0, &run.model);
    let trace = 0.5 * (run.model.g() * s0.a).trace();
    let ok = (q - trace).abs() < 1e-9 && (q + 0.0763889).abs() < 5e-8 && exact < 1e-8;
    Ok((ok, format!("Q(q_c) = {q:.10}, ½Tr(GA(0)) = {trace:.10}, drift along centre with exact C {}", fmt(exact))))
}

fn check_q_constant_preset(ctx: &mut Context) -> Outcome {
    let drift = q_drift(&ctx.single("fig1")?.packet);
    Ok((drift < 1e-8, format!("fig1: max |Q(q_c(t)) − ½Tr(GA(0))| = {}", fmt(drift))))
}

fn check_identities(ctx: &mut Context) -> Outcome {
    let (mut w1, mut w2) = (0.0f64, 0.0f64);
    for name in PRESET_NAMES {
        let sim = ctx.sim(name)?;
        for (packet, members, guidance) in packets(sim) {
            if guidance != *packet.model.g() {
                continue;
            }
            for m in members {
                let (e1, e2) = identity_errors(packet, m, &guidance);
                w1 = w1.max(e1);
                w2 = w2.max(e2);
            }
        }
    }
    Ok((w1 < 1e-5 && w2 < 1e-4, format!("norm growth rel err {}, second-order rel err {}", fmt(w1), fmt(w2))))
}

fn check_regime_labels(ctx: &mut Context) -> Outcome {
    let expected = [
        ("fig1", Regime::RigidTransport),
        ("fig2", Regime::RigidTransport),
        ("fig3", Regime::QuasiSemiclassical),
        ("fig4", Regime::SpiralInstability),
        ("fig5", Regime::CriticalRunaway),
        ("fig6", Regime::NonNormalisableSector),
    ];
    let mut ok = true;
    let mut got = Vec::new();
    for (name, want) in expected {
        let run = ctx.single(name)?;
        let label = run.regime.as_ref().map(|l| l.regime.to_string()).unwrap_or_else(|e| e.clone());
        ok &= run.regime.as_ref().is_ok_and(|l| l.regime == want);
        got.push(format!("{name}={label}"));
    }
    Ok((ok, got.join(", ")))
}

fn check_biham_reference(ctx: &mut Context) -> Outcome {
    let Simulation::BiHamiltonian(cmp) = ctx.sim("fig7")? else { unreachable!() };
    let d = cmp.classical_discrepancy();
    Ok((d < 1e-10, format!("classical ensembles differ by {}", fmt(d))))
}

fn check_biham_inequivalence(ctx: &mut Context) -> Outcome {
    let Simulation::BiHamiltonian(cmp) = ctx.sim("fig7")? else { unreachable!() };
    let gap = cmp.max_gap();
    let dg = *cmp.rep_g.mean_delta_norm().last().unwrap_or(&f64::NAN);
    let d2 = *cmp.rep_2.mean_delta_norm().last().unwrap_or(&f64::NAN);
    let (vg, v2) = (cmp.rep_g.q_b_variance(), cmp.rep_2.q_b_variance());
    let ok = gap > 1e-2 && d2 >= dg && v2 > vg;
    Ok((ok, format!("max gap {}, final |Δ_g| {}, |Δ_2| {}, var Q_g {}, var Q_2 {}", fmt(gap), fmt(dg), fmt(d2), fmt(vg), fmt(v2))))
}

fn check_presets_round_trip(_: &mut Context) -> Outcome {
    let mut bad = Vec::new();
    for name in PRESET_NAMES {
        let s = preset(name)?;
        if Scenario::from_toml(&s.to_toml(), name)? != s {
            bad.push(name);
        }
    }
    Ok((bad.is_empty(), if bad.is_empty() { "all presets round-trip".into() } else { format!("differ: {bad:?}") }))
}

fn check_negative_control(ctx: &mut Context) -> Outcome {
    let s = preset("fig1")?;
    let model = ghost_model("fig1")?;
    let mut g = *model.g();
    g[(0, 1)] += 1e-3;
    g[(1, 0)] += 1e-3;
    let perturbed = model.with_kinetic(g)?;
    let packet = evolve_packet(&s.initial_packet(), &perturbed, &s.time_grid()?, &s.integrator())?;
    let (l, _, _) = rigid_metrics(&packet);
    let (l0, _, _) = rigid_metrics(&ctx.single("fig1")?.packet);
    let ok = l0 < 1e-4 && l >= 1e-4;
    Ok((ok, format!("sup Λ: unperturbed {}, G offdiag +1e-3 {}; vanishing-Λ test rejects the perturbed run: {}", fmt(l0), fmt(l), l >= 1e-4)))
}

fn check_hbar_invariance(ctx: &mut Context) -> Outcome {
    let mut s = preset("fig1")?;
    s.model.set_hbar(2.0);
    let Simulation::Single(run) = simulate(&s, ctx.execution)? else { unreachable!() };
    let label = run.regime.as_ref().map(|l| l.regime);
    let ok = label.as_ref().is_ok_and(|r| *r == Regime::RigidTransport);
    Ok((ok, format!("fig1 at ħ = 2: {}", label.map(|r| r.to_string()).unwrap_or_else(|e| e.clone()))))
}

fn check_determinism(_: &mut Context) -> Outcome {
    let mut s = preset("fig3")?;
    s.grid.t_end = 20.0;
    let csv = |execution| -> Result<Vec<u8>> {
        let sim = simulate(&s, execution)?;
        let (_, bundle) = bundles(&s, &sim, execution)?.remove(0);
        to_csv_bytes(&bundle)
    };
    let (a, b, c) = (csv(Execution::Parallel)?, csv(Execution::Sequential)?, csv(Execution::Parallel)?);
    let ok = a == b && a == c;
    Ok((ok, format!("{} bytes, parallel = sequential = rerun: {ok}", a.len())))
}

fn check_plots(ctx: &mut Context) -> Outcome {
    let s = preset("fig1")?;
    let run = ctx.single("fig1")?;
    let meta = Metadata {
        tool_version: String::new(),
        seed: s.ensemble.seed,
        plane: "x-y".into(),
        representation: None,
        scenario: serde_json::json!({"name": "fig1"}),
    };
    let bundle = build_bundle(&run.packet, &run.ensemble, &run.diagnostics, run.model.g(), meta.clone());
    let svg = render_trajectories(&bundle)?;
    let lines = svg.matches("<polyline").count();
    let expect = 2 * run.ensemble.size() + 1;

    let run4 = ctx.single("fig4")?;
    let b4 = build_bundle(&run4.packet, &run4.ensemble, &run4.diagnostics, run4.model.g(), meta);
    let t_end = run4.packet.final_state().t;
    let grew = match (
        bounding_box(&b4, TrajectoryKind::Bohmian, 0.5 * t_end),
        bounding_box(&b4, TrajectoryKind::Bohmian, t_end),
    ) {
        (Some(half), Some(full)) => full.strictly_exceeds(&half),
        _ => false,
    };
    Ok((lines == expect && grew, format!("fig1 polylines {lines} (expected {expect}); fig4 Bohmian box grows: {grew}")))
}

pub fn registry() -> Vec<Check> {
    macro_rules! check {
        ($id:literal, $module:literal, $desc:literal, $f:ident) => {
            Check { id: $id, module: $module, description: $desc, run: $f }
        };
    }
    vec![
        check!("model.symmetry", "model", "G, C symmetric and GᵀG = I for ghost presets", check_model_symmetry),
        check!("model.spectrum-pairing", "model", "flow eigenvalues closed under negation and conjugation", check_spectrum_pairing),
        check!("model.stability-classes", "model", "fig1 bounded, fig4 spiral, fig5 and free motion critical", check_stability_classes),
        check!("model.critical-root", "model", "root of det C(Omega) matches the fig5 value", check_critical_root),
        check!("model.biham-equivalence", "model", "J_g∇H_g = J_2∇H_2 on random points; shared flow matrix", check_biham_residual),
        check!("evolve.riccati-oracle", "evolve", "RK4 Riccati vs linearisation oracle at t = 10", check_riccati_oracle),
        check!("evolve.centre-ehrenfest", "evolve", "packet centre follows the classical trajectory", check_centre_ehrenfest),
        check!("evolve.symmetry", "evolve", "A and B stay symmetric", check_symmetry_preserved),
        check!("evolve.rigid-fixed-point", "evolve", "Λ(0) = 0, B(0) = 0 keeps A, B constant", check_rigid_fixed_point),
        check!("evolve.rigid-preset", "evolve", "rigid presets: sup Λ < 1e-4, ΔA < 1e-6, B < 1e-6", check_rigid_preset),
        check!("evolve.obstruction", "evolve", "Λ = 0 only where det C < 0", check_obstruction),
        check!("evolve.normalisable-flag", "evolve", "normalisable flag equals positive margin", check_normalisable_flag),
        check!("trajectories.equivariance", "trajectories", "A(t) = U⁻ᵀA(0)U⁻¹", check_equivariance),
        check!("trajectories.flow-reconstruction", "trajectories", "q_B = q_c + U(t)u(0)", check_flow_reconstruction),
        check!("trajectories.rigid-u", "trajectories", "mean |u| constant under rigid transport", check_rigid_u_constant),
        check!("trajectories.centre-member", "trajectories", "zero offset follows the packet centre", check_centre_member),
        check!("trajectories.sampling", "trajectories", "density sampling mean, determinism, refusal", check_sampling),
        check!("diagnostics.q-oracle", "diagnostics", "closed-form Q vs finite differences of R", check_q_oracle),
        check!("diagnostics.q-spot", "diagnostics", "Q(q_c) = ½Tr(GA(0)) along the rigid centre", check_q_spot),
        check!("diagnostics.q-constant-preset", "diagnostics", "fig1: Q(q_c) constant within 1e-8", check_q_constant_preset),
        check!("diagnostics.identities", "diagnostics", "norm-growth and second-order identities", check_identities),
        check!("diagnostics.regime-labels", "diagnostics", "preset regime labels", check_regime_labels),
        check!("diagnostics.biham-reference", "diagnostics", "classical reference independent of representation", check_biham_reference),
        check!("diagnostics.biham-inequivalence", "diagnostics", "Bohmian ensembles of the pair differ", check_biham_inequivalence),
        check!("cli.preset-round-trip", "cli-io", "presets survive serialisation", check_presets_round_trip),
        check!("cli.negative-control", "cli-io", "perturbed G breaks the vanishing-Λ test", check_negative_control),
        check!("cli.hbar-invariance", "cli-io", "fig1 label unchanged at ħ = 2", check_hbar_invariance),
        check!("cli.determinism", "cli-io", "CSV identical across execution modes and reruns", check_determinism),
        check!("cli.plots", "cli-io", "polyline count and spiral bounding-box growth", check_plots),
    ]
}

pub fn validate(execution: Execution) -> ValidationReport {
    let mut ctx = Context::new(execution);
    let checks = registry().iter().map(|c| c.run(&mut ctx)).collect();
    ValidationReport { tool_version: crate::export::TOOL_VERSION, checks }
}
