//! Classical and Bohmian trajectory ensembles guided by an evolved packet.

use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{normalisability_margin, IntegratorConfig, PacketSeries, PacketState, TimeGrid};
use crate::linalg::{max_abs, sym_eigenvalues, sym_eigenvectors, Mat2, Mat4, Vec2};
use crate::model::QuadraticModel;
use crate::parallel::{map_members, Execution};

#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Draw from `|ψ(q, 0)|²`.
    Density,
    /// Explicit initial deviations `u(0)` from the packet centre.
    FixedOffsets(Vec<Vec2>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub size: usize,
    pub seed: u64,
    pub sampling: Sampling,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidEnsemble("size must be at least 1".into()));
        }
        if let Sampling::FixedOffsets(offsets) = &self.sampling {
            if offsets.len() != self.size {
                return Err(Error::InvalidEnsemble(format!(
                    "{} offsets supplied for an ensemble of size {}",
                    offsets.len(),
                    self.size
                )));
            }
        }
        Ok(())
    }
}

/// One ChaCha stream per member, so draws do not depend on evaluation order.
fn member_rng(seed: u64, member: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    rng
}

fn standard_normal_pair(rng: &mut ChaCha8Rng) -> Vec2 {
    Vec2::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Lower Cholesky factor of a symmetric positive-definite 2×2 matrix.
fn cholesky2(cov: &Mat2) -> Mat2 {
    let l11 = cov[(0, 0)].sqrt();
    let l21 = cov[(1, 0)] / l11;
    let l22 = (cov[(1, 1)] - l21 * l21).sqrt();
    Mat2::new(l11, 0.0, l21, l22)
}

/// Covariance `(ħ/2)A⁻¹` of `|ψ|²` for a normalisable packet.
pub fn density_covariance(a: &Mat2, hbar: f64) -> Option<Mat2> {
    a.try_inverse().map(|inv| inv * (0.5 * hbar))
}

pub fn sample_ensemble(packet0: &PacketState, hbar: f64, spec: &EnsembleSpec) -> Result<Vec<Vec2>> {
    spec.validate()?;
    match &spec.sampling {
        Sampling::FixedOffsets(offsets) => Ok(offsets.iter().map(|u| packet0.q_c + u).collect()),
        Sampling::Density => {
            let margin = normalisability_margin(packet0);
            if !(margin > 0.0) {
                return Err(Error::NonNormalisable { margin });
            }
            let cov = density_covariance(&packet0.a, hbar).ok_or(Error::NonNormalisable { margin })?;
            let chol = cholesky2(&cov);
            Ok((0..spec.size)
                .map(|m| {
                    let mut rng = member_rng(spec.seed, m);
                    packet0.q_c + chol * standard_normal_pair(&mut rng)
                })
                .collect())
        }
    }
}

/// Offsets drawn from the Gaussian with covariance `(ħ/2)|A|⁻¹`, where
/// `|A|` replaces the eigenvalues of `A` by their magnitudes. Used to build
/// fixed-offset ensembles for packets whose `|ψ|²` is not a density.
pub fn reference_offsets(a: &Mat2, hbar: f64, size: usize, seed: u64) -> Vec<Vec2> {
    let vals = sym_eigenvalues(a);
    let vecs = sym_eigenvectors(a);
    let abs_inv = Mat2::from_diagonal(&Vec2::new(1.0 / vals[0].abs(), 1.0 / vals[1].abs()));
    let cov = vecs * abs_inv * vecs.transpose() * (0.5 * hbar);
    let chol = cholesky2(&crate::linalg::symmetrize(&cov));
    (0..size)
        .map(|m| {
            let mut rng = member_rng(seed, m);
            chol * standard_normal_pair(&mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Centre,
    Classical,
    Bohmian,
}

impl TrajectoryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrajectoryKind::Centre => "centre",
            TrajectoryKind::Classical => "classical",
            TrajectoryKind::Bohmian => "bohmian",
        }
    }
}

impl std::str::FromStr for TrajectoryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "centre" => Ok(TrajectoryKind::Centre),
            "classical" => Ok(TrajectoryKind::Classical),
            "bohmian" => Ok(TrajectoryKind::Bohmian),
            other => Err(format!("unknown trajectory kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySeries {
    pub member_id: usize,
    pub kind: TrajectoryKind,
    pub times: Vec<f64>,
    pub positions: Vec<Vec2>,
    /// Present for classical and centre series.
    pub momenta: Option<Vec<Vec2>>,
    /// Set when the series stopped early at the overflow guard.
    pub truncated_at: Option<usize>,
}

impl TrajectorySeries {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn with_member(mut self, id: usize) -> Self {
        self.member_id = id;
        self
    }
}

fn rk4_linear(flow: &Mat4, z: &Vector4<f64>, h: f64) -> Vector4<f64> {
    let k1 = flow * z;
    let k2 = flow * (z + k1 * (0.5 * h));
    let k3 = flow * (z + k2 * (0.5 * h));
    let k4 = flow * (z + k3 * h);
    z + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// RK4 for the linear phase-space flow `ż = F z` on the grid.
pub fn evolve_linear_flow(
    z0: &Vector4<f64>,
    flow: &Mat4,
    grid: &TimeGrid,
    config: &IntegratorConfig,
) -> (Vec<Vector4<f64>>, Option<usize>) {
    let mut out = Vec::with_capacity(grid.len());
    out.push(*z0);
    let mut z = *z0;
    for k in 1..grid.len() {
        z = rk4_linear(flow, &z, grid.step());
        if !(max_abs(&z) <= config.overflow_guard) {
            return (out, Some(k));
        }
        out.push(z);
    }
    (out, None)
}

fn phase_series(kind: TrajectoryKind, grid: &TimeGrid, points: Vec<Vector4<f64>>, truncated_at: Option<usize>) -> TrajectorySeries {
    let times = (0..points.len()).map(|k| grid.time(k)).collect();
    let positions = points.iter().map(|z| Vec2::new(z[0], z[1])).collect();
    let momenta = points.iter().map(|z| Vec2::new(z[2], z[3])).collect();
    TrajectorySeries { member_id: 0, kind, times, positions, momenta: Some(momenta), truncated_at }
}

/// Classical trajectory `q̇ = Gp, ṗ = −Cq` from `(q0, p0)`.
pub fn evolve_classical(
    q0: &Vec2,
    p0: &Vec2,
    model: &QuadraticModel,
    grid: &TimeGrid,
    config: &IntegratorConfig,
) -> TrajectorySeries {
    evolve_classical_flow(q0, p0, &model.flow_matrix(), grid, config)
}

/// Classical trajectory under an arbitrary linear flow matrix, e.g. the
/// non-canonical `J₂·Hess(H₂)`.
pub fn evolve_classical_flow(
    q0: &Vec2,
    p0: &Vec2,
    flow: &Mat4,
    grid: &TimeGrid,
    config: &IntegratorConfig,
) -> TrajectorySeries {
    let z0 = Vector4::new(q0[0], q0[1], p0[0], p0[1]);
    let (points, truncated) = evolve_linear_flow(&z0, flow, grid, config);
    phase_series(TrajectoryKind::Classical, grid, points, truncated)
}

/// The packet centre as a trajectory.
pub fn centre_series(packet: &PacketSeries) -> TrajectorySeries {
    TrajectorySeries {
        member_id: 0,
        kind: TrajectoryKind::Centre,
        times: packet.states.iter().map(|s| s.t).collect(),
        positions: packet.states.iter().map(|s| s.q_c).collect(),
        momenta: Some(packet.states.iter().map(|s| s.p_c).collect()),
        truncated_at: packet.truncation.map(|t| t.index),
    }
}

/// Guidance velocity `G(p_c − B(q − q_c))`.
pub fn bohmian_velocity(q: &Vec2, state: &PacketState, model: &QuadraticModel) -> Vec2 {
    guided_velocity(q, state, model.g())
}

pub fn guided_velocity(q: &Vec2, state: &PacketState, guidance: &Mat2) -> Vec2 {
    guidance * state.phase_gradient(q)
}

/// A Bohmian trajectory together with the internal flow `U(t)` solving
/// `U̇ = −GB(t)U`, `U(0) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmianTrajectory {
    pub series: TrajectorySeries,
    /// `U(t_k) − I`, kept separately so near-identity flows do not lose
    /// their increments to rounding against `I`.
    pub flow_offset: Vec<Mat2>,
    pub initial_offset: Vec2,
}

impl BohmianTrajectory {
    pub fn len(&self) -> usize {
        self.flow_offset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flow_offset.is_empty()
    }

    /// `U(t_k)`.
    pub fn flow(&self, k: usize) -> Mat2 {
        Mat2::identity() + self.flow_offset[k]
    }

    /// `u(t_k) − u(0) = (U(t_k) − I) u(0)`.
    pub fn displacement(&self, k: usize) -> Vec2 {
        self.flow_offset[k] * self.initial_offset
    }

    /// `u(t_k) = U(t_k) u(0)` from the internal flow.
    pub fn deviation(&self, k: usize) -> Vec2 {
        self.initial_offset + self.displacement(k)
    }

    /// `q_c(t_k) + U(t_k) u(0)`.
    pub fn reconstructed(&self, packet: &PacketSeries, k: usize) -> Vec2 {
        packet.state(k).q_c + self.deviation(k)
    }
}

fn check_grid(grid: &TimeGrid, packet: &PacketSeries) -> Result<()> {
    let pg = &packet.grid;
    let same = (grid.t_start() - pg.t_start()).abs() <= 1e-12 * pg.step()
        && (grid.step() - pg.step()).abs() <= 1e-15 * pg.step().max(1.0)
        && grid.steps() <= pg.steps();
    if same {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "requested [{}, {}] step {} but packet covers [{}, {}] step {}",
            grid.t_start(),
            grid.t_end(),
            grid.step(),
            pg.t_start(),
            pg.t_end(),
            pg.step()
        )))
    }
}

/// Integrates `q̇ = G∇S(q, t)` along the packet with RK4; half-step packet
/// values come from the series' Hermite midpoints.
pub fn evolve_bohmian(q0: &Vec2, packet: &PacketSeries, grid: &TimeGrid) -> Result<BohmianTrajectory> {
    evolve_bohmian_guided(q0, packet, grid, packet.model.g())
}

/// As [`evolve_bohmian`] with an explicit guidance tensor.
pub fn evolve_bohmian_guided(
    q0: &Vec2,
    packet: &PacketSeries,
    grid: &TimeGrid,
    guidance: &Mat2,
) -> Result<BohmianTrajectory> {
    check_grid(grid, packet)?;
    let n = grid.len().min(packet.len());
    let truncated_at = (n < grid.len()).then_some(n);
    let h = grid.step();
    let initial_offset = q0 - packet.state(0).q_c;

    let mut positions = Vec::with_capacity(n);
    let mut flow_offset = Vec::with_capacity(n);
    let mut q = *q0;
    let mut w = Mat2::zeros();
    positions.push(q);
    flow_offset.push(w);
    for k in 0..n.saturating_sub(1) {
        let (s0, sm, s1) = (packet.state(k), packet.midpoint(k), packet.state(k + 1));

        let k1 = guided_velocity(&q, s0, guidance);
        let k2 = guided_velocity(&(q + k1 * (0.5 * h)), sm, guidance);
        let k3 = guided_velocity(&(q + k2 * (0.5 * h)), sm, guidance);
        let k4 = guided_velocity(&(q + k3 * h), s1, guidance);
        q += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);

        let (m0, mm, m1) = (-(guidance * s0.b), -(guidance * sm.b), -(guidance * s1.b));
        // Ẇ = M(I + W) with W = U − I
        let id = Mat2::identity();
        let j1 = m0 * (id + w);
        let j2 = mm * (id + w + j1 * (0.5 * h));
        let j3 = mm * (id + w + j2 * (0.5 * h));
        let j4 = m1 * (id + w + j3 * h);
        w += (j1 + (j2 + j3) * 2.0 + j4) * (h / 6.0);

        positions.push(q);
        flow_offset.push(w);
    }
    let series = TrajectorySeries {
        member_id: 0,
        kind: TrajectoryKind::Bohmian,
        times: (0..n).map(|k| grid.time(k)).collect(),
        positions,
        momenta: None,
        truncated_at,
    };
    Ok(BohmianTrajectory { series, flow_offset, initial_offset })
}

/// Centre, classical and Bohmian members sharing one packet.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub centre: TrajectorySeries,
    pub classical: Vec<TrajectorySeries>,
    pub bohmian: Vec<BohmianTrajectory>,
}

impl Ensemble {
    pub fn size(&self) -> usize {
        self.bohmian.len()
    }
}

/// Propagates every member from `initial_positions`. Classical members
/// start with `p(0) = ∇S(q(0), 0)` and follow `classical_flow`; Bohmian
/// members follow `guidance`.
pub fn propagate_ensemble(
    packet: &PacketSeries,
    initial_positions: &[Vec2],
    guidance: &Mat2,
    classical_flow: &Mat4,
    config: &IntegratorConfig,
    execution: Execution,
) -> Result<Ensemble> {
    let grid = packet.grid;
    let start = packet.state(0);
    let members: Vec<Result<(TrajectorySeries, BohmianTrajectory)>> =
        map_members(execution, initial_positions.len(), |m| {
            let q0 = initial_positions[m];
            let p0 = start.phase_gradient(&q0);
            let classical = evolve_classical_flow(&q0, &p0, classical_flow, &grid, config).with_member(m);
            let mut bohmian = evolve_bohmian_guided(&q0, packet, &grid, guidance)?;
            bohmian.series.member_id = m;
            Ok((classical, bohmian))
        });
    let mut classical = Vec::with_capacity(members.len());
    let mut bohmian = Vec::with_capacity(members.len());
    for member in members {
        let (c, b) = member?;
        classical.push(c);
        bohmian.push(b);
    }
    Ok(Ensemble { centre: centre_series(packet), classical, bohmian })
}
