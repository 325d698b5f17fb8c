//! Bohmian comparison of the two classically equivalent representations of
//! the degenerate ghost oscillator.

use serde::{Deserialize, Serialize};

use crate::diagnostics::quantum_potential_with;
use crate::error::Result;
use crate::evolve::{evolve_packet, IntegratorConfig, PacketSeries, PacketState, TimeGrid};
use crate::linalg::{pairwise_mean, Mat2, Mat4, Vec2};
use crate::model::{BiHamiltonianPair, QuadraticModel};
use crate::parallel::Execution;
use crate::trajectories::{propagate_ensemble, Ensemble};

/// How the guidance tensor is read off the bi-Hamiltonian pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BihamConvention {
    /// `q̇ = 𝒢_α∇S` with `𝒢_α` the kinetic tensor of `½pᵀ𝒢p`; the centre
    /// member then moves with its packet.
    #[default]
    Canonical,
    /// `q̇ = G_α∇S` with `G_α` the coefficient of `pᵀG_αp` as printed, half
    /// the canonical velocity.
    PaperLiteral,
}

impl std::str::FromStr for BihamConvention {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(format!("unknown convention `{other}` (expected canonical or paper-literal)")),
        }
    }
}

impl BihamConvention {
    pub fn guidance(&self, model: &QuadraticModel) -> Mat2 {
        match self {
            BihamConvention::Canonical => *model.g(),
            BihamConvention::PaperLiteral => model.g() * 0.5,
        }
    }
}

/// Packet, ensemble and per-member series for one representation.
#[derive(Debug, Clone)]
pub struct RepresentationRun {
    pub label: String,
    pub guidance: Mat2,
    pub packet: PacketSeries,
    /// Classical members here follow this representation's own flow
    /// matrix `J_α·Hess(H_α)`.
    pub ensemble: Ensemble,
    /// `Δ_α(t) = q_{B,α}(t) − q_cl(t)` against the shared classical
    /// reference, per member.
    pub delta: Vec<Vec<Vec2>>,
    /// `Q_α(q_{B,α}(t), t)` per member.
    pub q_b: Vec<Vec<Option<f64>>>,
}

impl RepresentationRun {
    pub fn mean_delta_norm(&self) -> Vec<f64> {
        mean_over_members(&self.delta, |d| d.norm())
    }

    pub fn mean_q_b(&self) -> Vec<f64> {
        let n = self.q_b.iter().map(Vec::len).min().unwrap_or(0);
        (0..n)
            .map(|k| pairwise_mean(&self.q_b.iter().filter_map(|m| m[k]).collect::<Vec<_>>()))
            .collect()
    }

    /// Sample variance over time of the ensemble-mean `Q_B(t)`.
    pub fn q_b_variance(&self) -> f64 {
        sample_variance(&self.mean_q_b())
    }
}

fn mean_over_members<T>(series: &[Vec<T>], f: impl Fn(&T) -> f64) -> Vec<f64> {
    let n = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..n).map(|k| pairwise_mean(&series.iter().map(|m| f(&m[k])).collect::<Vec<_>>())).collect()
}

pub fn sample_variance(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return 0.0;
    }
    let mean = pairwise_mean(&finite);
    let sq: Vec<f64> = finite.iter().map(|v| (v - mean) * (v - mean)).collect();
    crate::linalg::pairwise_sum(&sq) / (finite.len() - 1) as f64
}

#[derive(Debug, Clone)]
pub struct BihamComparison {
    pub convention: BihamConvention,
    pub times: Vec<f64>,
    pub rep_g: RepresentationRun,
    pub rep_2: RepresentationRun,
    /// `‖q_{B,g}(t) − q_{B,2}(t)‖` per member.
    pub gap: Vec<Vec<f64>>,
}

impl BihamComparison {
    /// The shared classical reference (ghost representation flow).
    pub fn classical(&self) -> &[crate::trajectories::TrajectorySeries] {
        &self.rep_g.ensemble.classical
    }

    pub fn max_gap(&self) -> f64 {
        self.gap.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Largest pointwise distance between the classical ensembles built
    /// from the two representations' flows.
    pub fn classical_discrepancy(&self) -> f64 {
        self.rep_g
            .ensemble
            .classical
            .iter()
            .zip(&self.rep_2.ensemble.classical)
            .flat_map(|(a, b)| {
                let pa = a.positions.iter().zip(&b.positions).map(|(x, y)| (x - y).amax());
                let ma = a.momenta.iter().flatten().zip(b.momenta.iter().flatten()).map(|(x, y)| (x - y).amax());
                pa.chain(ma).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    pub fn mean_gap(&self) -> Vec<f64> {
        mean_over_members(&self.gap, |g| *g)
    }
}

fn run_representation(
    model: &QuadraticModel,
    classical_flow: &Mat4,
    packet0: &PacketState,
    initial_positions: &[Vec2],
    grid: &TimeGrid,
    convention: BihamConvention,
    config: &IntegratorConfig,
    execution: Execution,
) -> Result<(PacketSeries, Ensemble, Mat2)> {
    let packet = evolve_packet(packet0, model, grid, config)?;
    let guidance = convention.guidance(model);
    let ensemble = propagate_ensemble(&packet, initial_positions, &guidance, classical_flow, config, execution)?;
    Ok((packet, ensemble, guidance))
}

/// Evolves the same initial packet and the same initial positions under both
/// representations and compares the resulting Bohmian ensembles against the
/// shared classical flow.
pub fn biham_compare(
    pair: &BiHamiltonianPair,
    packet0: &PacketState,
    offsets: &[Vec2],
    grid: &TimeGrid,
    convention: BihamConvention,
    config: &IntegratorConfig,
    execution: Execution,
) -> Result<BihamComparison> {
    let initial: Vec<Vec2> = offsets.iter().map(|u| packet0.q_c + u).collect();
    let (packet_g, ens_g, guid_g) = run_representation(
        &pair.model_g,
        &pair.flow_matrix_g(),
        packet0,
        &initial,
        grid,
        convention,
        config,
        execution,
    )?;
    let (packet_2, ens_2, guid_2) = run_representation(
        &pair.model_2,
        &pair.flow_matrix_2(),
        packet0,
        &initial,
        grid,
        convention,
        config,
        execution,
    )?;

    let reference = &ens_g.classical;
    let n = reference
        .iter()
        .chain(&ens_2.classical)
        .map(|s| s.len())
        .chain(ens_g.bohmian.iter().chain(&ens_2.bohmian).map(|b| b.series.len()))
        .min()
        .unwrap_or(0);

    let per_rep = |ens: &Ensemble, packet: &PacketSeries, guidance: &Mat2| {
        let delta: Vec<Vec<Vec2>> = ens
            .bohmian
            .iter()
            .zip(reference)
            .map(|(b, c)| (0..n).map(|k| b.series.positions[k] - c.positions[k]).collect())
            .collect();
        let q_b: Vec<Vec<Option<f64>>> = ens
            .bohmian
            .iter()
            .map(|b| {
                (0..n)
                    .map(|k| {
                        let v = quantum_potential_with(&b.series.positions[k], packet.state(k), guidance, packet.model.hbar());
                        v.is_finite().then_some(v)
                    })
                    .collect()
            })
            .collect();
        (delta, q_b)
    };
    let (delta_g, q_b_g) = per_rep(&ens_g, &packet_g, &guid_g);
    let (delta_2, q_b_2) = per_rep(&ens_2, &packet_2, &guid_2);
    let gap = ens_g
        .bohmian
        .iter()
        .zip(&ens_2.bohmian)
        .map(|(a, b)| (0..n).map(|k| (a.series.positions[k] - b.series.positions[k]).norm()).collect())
        .collect();

    Ok(BihamComparison {
        convention,
        times: (0..n).map(|k| grid.time(k)).collect(),
        rep_g: RepresentationRun {
            label: "H_g".into(),
            guidance: guid_g,
            packet: packet_g,
            ensemble: ens_g,
            delta: delta_g,
            q_b: q_b_g,
        },
        rep_2: RepresentationRun {
            label: "H_2".into(),
            guidance: guid_2,
            packet: packet_2,
            ensemble: ens_2,
            delta: delta_2,
            q_b: q_b_2,
        },
        gap,
    })
}
