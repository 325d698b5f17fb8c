//! Quadratic models `H = ½ pᵀ G p + ½ qᵀ C q` on a two-dimensional
//! configuration space, their linear classical flow, and the degenerate
//! bi-Hamiltonian pair.
//!
//! `G` is allowed to be indefinite. The ghost model uses the Lorentzian
//! metric `G = diag(1, -1)`; higher-derivative theories reduced to first
//! order land in the same form with a general symmetric `G`.

use nalgebra::Vector4;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{block4, is_finite2, max_abs, symmetrize, Mat2, Mat4, Vec2};

/// Relative spectral tolerance used by [`flow_spectrum`].
pub const SPECTRAL_TOLERANCE: f64 = 1e-8;
/// Absolute `|det C|` below which a model is treated as critical.
pub const DET_C_TOLERANCE: f64 = 1e-8;
/// Smallest admissible `|ν² − Ω|` for the bi-Hamiltonian pair.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    g: Mat2,
    c: Mat2,
    hbar: f64,
    label: String,
}

impl QuadraticModel {
    /// Builds a model from a kinetic tensor and curvature matrix. Both are
    /// symmetrised; `G` must be invertible and `ħ` positive.
    pub fn new(g: Mat2, c: Mat2, hbar: f64, label: impl Into<String>) -> Result<Self> {
        if !is_finite2(&g) || !is_finite2(&c) {
            return Err(Error::InvalidModel("G and C must be finite".into()));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidModel(format!("hbar must be positive, got {hbar}")));
        }
        let g = symmetrize(&g);
        let c = symmetrize(&c);
        if g.determinant().abs() <= f64::EPSILON * max_abs(&g).powi(2) || max_abs(&g) == 0.0 {
            return Err(Error::InvalidModel("kinetic tensor G is singular".into()));
        }
        Ok(Self { g, c, hbar, label: label.into() })
    }

    pub fn g(&self) -> &Mat2 {
        &self.g
    }

    pub fn c(&self) -> &Mat2 {
        &self.c
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn det_c(&self) -> f64 {
        self.c.determinant()
    }

    /// Same model with a different ħ.
    pub fn with_hbar(&self, hbar: f64) -> Result<Self> {
        Self::new(self.g, self.c, hbar, self.label.clone())
    }

    /// Same model with a different kinetic tensor.
    pub fn with_kinetic(&self, g: Mat2) -> Result<Self> {
        Self::new(g, self.c, self.hbar, self.label.clone())
    }

    /// `F = [[0, G], [−C, 0]]`, so that `ż = F z` with `z = (q, p)`.
    pub fn flow_matrix(&self) -> Mat4 {
        block4(&Mat2::zeros(), &self.g, &(-self.c), &Mat2::zeros())
    }

    /// Hessian of `H` in phase space, `diag(C, G)`.
    pub fn hessian(&self) -> Mat4 {
        block4(&self.c, &Mat2::zeros(), &Mat2::zeros(), &self.g)
    }

    pub fn energy(&self, q: &Vec2, p: &Vec2) -> f64 {
        0.5 * p.dot(&(self.g * p)) + 0.5 * q.dot(&(self.c * q))
    }
}

/// Ghost oscillator `½(p_x² − p_y²) + ν²x² + Ωy² + gxy`.
pub fn build_ghost_model(nu: f64, omega: f64, g: f64, hbar: f64) -> Result<QuadraticModel> {
    for (name, value) in [("nu", nu), ("Omega", omega), ("g", g), ("hbar", hbar)] {
        if !value.is_finite() {
            return Err(Error::NonFinite { name, value });
        }
    }
    let kinetic = Mat2::new(1.0, 0.0, 0.0, -1.0);
    let curvature = Mat2::new(2.0 * nu * nu, g, g, 2.0 * omega);
    QuadraticModel::new(kinetic, curvature, hbar, format!("ghost(nu={nu}, Omega={omega}, g={g})"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityClass {
    BoundedOscillatory,
    SpiralUnstable,
    Critical,
    HyperbolicUnstable,
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StabilityClass::BoundedOscillatory => "bounded-oscillatory",
            StabilityClass::SpiralUnstable => "spiral-unstable",
            StabilityClass::Critical => "critical",
            StabilityClass::HyperbolicUnstable => "hyperbolic-unstable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralTolerances {
    /// Relative to the largest eigenvalue modulus.
    pub relative: f64,
    /// Absolute bound on `|det C|`.
    pub det_c: f64,
}

impl Default for SpectralTolerances {
    fn default() -> Self {
        Self { relative: SPECTRAL_TOLERANCE, det_c: DET_C_TOLERANCE }
    }
}

#[derive(Debug, Clone)]
pub struct FlowSpectrum {
    pub flow: Mat4,
    pub eigenvalues: [Complex64; 4],
    pub class: StabilityClass,
}

impl FlowSpectrum {
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn flow_spectrum(model: &QuadraticModel) -> FlowSpectrum {
    flow_spectrum_with(model, SpectralTolerances::default())
}

/// Eigenvalues of `F` from `F² = diag(−GC, −CG)`: each eigenvalue `μ` of
/// `−GC` contributes `±√μ`.
pub fn flow_spectrum_with(model: &QuadraticModel, tol: SpectralTolerances) -> FlowSpectrum {
    let m = -(model.g() * model.c());
    let half_trace = 0.5 * m.trace();
    let det = m.determinant();
    let disc = Complex64::new(half_trace * half_trace - det, 0.0).sqrt();
    let mu = [Complex64::from(half_trace) + disc, Complex64::from(half_trace) - disc];
    let r0 = mu[0].sqrt();
    let r1 = mu[1].sqrt();
    let eigenvalues = [r0, -r0, r1, -r1];

    let scale = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let eps = tol.relative * scale;
    let spiral = eigenvalues.iter().any(|l| l.re > eps && l.im.abs() > eps);
    let imaginary = eigenvalues.iter().all(|l| l.re.abs() <= eps);
    let class = if spiral {
        StabilityClass::SpiralUnstable
    } else if model.det_c().abs() <= tol.det_c {
        StabilityClass::Critical
    } else if imaginary {
        StabilityClass::BoundedOscillatory
    } else {
        StabilityClass::HyperbolicUnstable
    };
    FlowSpectrum { flow: model.flow_matrix(), eigenvalues, class }
}

/// The ghost Hamiltonian and its classically equivalent partner, both stored
/// in the `½pᵀ𝒢p + ½qᵀ𝒞q` normalisation.
#[derive(Debug, Clone)]
pub struct BiHamiltonianPair {
    pub model_g: QuadraticModel,
    pub model_2: QuadraticModel,
    pub j_g: Mat4,
    pub j_2: Mat4,
    pub nu: f64,
    pub omega: f64,
}

impl BiHamiltonianPair {
    /// Kinetic tensor of the second representation as printed, i.e. the
    /// coefficient matrix of `pᵀ G₂ p` before the factor-two rescaling.
    pub fn printed_g_2(&self) -> Mat2 {
        self.model_2.g() * 0.5
    }

    pub fn printed_g_g(&self) -> Mat2 {
        self.model_g.g() * 0.5
    }

    /// `J_g · Hess(H_g)`.
    pub fn flow_matrix_g(&self) -> Mat4 {
        self.j_g * self.model_g.hessian()
    }

    /// `J_2 · Hess(H_2)`.
    pub fn flow_matrix_2(&self) -> Mat4 {
        self.j_2 * self.model_2.hessian()
    }
}

pub fn build_biham_pair(nu: f64, omega: f64, hbar: f64) -> Result<BiHamiltonianPair> {
    for (name, value) in [("nu", nu), ("Omega", omega), ("hbar", hbar)] {
        if !value.is_finite() {
            return Err(Error::NonFinite { name, value });
        }
    }
    let n2 = nu * nu;
    let gap = n2 - omega;
    if gap.abs() <= DEGENERACY_TOLERANCE {
        return Err(Error::Degenerate { gap: gap.abs(), tolerance: DEGENERACY_TOLERANCE });
    }
    let sum = n2 + omega;
    let sqrt2 = std::f64::consts::SQRT_2;

    // H_g = p_x² − p_y² + ν²x² + Ωy² − (ν²+Ω)xy
    let g_g = Mat2::new(2.0, 0.0, 0.0, -2.0);
    let c_g = Mat2::new(2.0 * n2, -sum, -sum, 2.0 * omega);

    // H_2 = [a p_x² − 2b p_x p_y + c p_y² + ½(3ν²−Ω)x² − (ν²+Ω)xy + ½(3Ω−ν²)y²] / (2√2)
    let kin = 1.0 / (2.0 * sqrt2 * gap);
    let g_2 = Mat2::new(n2 - 3.0 * omega, -sum, -sum, omega - 3.0 * n2) * (2.0 * kin);
    let c_2 = Mat2::new(3.0 * n2 - omega, -sum, -sum, 3.0 * omega - n2) / (2.0 * sqrt2);

    let model_g = QuadraticModel::new(g_g, c_g, hbar, "H_g")?;
    let model_2 = QuadraticModel::new(g_2, c_2, hbar, "H_2")?;

    let identity = Mat2::identity();
    let j_g = block4(&Mat2::zeros(), &identity, &(-identity), &Mat2::zeros());
    let scale = 1.0 / (sqrt2 * gap);
    let upper = Mat2::new(3.0 * n2 - omega, -sum, sum, n2 - 3.0 * omega) * scale;
    let lower = Mat2::new(omega - 3.0 * n2, -sum, sum, 3.0 * omega - n2) * scale;
    let j_2 = block4(&Mat2::zeros(), &upper, &lower, &Mat2::zeros());

    Ok(BiHamiltonianPair { model_g, model_2, j_g, j_2, nu, omega })
}

/// `‖J_g∇H_g(z) − J_2∇H_2(z)‖∞` with `z = (x, y, p_x, p_y)`.
pub fn classical_equivalence_residual(pair: &BiHamiltonianPair, z: &Vector4<f64>) -> f64 {
    let grad_g = pair.model_g.hessian() * z;
    let grad_2 = pair.model_2.hessian() * z;
    max_abs(&(pair.j_g * grad_g - pair.j_2 * grad_2))
}
