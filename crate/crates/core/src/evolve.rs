//! Gaussian packet evolution.
//!
//! The packet `ψ ∝ exp[−(q−q_c)ᵀK(q−q_c)/2ħ + i p_c·(q−q_c)/ħ]` with
//! `K = A + iB` stays Gaussian under a quadratic Hamiltonian. Its centre
//! obeys the classical equations and `K` obeys the matrix Riccati equation
//! `K̇ = −i(KGK − C)`, which splits into
//!
//! ```text
//! Ȧ = AGB + BGA
//! Ḃ = C + BGB − AGA
//! ```
//!
//! The complex form is only used by the linearisation oracle.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, sym_eigenvalues, symmetrize, Mat2, Vec2};
use crate::model::QuadraticModel;

pub const DEFAULT_STEP: f64 = 1e-2;
pub const DEFAULT_HORIZON: f64 = 115.0;
pub const DEFAULT_OVERFLOW_GUARD: f64 = 1e12;
/// `|det X|` below which the linearised Riccati flow is at a caustic.
pub const ORACLE_SINGULARITY: f64 = 1e-12;

/// Uniform sampling `t_start, t_start + step, …` up to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    step: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
        }
        if !t_start.is_finite() || !t_end.is_finite() || t_end < t_start {
            return Err(Error::InvalidGrid(format!("need finite t_start <= t_end, got [{t_start}, {t_end}]")));
        }
        let steps = ((t_end - t_start) / step).round() as usize;
        Ok(Self { t_start, step, steps })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of samples, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Index of the sample nearest to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.step).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.steps)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub overflow_guard: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { overflow_guard: DEFAULT_OVERFLOW_GUARD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketState {
    pub t: f64,
    pub q_c: Vec2,
    pub p_c: Vec2,
    pub a: Mat2,
    pub b: Mat2,
}

impl PacketState {
    pub fn new(t: f64, q_c: Vec2, p_c: Vec2, a: Mat2, b: Mat2) -> Self {
        Self { t, q_c, p_c, a: symmetrize(&a), b: symmetrize(&b) }
    }

    /// `K = A + iB`.
    pub fn width(&self) -> Matrix2<Complex64> {
        Matrix2::from_fn(|i, j| Complex64::new(self.a[(i, j)], self.b[(i, j)]))
    }

    pub fn is_normalisable(&self) -> bool {
        normalisability_margin(self) > 0.0
    }

    /// Phase gradient `∇S(q) = p_c − B(q − q_c)`.
    pub fn phase_gradient(&self, q: &Vec2) -> Vec2 {
        self.p_c - self.b * (q - self.q_c)
    }

    fn max_component(&self) -> f64 {
        max_abs(&self.q_c).max(max_abs(&self.p_c)).max(max_abs(&self.a)).max(max_abs(&self.b))
    }

    fn is_finite(&self) -> bool {
        self.q_c.iter().chain(self.p_c.iter()).chain(self.a.iter()).chain(self.b.iter()).all(|x| x.is_finite())
    }

    fn advanced(&self, dt: f64, d: &PacketDerivative) -> Self {
        Self {
            t: self.t + dt,
            q_c: self.q_c + d.dq_c * dt,
            p_c: self.p_c + d.dp_c * dt,
            a: self.a + d.da * dt,
            b: self.b + d.db * dt,
        }
    }
}

/// Time derivative of the packet parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketDerivative {
    pub dq_c: Vec2,
    pub dp_c: Vec2,
    pub da: Mat2,
    pub db: Mat2,
}

impl PacketDerivative {
    fn rk4_combine(k1: &Self, k2: &Self, k3: &Self, k4: &Self) -> Self {
        Self {
            dq_c: (k1.dq_c + (k2.dq_c + k3.dq_c) * 2.0 + k4.dq_c) / 6.0,
            dp_c: (k1.dp_c + (k2.dp_c + k3.dp_c) * 2.0 + k4.dp_c) / 6.0,
            da: (k1.da + (k2.da + k3.da) * 2.0 + k4.da) / 6.0,
            db: (k1.db + (k2.db + k3.db) * 2.0 + k4.db) / 6.0,
        }
    }
}

pub fn riccati_rhs(state: &PacketState, model: &QuadraticModel) -> PacketDerivative {
    let g = model.g();
    let c = model.c();
    let (a, b) = (&state.a, &state.b);
    let agb = a * g * b;
    PacketDerivative {
        dq_c: g * state.p_c,
        dp_c: -(c * state.q_c),
        da: agb + agb.transpose(),
        db: c + b * g * b - a * g * a,
    }
}

/// Minimum eigenvalue of `A`; the packet is square-integrable iff this is
/// positive.
pub fn normalisability_margin(state: &PacketState) -> f64 {
    sym_eigenvalues(&state.a)[0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// First sample index that was not produced.
    pub index: usize,
    pub t: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone)]
pub struct PacketSeries {
    pub model: QuadraticModel,
    pub grid: TimeGrid,
    pub states: Vec<PacketState>,
    pub normalisable: Vec<bool>,
    /// Packet at the midpoint of each step, for half-step lookups.
    midpoints: Vec<PacketState>,
    pub truncation: Option<Truncation>,
}

impl PacketSeries {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncation.is_some()
    }

    pub fn state(&self, k: usize) -> &PacketState {
        &self.states[k]
    }

    /// Packet halfway between samples `k` and `k + 1`.
    pub fn midpoint(&self, k: usize) -> &PacketState {
        &self.midpoints[k]
    }

    pub fn final_state(&self) -> &PacketState {
        self.states.last().expect("packet series always holds the initial state")
    }

    pub fn min_margin(&self) -> f64 {
        self.states.iter().map(normalisability_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Cubic Hermite value at the midpoint of a step from both end values and
/// slopes: `(x₀ + x₁)/2 + h(ẋ₀ − ẋ₁)/8`.
fn hermite_midpoint(
    s0: &PacketState,
    d0: &PacketDerivative,
    s1: &PacketState,
    d1: &PacketDerivative,
    h: f64,
) -> PacketState {
    let w = h / 8.0;
    PacketState {
        t: 0.5 * (s0.t + s1.t),
        q_c: (s0.q_c + s1.q_c) * 0.5 + (d0.dq_c - d1.dq_c) * w,
        p_c: (s0.p_c + s1.p_c) * 0.5 + (d0.dp_c - d1.dp_c) * w,
        a: symmetrize(&((s0.a + s1.a) * 0.5 + (d0.da - d1.da) * w)),
        b: symmetrize(&((s0.b + s1.b) * 0.5 + (d0.db - d1.db) * w)),
    }
}

/// Fixed-step RK4 on `(q_c, p_c, A, B)`. `initial.t` is replaced by the
/// grid start. If any component exceeds the overflow guard the series stops
/// there and records a [`Truncation`].
pub fn evolve_packet(
    initial: &PacketState,
    model: &QuadraticModel,
    grid: &TimeGrid,
    config: &IntegratorConfig,
) -> Result<PacketSeries> {
    let h = grid.step();
    let mut state = PacketState::new(grid.t_start(), initial.q_c, initial.p_c, initial.a, initial.b);
    if !state.is_finite() {
        return Err(Error::InvalidModel("initial packet is not finite".into()));
    }
    let mut states = Vec::with_capacity(grid.len());
    let mut midpoints = Vec::with_capacity(grid.steps());
    let mut truncation = None;
    let mut slope = riccati_rhs(&state, model);
    states.push(state);

    for k in 1..grid.len() {
        let k1 = slope;
        let k2 = riccati_rhs(&state.advanced(0.5 * h, &k1), model);
        let k3 = riccati_rhs(&state.advanced(0.5 * h, &k2), model);
        let k4 = riccati_rhs(&state.advanced(h, &k3), model);
        let mut next = state.advanced(h, &PacketDerivative::rk4_combine(&k1, &k2, &k3, &k4));
        next.t = grid.time(k);
        next.a = symmetrize(&next.a);
        next.b = symmetrize(&next.b);

        let magnitude = next.max_component();
        if !(magnitude <= config.overflow_guard) {
            truncation = Some(Truncation { index: k, t: next.t, magnitude });
            break;
        }
        let next_slope = riccati_rhs(&next, model);
        midpoints.push(hermite_midpoint(&state, &slope, &next, &next_slope, h));
        states.push(next);
        state = next;
        slope = next_slope;
    }

    let normalisable = states.iter().map(PacketState::is_normalisable).collect();
    Ok(PacketSeries { model: model.clone(), grid: *grid, states, normalisable, midpoints, truncation })
}

/// Independent solution of the Riccati equation through its linearisation.
///
/// `X(t), Y(t)` solve `Ẋ = iGY, Ẏ = iCX` with `X(0) = I`, `Y(0) = K₀`;
/// then `K(t) = Y(t)X(t)⁻¹`. The constant 4×4 system is solved by matrix
/// exponential.
pub fn riccati_linear_oracle(
    k0: &Matrix2<Complex64>,
    model: &QuadraticModel,
    t: f64,
) -> Result<Matrix2<Complex64>> {
    if !t.is_finite() {
        return Err(Error::InvalidGrid(format!("oracle time must be finite, got {t}")));
    }
    if t == 0.0 {
        return Ok(*k0);
    }
    let i = Complex64::i();
    let mut generator = Matrix4::<Complex64>::zeros();
    for r in 0..2 {
        for c in 0..2 {
            generator[(r, c + 2)] = i * model.g()[(r, c)] * t;
            generator[(r + 2, c)] = i * model.c()[(r, c)] * t;
        }
    }
    let propagator = generator.exp();
    let mut start = nalgebra::Matrix4x2::<Complex64>::zeros();
    start[(0, 0)] = Complex64::from(1.0);
    start[(1, 1)] = Complex64::from(1.0);
    start.fixed_view_mut::<2, 2>(2, 0).copy_from(k0);
    let evolved = propagator * start;
    let x: Matrix2<Complex64> = evolved.fixed_view::<2, 2>(0, 0).into_owned();
    let y: Matrix2<Complex64> = evolved.fixed_view::<2, 2>(2, 0).into_owned();
    let det = x.determinant();
    if det.norm() < ORACLE_SINGULARITY {
        return Err(Error::Singular { t, det: det.norm() });
    }
    let x_inv = x.try_inverse().ok_or(Error::Singular { t, det: det.norm() })?;
    Ok(y * x_inv)
}

/// `‖K₁ − K₂‖∞` over real and imaginary parts.
pub fn width_distance(k1: &Matrix2<Complex64>, k2: &Matrix2<Complex64>) -> f64 {
    k1.iter().zip(k2.iter()).map(|(a, b)| (a.re - b.re).abs().max((a.im - b.im).abs())).fold(0.0, f64::max)
}

/// Packet centre as a phase-space vector `(q_c, p_c)`.
pub fn centre_vector(state: &PacketState) -> Vector4<f64> {
    Vector4::new(state.q_c[0], state.q_c[1], state.p_c[0], state.p_c[1])
}
