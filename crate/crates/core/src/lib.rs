//! Gaussian wavepackets, Bohmian and classical trajectory ensembles, and
//! quantum-classical diagnostics for two-dimensional quadratic Hamiltonians
//! with an indefinite (ghost) kinetic term.
//!
//! The pipeline is: build a [`model::QuadraticModel`], evolve a Gaussian
//! packet with [`evolve::evolve_packet`], propagate classical and Bohmian
//! members with [`trajectories::propagate_ensemble`], then compute
//! [`diagnostics`] and classify the dynamical regime. [`biham`] runs the
//! same pipeline on both members of a classically equivalent pair.

pub mod biham;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod export;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod plot;
pub mod run;
pub mod scenario;
pub mod trajectories;
pub mod validate;

pub use error::{Error, Result};
