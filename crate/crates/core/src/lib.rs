//! Filtered quantum stochastic calculus on a truncated multiple symmetric
//! Fock space.
//!
//! The model is fully finite-dimensional: one-particle vectors are step
//! functions on a time grid with finitely many colors, the symmetric Fock
//! space is cut off at a particle number, and every fundamental process,
//! stochastic integral and SDE solution lives on that truncated space.
//!
//! The crate is organized along the calculus itself:
//!
//! * [`grid`], [`one_particle`], [`fock`], [`sparse`], [`ccr`] — the truncated
//!   model of `h0 ⊗ Γ(L²([0,T], G))`: basis enumeration, exponential vectors,
//!   creation/annihilation/number operators, color and band projections.
//! * [`processes`] — filtered and m-free fundamental processes.
//! * [`biprocess`] — (D,E)-adapted simple biprocesses, adaptedness checks and
//!   the rewrite of filtered integrators into CCR integrators.
//! * [`measures`], [`integrate`] — the measure tables and both evaluation
//!   routes for stochastic integrals (defining sum vs. analytic densities).
//! * [`ito`] — boson and m-free Itô tables, Itô corrections, partial traces.
//! * [`sde`] — Picard iteration for filtered SDE systems, m-free expansion,
//!   stabilization sweeps and unitarity conditions.
//! * [`scenario`], [`runner`], [`report`] — the scenario DSL and the batch
//!   verification driver behind the CLI.

pub mod biprocess;
pub mod ccr;
pub mod error;
pub mod fock;
pub mod grid;
pub mod integrate;
pub mod ito;
pub mod measures;
pub mod one_particle;
pub mod probes;
pub mod processes;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod sde;
pub mod sparse;

pub use error::{FfError, Result};
pub use fock::{ExponentialState, FockBasis, StateVector};
pub use grid::{Filter, GridSpec};
pub use one_particle::OneParticleVector;
pub use processes::ProcessKind;
pub use sparse::SparseOperator;

/// Default cap on the number of basis states for dense materialization.
pub const DENSE_CAP: usize = 4000;
