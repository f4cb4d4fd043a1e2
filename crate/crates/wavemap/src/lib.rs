//! Numerical engine for the equivariant wave map from 2+1 Minkowski space into
//! the two-sphere, reduced to the radial semilinear wave equation
//!
//! ```text
//! u_tt = u_rr + u_r / r - sin(2u) / (2 r^2),    0 < r < R.
//! ```
//!
//! The crate evolves this equation with an origin-regular second-order scheme
//! on a nested adaptive mesh, detects finite-time blowup (adiabatic shrinking
//! of the degree-one harmonic map 2·arctan(r/λ)), and automates the
//! supercritical/subcritical amplitude search, blowup-rate fitting, and
//! energy-concentration diagnostics around it.
//!
//! Module map:
//! - [`analytic`]: closed-form reference solutions and profiles (harmonic map,
//!   its zero mode and linearization potential, the self-similar interior
//!   family, the wave-packet initial-data family).
//! - [`grid`]: nested dyadic mesh hierarchy, field storage, interpolation,
//!   refinement.
//! - [`evolver`]: leapfrog time integration with subcycling, outer boundary
//!   conditions, the refinement trigger, and the origin-regular stencil.
//! - [`diagnostics`]: scale-factor extraction, energies (total, light-cone,
//!   in-ball), rescaled-profile collapse error, power-law fitting.
//! - [`experiments`]: single-run classification (blowup / dispersal),
//!   critical-amplitude bisection, self-convergence study.
//! - [`config`]: run configuration, validation, canonical hashing.
//! - [`io`]: CSV/JSON export with bit-exact round-tripping.

pub mod analytic;
pub mod config;
pub mod diagnostics;
pub mod evolver;
pub mod experiments;
pub mod grid;
pub mod io;

pub use analytic::{InitialDataFamily, SelfSimilarProfile, Sign, StaticSolution};
pub use config::SimConfig;
pub use experiments::{
    bisect_critical_amplitude, convergence_study, run, OutcomeKind, RunOutcome, RunResult,
};
