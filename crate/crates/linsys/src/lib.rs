//! Linear particle systems on the integer lattice: exact event-driven
//! simulation and analytical phase diagnostics.
//!
//! The model: each site of `Z^d` carries a nonnegative mass and a unit-rate
//! Poisson clock. When the clock at `z` rings, an independent draw of a
//! random kernel vector `K` redistributes the mass at `z`: the site keeps
//! `K_0` times its mass and adds `K_x` times it to each displacement `x`.
//! The binary contact path process and the potlatch process are the two
//! classical members of this family; arbitrary finite-atom kernels are
//! supported.
//!
//! The crate has three layers:
//!
//! * [`engine`] simulates trajectories exactly in normalized form, tracking
//!   the spatial density, the log total mass, the replica overlap
//!   `R_t = sum_x rho_{t,x}^2` and its exact time integral, plus the dual
//!   (transposed-update) process;
//! * [`theory`] computes the mean kernel's jump law, lattice Green functions
//!   (two independent routes), simple-random-walk return probabilities, and
//!   the closed-form growth/localization phase criteria;
//! * [`analysis`] evaluates the exact drift of the overlap functional
//!   `<g * rho, rho>` and audits the inequalities that drive the
//!   localization results.
//!
//! Reproducibility is contractual: a fixed seed yields byte-identical
//! output, ensembles derive per-run seeds by a documented mixing function,
//! and worker counts never affect results. See the `book/` guide for a
//! narrative tour.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod ensemble;
pub mod identities;
pub mod kernel;
pub mod lattice;
pub mod output;
pub mod rng;
pub mod theory;

pub use engine::{Configuration, EventRecord, Horizon, Observables, StopReason, TrajectoryRecord};
pub use kernel::{BetaTable, KernelAtom, KernelDistribution, KernelError};
pub use lattice::{MassField, Site};
pub use theory::{GreenMethod, PhaseClass, PhaseReport};

/// Doc-tested snippets of the book live here so `cargo test --doc` keeps the
/// guide honest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/phase-diagnostics.md")]
    mod phase_diagnostics {}
    #[doc = include_str!("../../../book/src/drift-analysis.md")]
    mod drift_analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
