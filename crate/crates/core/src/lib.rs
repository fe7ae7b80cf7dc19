//! Speed-of-sound simulator for interacting lattice bosons.
//!
//! Generalized Bose-Hubbard models are built on arbitrary graphs, stationary
//! states are locally perturbed by particle-adding channels, and the evolved
//! one-body correlations are checked against the ballistic light cone
//! `|x_j(t)| ≤ c N₀ e^{vt − l}` with `v = χΔτ + D`.
//!
//! Module map:
//!
//! - [`lattice`]: graphs, distances and the constants `χ`, `Δ`, `D`, `v`.
//! - [`fock`]: number sectors, ladder operators and Hamiltonians.
//! - [`states`]: ground and thermal states, excitation channels.
//! - [`evolution`]: time evolution and covariance trajectories.
//! - [`verify`]: positivity, dominance and light-cone checks.
//! - [`cli`]: config-driven runs and presets.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod lattice;
pub mod sparse;
pub mod states;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/lattices.md")]
    struct Lattices;
    #[doc = include_str!("../../../book/src/fock.md")]
    struct Fock;
    #[doc = include_str!("../../../book/src/states.md")]
    struct States;
    #[doc = include_str!("../../../book/src/evolution.md")]
    struct Evolution;
    #[doc = include_str!("../../../book/src/checks.md")]
    struct Checks;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
