//! Boundary-driven Heisenberg XXZ chain with power-law long-range Ising
//! coupling: non-equilibrium steady-state transport via exact Lindblad
//! evolution (small N) and Monte Carlo wave-function trajectories (large N),
//! plus the power-law fitting and saturation analysis layered on top.

pub mod analysis;
pub mod analytic;
pub mod basis;
pub mod cli;
pub mod error;
pub mod io;
pub mod jumps;
pub mod lsqr;
pub mod master;
pub mod model;
pub mod observables;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod studies;
pub mod verify;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;
