//! Optimal on/off protection switching for a stochastic SIRS model of a
//! computer cluster under cyber attack.
//!
//! The owner pays a running cost for infected machines and for active
//! protection, plus a lump cost at every protection switch. Optimal switching
//! values solve a coupled system of variational inequalities, one per
//! (attack, protection) regime. Two solvers are provided:
//!
//! * [`grid`]: monotone finite differences with projected SOR on a
//!   triangular mesh of `D = {s, i >= 0, s + i <= 1}`;
//! * [`dgm`]: a mesh-free neural solver trained on the squared PDE residual
//!   at random points.
//!
//! [`policy`] turns either solution into a switching rule and simulates it
//! against an attack schedule; [`mc`] prices any policy by Monte Carlo.

pub mod attacks;
pub mod cli;
pub mod dgm;
pub mod error;
pub mod format;
pub mod grid;
pub mod mc;
pub mod model;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod sde;
pub mod svg;

pub use error::{Error, Result};
pub use model::{ModelParams, Regime, State, SwitchCostSpec, SwitchCosts};
pub use scenario::Scenario;
