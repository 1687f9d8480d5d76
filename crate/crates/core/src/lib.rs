//! Numerical simulator for the quantum linear Boltzmann equation of a
//! tracer particle in an ideal gas.
//!
//! The crate is organized bottom-up:
//!
//! * [`momentum`], [`physics`], [`distribution`]: kinematics, gas and
//!   tracer parameters, momentum distributions and random streams.
//! * [`scattering`]: elastic amplitudes and cross sections.
//! * [`kernels`]: the jump-operator function F, the two-sided rate
//!   density M_in, its classical counterpart, and tabulation on grids.
//! * [`evolution`]: coherence-sector time stepping with monitors.
//! * [`classical`]: grid and particle solvers of the classical linear
//!   Boltzmann equation used as independent references.
//! * [`config`] and [`verify`]: run configuration and the acceptance
//!   checks shared by the command-line front-end and the test-suite.

pub mod classical;
pub mod config;
pub mod distribution;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod kernels;
pub mod momentum;
pub mod physics;
pub mod quadrature;
pub mod registry;
pub mod scattering;
pub mod verify;

pub use error::{Error, Result};
pub use momentum::{decompose, Momentum};
pub use num_complex::Complex64;
pub use physics::{mean_collision_rate, mu, rel, GasSpec, Kinematics, TracerSpec};
