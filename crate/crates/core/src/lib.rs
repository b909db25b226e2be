//! Simulation and verification toolkit for quench-based quantum sampling
//! architectures on square lattices.
//!
//! Each architecture prepares a product state on an `n x m` lattice, evolves it
//! for unit time under a fixed nearest-neighbor Ising Hamiltonian and measures
//! every qubit in a fixed basis. The crate provides:
//!
//! * [`lattice`]: the three lattice geometries and their Ising couplings,
//! * [`prep`]: preparation-angle sampling and product input states,
//! * [`statevec`]: exact dense evolution, outcome tables and shot sampling,
//! * [`ising`]: the complex partition function of the associated random Ising
//!   model (brute force and transfer matrix) and the probability identity,
//! * [`circuits`]: the encoded logical circuit families and their
//!   anti-concentration / Porter-Thomas statistics,
//! * [`iqproute`]: linear-depth nearest-neighbor compilation of dense IQP circuits,
//! * [`certify`]: parent Hamiltonians and the energy-based certification protocol,
//! * [`harness`]: job configuration, deterministic execution and report output.

pub mod certify;
pub mod circuits;
pub mod error;
pub mod harness;
pub mod iqproute;
pub mod ising;
pub mod lattice;
pub mod prep;
pub mod rng;
pub mod statevec;

pub use error::{Error, Result};
pub use lattice::{Architecture, IsingCouplings, Lattice};
pub use prep::BetaConfig;
pub use rng::RandomStream;
pub use statevec::{ProbTable, StateVector};

pub use num_complex::Complex64;

/// Version string embedded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
