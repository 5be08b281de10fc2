//! Boundary-driven chains of coupled harmonic oscillators under local
//! Lindblad master equations: Gaussian steady states, heat currents, work
//! rates, entropy production, a truncated-Fock-space reference solver and an
//! exact repeated-interactions (collision model) simulator.

pub mod cli;
pub mod collision;
pub mod fock;
pub mod gaussian;
pub mod model;
pub mod thermo;
