//! Simulation and analysis of optical leakage repumping for hyperfine qubits.
//!
//! Leaked population in ²S₁/₂|F=1, m_F=±1⟩ is moved to ²D₃/₂ by a quadrupole
//! transfer pulse, pumped at 935 nm through ³[3/2]₁/₂ and returned to ²S₁/₂.
//! The modules cover the coupling geometry and branching of that cycle
//! ([`atomic`]), the transfer-pulse error budget ([`pulse`]), cycle-by-cycle
//! population dynamics ([`repump`]), fitting of the phenomenological pump
//! model ([`fit`]), randomized benchmarking of the repump's effect on the qubit
//! ([`rb`]) and the leakage budget for error correction ([`budget`]).

pub mod atomic;
pub mod budget;
pub mod error;
pub mod fit;
pub mod io;
mod lsq;
pub mod pulse;
pub mod rb;
pub mod repump;
pub mod rng;

pub use error::{Error, Result};
