//! Classical emulation of the evolve-reset algorithm for Markovian
//! open-quantum-system dynamics.
//!
//! A small system register is coupled to a register of environment qubits
//! whose frequencies and couplings are chosen to reproduce a target spectral
//! density. The joint register evolves unitarily for a time `τ`, then the
//! environment is reset to its thermal state; repeating this yields the
//! reduced dynamics of the system. Pure dephasing is produced by classical
//! telegraph noise instead of environment qubits.
//!
//! Conventions used throughout the crate:
//!
//! * Frequencies and energies are in units of a reference frequency `Δ0`,
//!   times in units of `1/Δ0`, and `ħ = 1`.
//! * Qubit 0 is the leftmost (most significant) tensor factor. System qubits
//!   come first, environment qubits follow in mode order.
//! * Single-qubit Hamiltonians carry the `-½ ω σ^z` sign, so `|0⟩` is the
//!   ground state `|g⟩` and `|1⟩` the excited state `|e⟩`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod env_model;
mod error;
pub mod exec;
pub mod hamiltonian;
pub mod noise;
pub mod oracle;
pub mod qmath;
pub mod readout;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
