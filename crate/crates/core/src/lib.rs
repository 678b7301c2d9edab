//! Simulator and error-budget engine for a two-ion light-shift geometric
//! phase gate.
//!
//! The library evolves two qubits coupled to a shared axial motional mode
//! under the gate drive plus configurable noise channels, runs the spin-echo
//! Bell-state sequence, and produces fidelity scans, per-channel error
//! budgets, and multi-gate error-accumulation curves.
//!
//! Conventions used throughout (fixed here, once):
//!
//! - Qubit basis order is (|dn>, |up>) with `sigma_z |dn> = +|dn>`.
//! - Composite factor order is ion1 (x) ion2 (x) oscillator; a two-qubit
//!   label `dn,up` maps to index `q1 * 2F + q2 * F + n`.
//! - The oscillator is described in the frame rotating at the trap
//!   frequency, so the gate drive oscillates at the gate detuning
//!   `delta_g` only.
//! - All internal frequencies are angular (rad/s); configuration files use
//!   unit-suffixed keys and convert at the boundary.

pub mod config;
pub mod dynamics;
pub mod experiment;
pub mod gate;
pub mod hilbert;
pub mod noise;
pub mod sequence;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for the complex scalar used everywhere.
pub type C64 = num_complex::Complex64;

/// Physical constants (SI).
pub mod constants {
    /// Reduced Planck constant, J s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Atomic mass unit, kg.
    pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
}
