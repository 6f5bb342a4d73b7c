//! Design and verification of motion-insensitive, phase-modulated laser
//! pulses for optical qubits held in harmonic traps.
//!
//! The crate models one atom as a two-level system coupled to a truncated
//! harmonic oscillator. A pulse is a piecewise-constant laser phase at fixed
//! Rabi frequency. Modules build the Hamiltonians ([`model`]), propagate them
//! exactly ([`propagate`]), score gates on thermal motional states
//! ([`fidelity`]), evaluate toggling-frame constraint integrals ([`avh`]),
//! solve the bang-bang recoil-free angle systems ([`torf`]), run a gradient
//! optimizer for smooth designs ([`optimize`]) and sweep parameters into
//! tables ([`scan`]).
//!
//! Units: ħ = 1, frequencies are angular (rad/s), times in seconds.

pub mod avh;
pub mod error;
pub mod fidelity;
pub mod model;
pub mod operators;
pub mod optimize;
pub mod propagate;
pub mod pulse;
pub mod scan;
pub mod torf;

pub use error::{Error, Result};
