//! Hamiltonians of a two-level atom coupled to one harmonic trap mode.
//!
//! `ħ = 1` and every frequency is an angular frequency in rad/s. The laser
//! phase `φ` is the only time-dependent quantity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    build_fock, displacement_coupling, excite, excited_projector, identity, kron, sigma_x,
    sigma_y, ComplexMatrix, FockOperators, C64,
};

/// Trap frequency used throughout: 2π × 100 kHz.
pub const DEFAULT_TRAP_FREQUENCY: f64 = 2.0 * PI * 100e3;
/// Lamb-Dicke parameter of the ⁸⁸Sr clock transition in a 100 kHz trap.
pub const DEFAULT_ETA: f64 = 0.2156;
pub const DEFAULT_TRUNCATION: usize = 20;
/// Rabi frequency of the fast designs: 2π × 20 kHz.
pub const DEFAULT_RABI: f64 = 2.0 * PI * 20e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Trap frequency ω (rad/s).
    pub omega: f64,
    /// Rabi frequency Ω (rad/s).
    pub rabi: f64,
    pub eta: f64,
    /// Number of retained excited motional levels M.
    pub truncation: usize,
    /// Detuning offset δΔ (rad/s).
    pub delta_detuning: f64,
    /// Rabi-frequency offset δΩ (rad/s).
    pub delta_rabi: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            omega: DEFAULT_TRAP_FREQUENCY,
            rabi: DEFAULT_RABI,
            eta: DEFAULT_ETA,
            truncation: DEFAULT_TRUNCATION,
            delta_detuning: 0.0,
            delta_rabi: 0.0,
        }
    }
}

impl SystemParams {
    /// Default trap and coupling with the Rabi frequency set by `ω/Ω = lambda`.
    pub fn with_ratio(lambda: f64) -> Self {
        let base = Self::default();
        Self {
            rabi: base.omega / lambda,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad(format!("trap frequency must be positive, got {}", self.omega));
        }
        if !(self.rabi > 0.0 && self.rabi.is_finite()) {
            return bad(format!("Rabi frequency must be positive, got {}", self.rabi));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad(format!("Lamb-Dicke parameter must lie in [0, 1), got {}", self.eta));
        }
        if self.truncation == 0 {
            return bad("motional truncation M must be at least 1".into());
        }
        if !self.delta_detuning.is_finite() || !self.delta_rabi.is_finite() {
            return bad("inhomogeneity offsets must be finite".into());
        }
        Ok(())
    }

    /// Frequency ratio λ = ω/Ω.
    pub fn ratio(&self) -> f64 {
        self.omega / self.rabi
    }

    /// Qubit slow-down factor `1 − η²/2` of the second-order expansion.
    pub fn qubit_scale(&self) -> f64 {
        1.0 - self.eta * self.eta / 2.0
    }

    pub fn dim(&self) -> usize {
        2 * (self.truncation + 1)
    }
}

/// Which Hamiltonian drives the exact propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `e^{iη(a†+a)}` coupling, with detuning and Rabi offsets.
    Full,
    /// First order in η.
    LambDicke,
    /// Second order in η.
    SecondOrder,
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Model::Full),
            "lamb-dicke" | "lamb_dicke" | "ld" => Ok(Model::LambDicke),
            "second-order" | "second_order" | "so" => Ok(Model::SecondOrder),
            other => Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Full => "full",
            Model::LambDicke => "lamb-dicke",
            Model::SecondOrder => "second-order",
        })
    }
}

/// The ideal-qubit Hamiltonian `h_q` and its in-plane partner `h_p`.
#[derive(Debug, Clone)]
pub struct QubitHamiltonianPair {
    pub h_q: ComplexMatrix,
    pub h_p: ComplexMatrix,
}

pub fn qubit_pair(phase: f64, rabi: f64) -> QubitHamiltonianPair {
    let (s, c) = phase.sin_cos();
    let half = rabi / 2.0;
    let h_q = sigma_x() * C64::new(half * c, 0.0) + sigma_y() * C64::new(half * s, 0.0);
    let h_p = sigma_y() * C64::new(half * c, 0.0) - sigma_x() * C64::new(half * s, 0.0);
    QubitHamiltonianPair { h_q, h_p }
}

/// Precomputed operators for repeated Hamiltonian construction at fixed
/// parameters.
#[derive(Debug, Clone)]
pub struct HamiltonianBuilder {
    params: SystemParams,
    model: Model,
    fock: FockOperators,
    coupling: Option<ComplexMatrix>,
}

impl HamiltonianBuilder {
    pub fn new(params: SystemParams, model: Model) -> Result<Self> {
        params.validate()?;
        let fock = build_fock(params.truncation)?;
        let coupling = match model {
            Model::Full => Some(displacement_coupling(params.eta, &fock)?),
            _ => None,
        };
        Ok(Self {
            params,
            model,
            fock,
            coupling,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn fock(&self) -> &FockOperators {
        &self.fock
    }

    pub fn build(&self, phase: f64) -> ComplexMatrix {
        let p = &self.params;
        let n = self.fock.dim();
        let motion = kron(&identity(2), &(self.fock.number() * C64::new(p.omega, 0.0)));
        match self.model {
            Model::Full => {
                let coupling = self.coupling.as_ref().expect("full model carries coupling");
                let amp = (p.rabi + p.delta_rabi) / 2.0;
                let up = kron(&excite(), coupling) * (C64::from_polar(amp, phase));
                let detuning =
                    kron(&excited_projector(), &identity(n)) * C64::new(p.delta_detuning, 0.0);
                let h = &up + up.adjoint();
                h + detuning + motion
            }
            Model::LambDicke => {
                let pair = qubit_pair(phase, p.rabi);
                let x = self.fock.position();
                kron(&pair.h_q, &identity(n))
                    + kron(&pair.h_p, &x) * C64::new(p.eta, 0.0)
                    + motion
            }
            Model::SecondOrder => {
                let pair = qubit_pair(phase, p.rabi);
                let eta2 = p.eta * p.eta;
                let a = self.fock.a();
                let ad = self.fock.a_dag();
                let squeeze = ad * ad + a * a;
                kron(&pair.h_q, &identity(n)) * C64::new(1.0 - eta2 / 2.0, 0.0)
                    + kron(&pair.h_p, &self.fock.position()) * C64::new(p.eta, 0.0)
                    - kron(&pair.h_q, &squeeze) * C64::new(eta2 / 2.0, 0.0)
                    - kron(&pair.h_q, &self.fock.number()) * C64::new(eta2, 0.0)
                    + motion
            }
        }
    }
}

/// Detuned, Rabi-offset drive with the exact `e^{iη(a†+a)}` recoil factor.
pub fn full_hamiltonian(p: &SystemParams, phase: f64) -> Result<ComplexMatrix> {
    Ok(HamiltonianBuilder::new(*p, Model::Full)?.build(phase))
}

/// `h_q ⊗ I + η h_p ⊗ (a† + a) + I ⊗ ω a†a`.
pub fn lamb_dicke_hamiltonian(p: &SystemParams, phase: f64) -> Result<ComplexMatrix> {
    Ok(HamiltonianBuilder::new(*p, Model::LambDicke)?.build(phase))
}

/// Second-order expansion in η, including the `(1 − η²/2)` qubit slow-down.
pub fn second_order_hamiltonian(p: &SystemParams, phase: f64) -> Result<ComplexMatrix> {
    Ok(HamiltonianBuilder::new(*p, Model::SecondOrder)?.build(phase))
}
