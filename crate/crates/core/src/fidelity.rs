//! Gate fidelity on thermal motional states and the recoil-free thermal
//! limit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, SystemParams};
use crate::operators::{ComplexMatrix, C64};
use crate::propagate::{axis_rotation, evolve, qubit_block, Propagation, GUARD_LEVELS};
use crate::pulse::PulseProgram;

/// Motional levels kept between the highest weighted level and the
/// truncation edge.
pub const GUARD_MARGIN: usize = 4;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateTarget {
    pub theta_tar: f64,
    /// Angle of the rotation axis in the xy-plane, 0 for x.
    pub axis_angle: f64,
}

impl GateTarget {
    /// Rotation by `theta` about x.
    pub fn x(theta: f64) -> Self {
        Self {
            theta_tar: theta,
            axis_angle: 0.0,
        }
    }

    pub fn not() -> Self {
        Self::x(PI)
    }

    pub fn sqrt_not() -> Self {
        Self::x(PI / 2.0)
    }

    pub fn unitary(&self) -> ComplexMatrix {
        axis_rotation(self.theta_tar, self.axis_angle)
    }

    /// `1 − |Tr(U_Tar† U)|²/4` for a 2×2 unitary.
    pub fn defect(&self, u: &ComplexMatrix) -> f64 {
        let tr = (self.unitary().adjoint() * u).trace();
        1.0 - tr.norm_sqr() / 4.0
    }
}

/// Boltzmann weights over the motional levels `0..=levels-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub p0: f64,
    pub weights: Vec<f64>,
}

impl ThermalState {
    /// Weights for a truncation `M`, spread over `0..=M − GUARD_MARGIN`.
    pub fn new(p0: f64, truncation: usize) -> Result<Self> {
        if truncation < GUARD_MARGIN {
            return Err(Error::GuardMargin {
                m: 0,
                truncation,
            });
        }
        Self::with_levels(p0, truncation - GUARD_MARGIN + 1)
    }

    pub fn with_levels(p0: f64, levels: usize) -> Result<Self> {
        if !(p0 > 0.0 && p0 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ground-state probability must lie in (0, 1], got {p0}"
            )));
        }
        let q = 1.0 - p0;
        let raw: Vec<f64> = (0..levels.max(1)).map(|m| q.powi(m as i32)).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            p0,
            weights: raw.iter().map(|w| w / total).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub per_m: Vec<f64>,
    pub weights: Vec<f64>,
    pub fidelity: f64,
    pub p0: f64,
    pub truncation: usize,
}

impl FidelityReport {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.fidelity
    }
}

fn check_level(m: usize, truncation: usize) -> Result<()> {
    if m + GUARD_MARGIN > truncation {
        return Err(Error::GuardMargin { m, truncation });
    }
    Ok(())
}

/// Four-probe-state fidelity from a qubit block `B = ⟨·, m|U|·, m⟩`.
fn block_fidelity(block: &ComplexMatrix, target: &ComplexMatrix) -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let probes = [
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(s, 0.0), C64::new(s, 0.0)],
        [C64::new(s, 0.0), C64::new(0.0, s)],
    ];
    let m = target.adjoint() * block;
    let sum: f64 = probes
        .iter()
        .map(|v| {
            let mut amp = C64::new(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    amp += v[i].conj() * m[(i, j)] * v[j];
                }
            }
            amp.norm_sqr()
        })
        .sum();
    (sum / 4.0).clamp(0.0, 1.0)
}

/// Fidelity of the gate restricted to motional level `m`.
pub fn per_m_fidelity(u: &Propagation, target: &GateTarget, m: usize) -> Result<f64> {
    check_level(m, u.truncation())?;
    Ok(block_fidelity(&u.qubit_block(m), &target.unitary()))
}

fn per_m_all(u: &ComplexMatrix, truncation: usize, target: &GateTarget, levels: usize) -> Vec<f64> {
    let tu = target.unitary();
    (0..levels)
        .map(|m| block_fidelity(&qubit_block(u, truncation, m), &tu))
        .collect()
}

pub fn thermal_fidelity(u: &Propagation, target: &GateTarget, p0: f64) -> Result<FidelityReport> {
    let thermal = ThermalState::new(p0, u.truncation())?;
    let per_m = per_m_all(&u.u, u.truncation(), target, thermal.weights.len());
    let fidelity = per_m.iter().zip(&thermal.weights).map(|(f, w)| f * w).sum();
    Ok(FidelityReport {
        per_m,
        weights: thermal.weights,
        fidelity,
        p0,
        truncation: u.truncation(),
    })
}

/// Evolve a pulse and report its thermal fidelity in one step.
pub fn simulate(
    params: &SystemParams,
    pulse: &PulseProgram,
    model: Model,
    target: &GateTarget,
    p0: f64,
) -> Result<FidelityReport> {
    thermal_fidelity(&evolve(params, pulse, model)?, target, p0)
}

/// Largest change of `F^(m)`, `m ≤ 3`, when the truncation is doubled.
pub fn fidelity_drift(
    params: &SystemParams,
    pulse: &PulseProgram,
    model: Model,
    target: &GateTarget,
) -> Result<f64> {
    let levels = GUARD_LEVELS + 1;
    check_level(GUARD_LEVELS, params.truncation)?;
    let a = evolve(params, pulse, model)?;
    let doubled = SystemParams {
        truncation: 2 * params.truncation,
        ..*params
    };
    let b = evolve(&doubled, pulse, model)?;
    let fa = per_m_all(&a.u, a.truncation(), target, levels);
    let fb = per_m_all(&b.u, b.truncation(), target, levels);
    Ok(fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Ground-state probability of a thermal oscillator at temperature `temp`
/// (kelvin) and angular trap frequency `omega`.
pub fn p0_from_temperature(temp: f64, omega: f64) -> Result<f64> {
    if !(temp >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be non-negative, got {temp}"
        )));
    }
    if temp == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (-HBAR * omega / (BOLTZMANN * temp)).exp())
}

/// Exact infidelity floor of a recoil-free single-axis gate on a thermal
/// state, summed as a geometric series over all motional levels.
pub fn thermal_limit_exact(p0: f64, eta: f64, theta_tar: f64) -> f64 {
    let q = 1.0 - p0;
    let gamma = eta * eta * theta_tar / (1.0 - eta * eta / 2.0);
    let c = gamma.cos();
    let one_minus_cos = 2.0 * (gamma / 2.0).sin().powi(2);
    0.375 * q * (2.0 - p0) * one_minus_cos / (1.0 - 2.0 * q * c + q * q)
}

/// Leading term `(3/16)(1−p0)(2−p0)η⁴θ²/p0²` of the thermal limit.
pub fn thermal_limit_leading(p0: f64, eta: f64, theta_tar: f64) -> f64 {
    let q = 1.0 - p0;
    3.0 / 16.0 * q * (2.0 - p0) * eta.powi(4) * theta_tar * theta_tar / (p0 * p0)
}
