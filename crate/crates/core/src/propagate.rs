//! Exact piecewise-constant propagation.
//!
//! Every model depends on the laser phase only through `|e⟩⟨g| e^{iφ}`, so
//! `H(φ) = D H(0) D†` with `D = diag(1, e^{iφ}) ⊗ I`. One eigendecomposition
//! of `H(0)` therefore serves all segments of a pulse.

use crate::error::{Error, Result};
use crate::model::{HamiltonianBuilder, Model, SystemParams};
use crate::operators::{identity, ComplexMatrix, HermitianEigen, C64};
use crate::pulse::PulseProgram;

/// Motional levels whose propagator columns the truncation guard compares.
pub const GUARD_LEVELS: usize = 3;

#[derive(Debug, Clone)]
pub struct Propagation {
    pub u: ComplexMatrix,
    pub model: Model,
    pub params: SystemParams,
    pub label: String,
}

impl Propagation {
    pub fn truncation(&self) -> usize {
        self.params.truncation
    }

    /// The 2×2 qubit block `⟨q', m|U|q, m⟩` for motional level `m`.
    pub fn qubit_block(&self, m: usize) -> ComplexMatrix {
        qubit_block(&self.u, self.params.truncation, m)
    }
}

pub(crate) fn qubit_block(u: &ComplexMatrix, truncation: usize, m: usize) -> ComplexMatrix {
    let n = truncation + 1;
    ComplexMatrix::from_fn(2, 2, |i, j| u[(i * n + m, j * n + m)])
}

fn apply_phase_frame(p: &mut ComplexMatrix, phase: f64, levels: usize) {
    if phase == 0.0 {
        return;
    }
    // D P D† with D = diag(1…1, e^{iφ}…e^{iφ})
    let w = C64::from_polar(1.0, phase);
    let wc = w.conj();
    let dim = p.nrows();
    for i in 0..dim {
        for j in 0..dim {
            let ei = i >= levels;
            let ej = j >= levels;
            match (ei, ej) {
                (true, false) => p[(i, j)] *= w,
                (false, true) => p[(i, j)] *= wc,
                _ => {}
            }
        }
    }
}

/// Propagator over the whole pulse, `U = P_N ⋯ P_1`, with the model's Ω set
/// to the pulse's Rabi frequency.
pub fn evolve(p: &SystemParams, pulse: &PulseProgram, model: Model) -> Result<Propagation> {
    let params = SystemParams {
        rabi: pulse.rabi(),
        ..*p
    };
    let builder = HamiltonianBuilder::new(params, model)?;
    let dim = params.dim();
    let mut u = identity(dim);
    if !pulse.is_empty() {
        let eig = HermitianEigen::new(&builder.build(0.0))?;
        for s in pulse.segments() {
            let mut step = eig.propagator(s.duration);
            apply_phase_frame(&mut step, s.phase, params.truncation + 1);
            u = step * u;
        }
    }
    Ok(Propagation {
        u,
        model,
        params,
        label: pulse.label.clone(),
    })
}

/// Largest change of the low-level qubit blocks when the truncation is
/// doubled.
pub fn truncation_drift(p: &SystemParams, pulse: &PulseProgram, model: Model) -> Result<f64> {
    let base = evolve(p, pulse, model)?;
    let doubled = evolve(
        &SystemParams {
            truncation: 2 * p.truncation,
            ..*p
        },
        pulse,
        model,
    )?;
    let levels = GUARD_LEVELS.min(p.truncation);
    let mut drift = 0.0_f64;
    for m in 0..=levels {
        let d = base.qubit_block(m) - doubled.qubit_block(m);
        drift = drift.max(d.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(drift)
}

/// Evolve and fail with [`Error::Truncation`] when doubling M moves the
/// low-level blocks by more than `limit`.
pub fn evolve_checked(
    p: &SystemParams,
    pulse: &PulseProgram,
    model: Model,
    limit: f64,
) -> Result<Propagation> {
    let drift = truncation_drift(p, pulse, model)?;
    if drift > limit {
        return Err(Error::Truncation { drift, limit });
    }
    evolve(p, pulse, model)
}

/// SU(2) rotation `exp(−i θ/2 (cos φ σx + sin φ σy))`.
pub fn axis_rotation(theta: f64, phase: f64) -> ComplexMatrix {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    // −i s (cos φ σx + sin φ σy) has off-diagonals −i s e^{∓iφ}
    let upper = C64::new(0.0, -s) * C64::from_polar(1.0, -phase);
    let lower = C64::new(0.0, -s) * C64::from_polar(1.0, phase);
    ComplexMatrix::from_row_slice(2, 2, &[c, upper, lower, c])
}

/// Ideal-qubit propagator. With `eta_correction` every segment turns at the
/// reduced rate `Ω(1 − η²/2)`.
pub fn evolve_qubit(pulse: &PulseProgram, eta_correction: bool, eta: f64) -> ComplexMatrix {
    let scale = if eta_correction { 1.0 - eta * eta / 2.0 } else { 1.0 };
    let rabi = pulse.rabi();
    pulse
        .segments()
        .iter()
        .fold(identity(2), |u, s| axis_rotation(scale * rabi * s.duration, s.phase) * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{expm_hermitian_generator, frobenius, sigma_x, unitarity_defect, I};
    use crate::pulse::{make_constant, make_sampled, make_torf, Segment, TorfAngles};
    use std::f64::consts::PI;

    fn params(eta: f64, m: usize) -> SystemParams {
        SystemParams {
            eta,
            truncation: m,
            ..SystemParams::default()
        }
    }

    #[test]
    fn empty_pulse_is_identity() {
        let p = params(0.2, 6);
        let prop = evolve(&p, &PulseProgram::empty(p.rabi), Model::Full).unwrap();
        assert!(frobenius(&(prop.u - identity(14))) < 1e-15);
    }

    #[test]
    fn decoupled_pi_pulse() {
        let p = params(0.0, 8);
        let pulse = make_constant(PI, p.rabi, false, 0.0).unwrap();
        let prop = evolve(&p, &pulse, Model::Full).unwrap();
        let t = pulse.duration();
        for m in 0..=8 {
            let block = prop.qubit_block(m);
            let phase = C64::from_polar(1.0, -p.omega * m as f64 * t);
            let expected = sigma_x() * (-I * phase);
            assert!(frobenius(&(block - expected)) < 1e-11, "m = {m}");
        }
        // no motional transfer at η = 0
        let n = 9;
        for i in 0..18 {
            for j in 0..18 {
                if i % n != j % n {
                    assert!(prop.u[(i, j)].norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn matches_direct_exponentials_in_order() {
        let p = params(0.2156, 8);
        let pulse = PulseProgram::new(
            p.rabi,
            vec![
                Segment { duration: 7e-6, phase: 0.4 },
                Segment { duration: 3e-6, phase: -2.1 },
            ],
            "two",
        )
        .unwrap();
        for model in [Model::Full, Model::LambDicke, Model::SecondOrder] {
            let b = HamiltonianBuilder::new(p, model).unwrap();
            let u1 = expm_hermitian_generator(&b.build(0.4), 7e-6).unwrap();
            let u2 = expm_hermitian_generator(&b.build(-2.1), 3e-6).unwrap();
            let prop = evolve(&p, &pulse, model).unwrap();
            assert!(frobenius(&(&prop.u - u2 * u1)) < 1e-11, "{model}");
            assert!(unitarity_defect(&prop.u) < 1e-10);
        }
    }

    #[test]
    fn refinement_invariance() {
        let p = params(0.2156, 10);
        let single = make_sampled(&[0.0], 25e-6, p.rabi).unwrap();
        let many = make_sampled(&vec![0.0; 100], 25e-8, p.rabi).unwrap();
        let a = evolve(&p, &single, Model::Full).unwrap();
        let b = evolve(&p, &many, Model::Full).unwrap();
        assert!(frobenius(&(a.u - b.u)) < 1e-12 * 100.0);
    }

    #[test]
    fn qubit_pi_pulse() {
        let pulse = make_constant(PI, 2.0 * PI * 20e3, false, 0.0).unwrap();
        let u = evolve_qubit(&pulse, false, 0.0);
        assert!(frobenius(&(u - sigma_x() * -I)) < 1e-12);

        let eta = 0.2156;
        let pulse = make_constant(PI, 2.0 * PI * 20e3, true, eta).unwrap();
        let u = evolve_qubit(&pulse, true, eta);
        assert!(frobenius(&(u - sigma_x() * -I)) < 1e-12);
    }

    #[test]
    fn qubit_torf_net_rotation() {
        let a = TorfAngles::First([0.0840 * PI, 0.0269 * PI, 0.3858 * PI]);
        let pulse = make_torf(&a, 2.0 * PI * 20e3).unwrap();
        let u = evolve_qubit(&pulse, false, 0.0);
        let expected = axis_rotation(a.net_rotation(), 0.0);
        assert!(frobenius(&(u - expected)) < 1e-12);
        assert!((a.net_rotation() - PI / 2.0).abs() < 1e-3);
    }

    #[test]
    fn axis_rotation_is_exponential() {
        let h = (sigma_x() * C64::new(0.3f64.cos(), 0.0)
            + crate::operators::sigma_y() * C64::new(0.3f64.sin(), 0.0))
            * C64::new(0.5, 0.0);
        let direct = expm_hermitian_generator(&h, 1.7).unwrap();
        assert!(frobenius(&(axis_rotation(1.7, 0.3) - direct)) < 1e-14);
    }

    #[test]
    fn truncation_guard() {
        let p = params(0.2156, 20);
        let pulse = make_constant(PI, p.rabi, true, p.eta).unwrap();
        assert!(truncation_drift(&p, &pulse, Model::Full).unwrap() < 1e-9);
        // four levels cannot hold the recoil of a strong pulse
        let tight = params(0.6, 4);
        let pulse = make_constant(5.0 * PI, tight.rabi, false, 0.0).unwrap();
        assert!(matches!(
            evolve_checked(&tight, &pulse, Model::Full, 1e-9),
            Err(Error::Truncation { .. })
        ));
    }
}
