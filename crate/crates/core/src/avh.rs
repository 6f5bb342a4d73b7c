//! Toggling-frame constraint integrals and average-Hamiltonian predictions.
//!
//! Everything here works in units of the Rabi frequency: times are `Ω t`,
//! the trap frequency becomes `λ = ω/Ω`. Conjugating a Pauli vector by the
//! ideal-qubit propagator is an SO(3) rotation, so each integral reduces to
//! a sum over segments of rotated, analytically integrated trigonometric
//! exponentials. A constraint value is stored as a complex 3-vector `v`
//! representing the 2×2 operator `v·σ`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::operators::{
    build_fock, frobenius, identity, kron, pauli_vector, ComplexMatrix, HermitianEigen, C64,
};
use crate::propagate::evolve_qubit;
use crate::pulse::{PulseProgram, TorfAngles};

pub type CVec3 = Vector3<C64>;
pub type Rot3 = Matrix3<f64>;

/// Smallest frequency ratio at which the first-order expansion is trusted.
pub const MIN_RATIO: f64 = 1.5;

/// Flag threshold for `‖H_I‖_F · T`.
pub const VALIDITY_LIMIT: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Rec1,
    Rec2,
    Ent,
    Det,
    Rab,
    Trap,
    Trap2,
}

impl Constraint {
    pub const ALL: [Constraint; 7] = [
        Constraint::Rec1,
        Constraint::Rec2,
        Constraint::Ent,
        Constraint::Det,
        Constraint::Rab,
        Constraint::Trap,
        Constraint::Trap2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Constraint::Rec1 => "rec1",
            Constraint::Rec2 => "rec2",
            Constraint::Ent => "ent",
            Constraint::Det => "det",
            Constraint::Rab => "rab",
            Constraint::Trap => "trap",
            Constraint::Trap2 => "trap2",
        }
    }

    /// Harmonic of the trap frequency carried by the integrand.
    pub fn harmonic(self) -> u32 {
        match self {
            Constraint::Rec1 | Constraint::Trap => 1,
            Constraint::Rec2 | Constraint::Trap2 => 2,
            _ => 0,
        }
    }

    fn integrand(self) -> Integrand {
        let (axis, power) = match self {
            Constraint::Rec1 => (Axis::Transverse, 0),
            Constraint::Rec2 | Constraint::Ent | Constraint::Rab => (Axis::Drive, 0),
            Constraint::Det => (Axis::Z, 0),
            Constraint::Trap => (Axis::Transverse, 1),
            Constraint::Trap2 => (Axis::Drive, 1),
        };
        Integrand {
            axis,
            harmonic: self.harmonic(),
            power,
        }
    }
}

impl std::str::FromStr for Constraint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Constraint::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown constraint '{s}'")))
    }
}

/// Which half-Pauli the integrand conjugates: `h_q` (drive axis), `h_p`
/// (in-plane transverse axis) or `σ_z/2`.
#[derive(Debug, Clone, Copy)]
enum Axis {
    Drive,
    Transverse,
    Z,
}

#[derive(Debug, Clone, Copy)]
struct Integrand {
    axis: Axis,
    harmonic: u32,
    power: u32,
}

/// `∫₀^τ e^{iβs} ds` and `∫₀^τ s e^{iβs} ds`.
fn base_integrals(beta: f64, tau: f64) -> (C64, C64) {
    let x = beta * tau;
    if x.abs() < 0.5 {
        let ix = C64::new(0.0, x);
        let mut term = C64::new(1.0, 0.0);
        let mut e0 = C64::new(0.0, 0.0);
        let mut e1 = C64::new(0.0, 0.0);
        let mut fact = 1.0;
        for k in 0..30 {
            if k > 0 {
                term *= ix;
                fact *= k as f64;
            }
            e0 += term / (fact * (k + 1) as f64);
            e1 += term / (fact * (k + 2) as f64);
        }
        (e0 * tau, e1 * tau * tau)
    } else {
        let e = C64::from_polar(1.0, x);
        let ib = C64::new(0.0, beta);
        let e0 = (e - 1.0) / ib;
        let e1 = e * tau / ib + (e - 1.0) / (beta * beta);
        (e0, e1)
    }
}

fn rotation_x(angle: f64) -> Rot3 {
    let (s, c) = angle.sin_cos();
    Rot3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rotation_z(angle: f64) -> Rot3 {
    let (s, c) = angle.sin_cos();
    Rot3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Generator of rotations about z.
fn z_generator() -> Rot3 {
    Rot3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
}

fn to_complex(v: &Vector3<f64>) -> CVec3 {
    v.map(|x| C64::new(x, 0.0))
}

fn rotate(r: &Rot3, v: &CVec3) -> CVec3 {
    CVec3::new(
        v[0] * r[(0, 0)] + v[1] * r[(0, 1)] + v[2] * r[(0, 2)],
        v[0] * r[(1, 0)] + v[1] * r[(1, 1)] + v[2] * r[(1, 2)],
        v[0] * r[(2, 0)] + v[1] * r[(2, 1)] + v[2] * r[(2, 2)],
    )
}

/// Segment contribution in the segment's own frame (drive axis along x),
/// before the `R_{n−1}ᵀ` accumulation. `t0` is the segment start.
fn local_integral(f: Integrand, tau: f64, t0: f64, scale: f64, lambda: f64) -> CVec3 {
    let half = 0.5;
    let (b0, bc, bs) = match f.axis {
        // U†(x̂·σ)U stays on x̂; ŷ → cos α ŷ − sin α ẑ; ẑ → cos α ẑ + sin α ŷ
        Axis::Drive => (Vector3::new(half, 0.0, 0.0), Vector3::zeros(), Vector3::zeros()),
        Axis::Transverse => (
            Vector3::zeros(),
            Vector3::new(0.0, half, 0.0),
            Vector3::new(0.0, 0.0, -half),
        ),
        Axis::Z => (
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, half),
            Vector3::new(0.0, half, 0.0),
        ),
    };
    if f.harmonic > 0 && !lambda.is_finite() {
        return CVec3::zeros();
    }
    let k = f.harmonic as f64 * if f.harmonic > 0 { lambda } else { 0.0 };
    let integral = |beta: f64| {
        let (e0, e1) = base_integrals(beta, tau);
        if f.power == 0 {
            e0
        } else {
            e0 * t0 + e1
        }
    };
    let carrier = if k == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        C64::from_polar(1.0, k * t0)
    };
    let mut out = CVec3::zeros();
    if b0 != Vector3::zeros() {
        out += to_complex(&b0) * integral(k);
    }
    if bc != Vector3::zeros() {
        let plus = integral(k + scale);
        let minus = integral(k - scale);
        let cos_part = (plus + minus) * 0.5;
        let sin_part = (plus - minus) / C64::new(0.0, 2.0);
        out += to_complex(&bc) * cos_part + to_complex(&bs) * sin_part;
    }
    out * carrier
}

/// Result of a toggling-frame pass over a segment list.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// SO(3) image of the ideal-qubit propagator at the end of the pulse.
    pub rotation: Rot3,
    /// One value per requested constraint.
    pub values: Vec<CVec3>,
    /// `∂R/∂φ_n` per segment, when gradients were requested.
    pub rotation_grad: Vec<Rot3>,
    /// `∂v_c/∂φ_n`, indexed `[constraint][segment]`.
    pub value_grad: Vec<Vec<CVec3>>,
}

/// Evaluate constraint vectors for segments of dimensionless durations
/// `taus` (`Ω τ`) and phases `phases`. The ideal qubit turns at rate
/// `scale`; `lambda` may be infinite, which zeroes the recoil integrals.
pub fn evaluate(
    taus: &[f64],
    phases: &[f64],
    scale: f64,
    lambda: f64,
    constraints: &[Constraint],
    with_grad: bool,
) -> Evaluation {
    let n = taus.len();
    assert_eq!(n, phases.len(), "durations and phases must align");
    let k = z_generator();

    let mut before = Vec::with_capacity(n); // R_{n-1}
    let mut steps = Vec::with_capacity(n); // S_n
    let mut local: Vec<Vec<CVec3>> = vec![Vec::with_capacity(n); constraints.len()];
    let mut r = Rot3::identity();
    let mut t0 = 0.0;
    for (&tau, &phi) in taus.iter().zip(phases) {
        let rz = rotation_z(phi);
        let s = rz * rotation_x(scale * tau) * rz.transpose();
        for (ci, c) in constraints.iter().enumerate() {
            let w0 = local_integral(c.integrand(), tau, t0, scale, lambda);
            local[ci].push(rotate(&rz, &w0));
        }
        before.push(r);
        r = s * r;
        steps.push(s);
        t0 += tau;
    }

    let values: Vec<CVec3> = local
        .iter()
        .map(|ws| {
            ws.iter()
                .zip(&before)
                .fold(CVec3::zeros(), |acc, (w, rb)| acc + rotate(&rb.transpose(), w))
        })
        .collect();

    let mut rotation_grad = Vec::new();
    let mut value_grad = Vec::new();
    if with_grad {
        rotation_grad = vec![Rot3::zeros(); n];
        let mut left = Rot3::identity();
        for i in (0..n).rev() {
            let ds = k * steps[i] - steps[i] * k;
            rotation_grad[i] = left * ds * before[i];
            left *= steps[i];
        }
        for ws in &local {
            let mut grads = vec![CVec3::zeros(); n];
            let mut g = CVec3::zeros();
            for i in (0..n).rev() {
                let st = steps[i].transpose();
                let dst = k * st - st * k;
                let inner = rotate(&k, &ws[i]) + rotate(&dst, &g);
                grads[i] = rotate(&before[i].transpose(), &inner);
                g = ws[i] + rotate(&st, &g);
            }
            value_grad.push(grads);
        }
    }

    Evaluation {
        rotation: r,
        values,
        rotation_grad,
        value_grad,
    }
}

/// SO(3) rotation matching the SU(2) rotation by `theta` about the in-plane
/// axis at angle `axis_angle`.
pub fn target_rotation(theta: f64, axis_angle: f64) -> Rot3 {
    let rz = rotation_z(axis_angle);
    rz * rotation_x(theta) * rz.transpose()
}

/// All constraint operators of a pulse at its end time.
#[derive(Debug, Clone)]
pub struct ToggleIntegrals {
    pub u_q: ComplexMatrix,
    pub rotation: Rot3,
    pub v_rec1: ComplexMatrix,
    pub v_rec2: ComplexMatrix,
    pub v_ent: ComplexMatrix,
    pub v_det: ComplexMatrix,
    pub v_rab: ComplexMatrix,
    /// Carries an extra factor of time; stored in units of `1/Ω`.
    pub v_trap: ComplexMatrix,
    /// As `v_trap`, in units of `1/Ω`.
    pub v_trap2: ComplexMatrix,
    pub lambda: f64,
    pub scale: f64,
}

impl ToggleIntegrals {
    pub fn get(&self, c: Constraint) -> &ComplexMatrix {
        match c {
            Constraint::Rec1 => &self.v_rec1,
            Constraint::Rec2 => &self.v_rec2,
            Constraint::Ent => &self.v_ent,
            Constraint::Det => &self.v_det,
            Constraint::Rab => &self.v_rab,
            Constraint::Trap => &self.v_trap,
            Constraint::Trap2 => &self.v_trap2,
        }
    }

    pub fn norm(&self, c: Constraint) -> f64 {
        frobenius(self.get(c))
    }

    fn from_vectors(u_q: ComplexMatrix, rotation: Rot3, v: &[CVec3], lambda: f64, scale: f64) -> Self {
        let m = |i: usize| pauli_vector([v[i][0], v[i][1], v[i][2]]);
        Self {
            u_q,
            rotation,
            v_rec1: m(0),
            v_rec2: m(1),
            v_ent: m(2),
            v_det: m(3),
            v_rab: m(4),
            v_trap: m(5),
            v_trap2: m(6),
            lambda,
            scale,
        }
    }
}

fn pulse_segments(pulse: &PulseProgram) -> (Vec<f64>, Vec<f64>) {
    let rabi = pulse.rabi();
    pulse
        .segments()
        .iter()
        .map(|s| (rabi * s.duration, s.phase))
        .unzip()
}

/// Toggling-frame integrals of `pulse` with `λ = ω/Ω` taken from `p.omega`
/// and the pulse's Rabi frequency. With `eta_correction` the ideal qubit
/// turns at `Ω(1 − η²/2)`.
pub fn toggle_integrals(pulse: &PulseProgram, p: &SystemParams, eta_correction: bool) -> ToggleIntegrals {
    let lambda = p.omega / pulse.rabi();
    let scale = if eta_correction { p.qubit_scale() } else { 1.0 };
    let (taus, phases) = pulse_segments(pulse);
    let eval = evaluate(&taus, &phases, scale, lambda, &Constraint::ALL, false);
    let u_q = evolve_qubit(pulse, eta_correction, p.eta);
    ToggleIntegrals::from_vectors(u_q, eval.rotation, &eval.values, lambda, scale)
}

/// Integrals of an x-axis bang-bang pulse evaluated from explicit global-time
/// antiderivatives. The trap integrals come from the generic evaluator.
pub fn bang_closed_form(angles: &TorfAngles, lambda: f64) -> Result<ToggleIntegrals> {
    if !(lambda > MIN_RATIO) {
        return Err(Error::AvhValidity(format!(
            "closed forms need ω/Ω > {MIN_RATIO} so the motion is not strongly excited, got {lambda}"
        )));
    }
    angles.validate()?;
    let seg = angles.segment_angles();
    let i = C64::new(0.0, 1.0);
    let mut rec1 = CVec3::zeros();
    let mut rec2 = CVec3::zeros();
    let mut det = CVec3::zeros();
    let mut net = 0.0;
    let (mut t, mut alpha) = (0.0_f64, 0.0_f64);
    for (n, &tau) in seg.iter().enumerate() {
        if tau == 0.0 {
            continue;
        }
        let s = if n % 2 == 0 { 1.0 } else { -1.0 };
        let (t1, alpha1) = (t + tau, alpha + s * tau);
        // ∫ e^{±iα(t)} e^{iλt} dt with α linear of slope s
        let up = (C64::from_polar(1.0, alpha1 + lambda * t1) - C64::from_polar(1.0, alpha + lambda * t))
            / (i * (lambda + s));
        let down = (C64::from_polar(1.0, -alpha1 + lambda * t1)
            - C64::from_polar(1.0, -alpha + lambda * t))
            / (i * (lambda - s));
        let cos_int = (up + down) * 0.5;
        let sin_int = (up - down) / (2.0 * i);
        rec1 += CVec3::new(C64::new(0.0, 0.0), cos_int, -sin_int) * C64::new(0.5 * s, 0.0);
        let harmonic = (C64::from_polar(1.0, 2.0 * lambda * t1) - C64::from_polar(1.0, 2.0 * lambda * t))
            / (i * 2.0 * lambda);
        rec2 += CVec3::new(harmonic, C64::new(0.0, 0.0), C64::new(0.0, 0.0)) * C64::new(0.5 * s, 0.0);
        // ∫cos α = (sin α1 − sin α0)/s, ∫sin α = −(cos α1 − cos α0)/s
        let c_int = (alpha1.sin() - alpha.sin()) / s;
        let s_int = -(alpha1.cos() - alpha.cos()) / s;
        det += CVec3::new(C64::new(0.0, 0.0), C64::new(0.5 * s_int, 0.0), C64::new(0.5 * c_int, 0.0));
        net += s * tau;
        t = t1;
        alpha = alpha1;
    }
    let ent = CVec3::new(C64::new(0.5 * net, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    let phases: Vec<f64> = (0..seg.len())
        .map(|n| if n % 2 == 0 { 0.0 } else { std::f64::consts::PI })
        .collect();
    let trap = evaluate(&seg, &phases, 1.0, lambda, &[Constraint::Trap, Constraint::Trap2], false);
    let values = [rec1, rec2, ent, det, ent, trap.values[0], trap.values[1]];
    let u_q = crate::propagate::axis_rotation(net, 0.0);
    Ok(ToggleIntegrals::from_vectors(
        u_q,
        target_rotation(net, 0.0),
        &values,
        lambda,
        1.0,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionOrder {
    First,
    Second,
}

/// First-order average-Hamiltonian reconstruction of the full propagator.
/// `First` targets the Lamb-Dicke Hamiltonian, `Second` the second-order
/// one including the slowed qubit rotation.
pub fn avh_predict(pulse: &PulseProgram, p: &SystemParams, order: ExpansionOrder) -> Result<ComplexMatrix> {
    let params = SystemParams {
        rabi: pulse.rabi(),
        ..*p
    };
    params.validate()?;
    let fock = build_fock(params.truncation)?;
    let a = fock.a();
    let ad = fock.a_dag();
    let correction = order == ExpansionOrder::Second;
    let ti = toggle_integrals(pulse, &params, correction);
    let eta = C64::new(params.eta, 0.0);

    let mut h = (kron(&ti.v_rec1, ad) + kron(&ti.v_rec1.adjoint(), a)) * eta;
    if correction {
        let eta2 = params.eta * params.eta;
        let squeeze = kron(&ti.v_rec2, &(ad * ad)) + kron(&ti.v_rec2.adjoint(), &(a * a));
        h -= squeeze * C64::new(eta2 / 2.0, 0.0);
        h -= kron(&ti.v_ent, &fock.number()) * C64::new(eta2, 0.0);
    }
    let interaction = HermitianEigen::new(&h)?.propagator(1.0);
    let free_phase = params.omega * pulse.duration();
    let n = fock.dim();
    let free = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        (0..n).map(|m| C64::from_polar(1.0, -free_phase * m as f64)),
    ));
    Ok(kron(&ti.u_q, &identity(n)) * kron(&identity(2), &free) * interaction)
}

/// `‖(A − B) P‖_F` where `P` projects onto motional levels `0..=levels`.
pub fn low_level_defect(a: &ComplexMatrix, b: &ComplexMatrix, truncation: usize, levels: usize) -> f64 {
    let n = truncation + 1;
    let mut sum = 0.0;
    for q in 0..2 {
        for m in 0..=levels.min(truncation) {
            let j = q * n + m;
            for i in 0..a.nrows() {
                sum += (a[(i, j)] - b[(i, j)]).norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// Ideal-qubit propagator dressed with first-order detuning and Rabi-offset
/// errors. Offsets are in rad/s and must stay within 30% of Ω.
pub fn robust_qubit_predict(pulse: &PulseProgram, d_delta: f64, d_omega: f64) -> Result<ComplexMatrix> {
    let rabi = pulse.rabi();
    let (x, y) = (d_delta / rabi, d_omega / rabi);
    if x.abs() > 0.3 || y.abs() > 0.3 {
        return Err(Error::InvalidParameter(format!(
            "offsets must satisfy |δΔ/Ω|, |δΩ/Ω| ≤ 0.3, got ({x}, {y})"
        )));
    }
    let p = SystemParams {
        rabi,
        omega: f64::INFINITY,
        ..SystemParams::default()
    };
    let (taus, phases) = pulse_segments(pulse);
    let eval = evaluate(&taus, &phases, 1.0, p.omega, &[Constraint::Det, Constraint::Rab], false);
    let v = |i: usize| pauli_vector([eval.values[i][0], eval.values[i][1], eval.values[i][2]]);
    // δΔ|e⟩⟨e| = −(δΔ/Ω)(Ω/2)σ_z up to a global phase
    let det = HermitianEigen::new(&v(0))?.propagator(-x);
    let rab = HermitianEigen::new(&v(1))?.propagator(y);
    Ok(evolve_qubit(pulse, false, 0.0) * det * rab)
}

/// Size of the interaction Hamiltonian relative to the expansion's range of
/// validity: `‖η h_p‖_F · T = η Ω T / √2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub metric: f64,
    pub flagged: bool,
}

pub fn validity(pulse: &PulseProgram, eta: f64) -> Validity {
    let metric = eta * pulse.area() / std::f64::consts::SQRT_2;
    Validity {
        metric,
        flagged: metric > VALIDITY_LIMIT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{sigma_x, ZERO};
    use crate::pulse::{make_constant, make_sampled, make_torf};
    use std::f64::consts::PI;

    #[test]
    fn series_matches_closed_form_at_switch() {
        for &beta in &[0.49, 0.51, -0.7, 3.0] {
            let (a0, a1) = base_integrals(beta, 1.0);
            let e = C64::from_polar(1.0, beta);
            let ib = C64::new(0.0, beta);
            let c0 = (e - 1.0) / ib;
            let c1 = e / ib + (e - 1.0) / (beta * beta);
            assert!((a0 - c0).norm() < 1e-15 && (a1 - c1).norm() < 1e-14, "{beta}");
        }
        let (z0, z1) = base_integrals(0.0, 2.0);
        assert_eq!((z0.re, z1.re), (2.0, 2.0));
    }

    #[test]
    fn empty_pulse_has_zero_integrals() {
        let e = evaluate(&[], &[], 1.0, 5.0, &Constraint::ALL, true);
        assert_eq!(e.rotation, Rot3::identity());
        assert!(e.values.iter().all(|v| v.iter().all(|z| *z == ZERO)));
    }

    #[test]
    fn constant_pi_pulse_recoil() {
        let omega = 2.0 * PI * 100e3;
        for (lambda, expect_zero) in [(5.0, true), (3.0, true), (4.0, false)] {
            let pulse = make_constant(PI, omega / lambda, false, 0.0).unwrap();
            let ti = toggle_integrals(&pulse, &SystemParams::default(), false);
            if expect_zero {
                assert!(ti.norm(Constraint::Rec1) < 1e-12, "{lambda}");
            } else {
                assert!(ti.norm(Constraint::Rec1) > 1e-3);
            }
        }
    }

    #[test]
    fn ent_equals_rab_and_area() {
        let pulse = make_sampled(&[0.3, -1.0, 2.2, 0.0], 3e-6, 2.0 * PI * 20e3).unwrap();
        let ti = toggle_integrals(&pulse, &SystemParams::default(), true);
        assert_eq!(ti.v_ent, ti.v_rab);

        let eta = 0.2156;
        let c = 1.0 - eta * eta / 2.0;
        let pulse = make_constant(PI, 2.0 * PI * 20e3, true, eta).unwrap();
        let ti = toggle_integrals(&pulse, &SystemParams::default(), true);
        let expected = sigma_x() * C64::new(PI / c / 2.0, 0.0);
        assert!(frobenius(&(ti.v_ent - expected)) < 1e-12);
    }

    #[test]
    fn bang_closed_form_agrees_with_evaluator() {
        let omega = 2.0 * PI * 100e3;
        let angles = TorfAngles::First([0.31, 0.17, 1.4]);
        for &lambda in &[2.0, 3.3, 7.0] {
            let closed = bang_closed_form(&angles, lambda).unwrap();
            let pulse = make_torf(&angles, omega / lambda).unwrap();
            let numeric = toggle_integrals(&pulse, &SystemParams::default(), false);
            for c in Constraint::ALL {
                let d = frobenius(&(closed.get(c) - numeric.get(c)));
                assert!(d < 1e-10, "{} at λ = {lambda}: {d}", c.name());
            }
            assert!(frobenius(&(&closed.u_q - &numeric.u_q)) < 1e-12);
        }
        assert!(bang_closed_form(&angles, 1.2).is_err());
    }

    #[test]
    fn closed_form_even_ratio() {
        let ti = bang_closed_form(&TorfAngles::First([0.0, 0.0, PI]), 4.0).unwrap();
        assert!(ti.norm(Constraint::Rec1) > 0.1);
        let ti = bang_closed_form(&TorfAngles::First([0.0, 0.0, PI]), 5.0).unwrap();
        assert!(ti.norm(Constraint::Rec1) < 1e-12);
    }

    #[test]
    fn resolved_sideband_limit() {
        let norms: Vec<f64> = [10.0, 30.0, 100.0]
            .iter()
            .map(|&l| bang_closed_form(&TorfAngles::First([0.0, 0.0, PI / 2.0]), l).unwrap().norm(Constraint::Rec1))
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let taus = [0.3, 0.2, 0.5, 0.1, 0.4];
        let phases = [0.1, -1.3, 2.0, 0.7, -2.9];
        let cs = Constraint::ALL;
        let e = evaluate(&taus, &phases, 0.97, 4.3, &cs, true);
        let h = 1e-6;
        for n in 0..taus.len() {
            let mut up = phases;
            let mut dn = phases;
            up[n] += h;
            dn[n] -= h;
            let eu = evaluate(&taus, &up, 0.97, 4.3, &cs, false);
            let ed = evaluate(&taus, &dn, 0.97, 4.3, &cs, false);
            let fd = (eu.rotation - ed.rotation) / (2.0 * h);
            assert!((fd - e.rotation_grad[n]).norm() < 1e-8);
            for ci in 0..cs.len() {
                let fd = (eu.values[ci] - ed.values[ci]) / C64::new(2.0 * h, 0.0);
                assert!((fd - e.value_grad[ci][n]).norm() < 1e-8, "{n} {ci}");
            }
        }
    }

    #[test]
    fn target_rotation_matches_su2() {
        let r = target_rotation(PI / 2.0, 0.0);
        let y = Vector3::new(0.0, 1.0, 0.0);
        assert!((r * y - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn robust_prediction_trivial_offsets() {
        let pulse = make_constant(PI, 2.0 * PI * 20e3, false, 0.0).unwrap();
        let u = robust_qubit_predict(&pulse, 0.0, 0.0).unwrap();
        assert!(frobenius(&(u - evolve_qubit(&pulse, false, 0.0))) < 1e-14);
        assert!(robust_qubit_predict(&pulse, 0.5 * pulse.rabi(), 0.0).is_err());
    }

    #[test]
    fn validity_flag() {
        let short = make_constant(PI, 2.0 * PI * 20e3, false, 0.0).unwrap();
        assert!(!validity(&short, 0.2156).flagged);
        let long = make_constant(20.0 * PI, 2.0 * PI * 20e3, false, 0.0).unwrap();
        assert!(validity(&long, 0.2156).flagged);
    }
}
