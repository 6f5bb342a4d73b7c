//! Gradient-based design of smooth phase profiles.
//!
//! A control problem asks for a piecewise-constant phase whose ideal-qubit
//! rotation hits the target while a chosen set of toggling-frame integrals
//! vanish. The cost is
//! `1 − |Tr(U_Tar† U_q)|²/4 + Σ_c w_c ‖V_c(T)‖_F²`, which is the squared norm
//! of a residual vector with an exact Jacobian. The solver is
//! Levenberg-Marquardt in its dual form, so the linear solve has the size of
//! the residual, not of the number of segments.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avh::{self, target_rotation, Constraint};
use crate::error::{Error, Result};
use crate::fidelity::GateTarget;
use crate::model::{DEFAULT_ETA, DEFAULT_RABI, DEFAULT_TRAP_FREQUENCY};
use crate::pulse::{make_sampled, make_torf, PulseProgram, Segment};
use crate::torf::solve_torf;

/// Threshold on the target defect and every constraint norm.
pub const CONVERGENCE_TOL: f64 = 1e-8;
/// Segments per π of pulse area.
pub const DEFAULT_DENSITY: f64 = 40.0;
pub const DEFAULT_RESTARTS: usize = 8;

const MAX_ITERATIONS: usize = 400;
const STOP_COST: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Recoil-free under the Lamb-Dicke Hamiltonian.
    RecoilLd,
    /// Recoil-free to second order in η.
    Recoil2,
    /// Recoil-free and disentangling from thermal motion.
    Tod,
    /// Motion-insensitive and robust to detuning and Rabi offsets.
    RobustMi,
}

impl Preset {
    pub fn constraints(self) -> Vec<Constraint> {
        use Constraint::*;
        match self {
            Preset::RecoilLd => vec![Rec1],
            Preset::Recoil2 => vec![Rec1, Rec2],
            Preset::Tod => vec![Rec1, Rec2, Ent],
            Preset::RobustMi => vec![Rec1, Rec2, Det, Rab],
        }
    }

    /// Whether the qubit rotation is slowed by `1 − η²/2`.
    pub fn eta_correction(self) -> bool {
        self != Preset::RecoilLd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProblem {
    pub target: GateTarget,
    /// `ω/Ω`; infinite drops the recoil constraints.
    pub lambda: f64,
    pub eta: f64,
    /// Rabi frequency in rad/s, used to convert durations.
    pub rabi: f64,
    pub constraints: Vec<Constraint>,
    pub weights: Vec<f64>,
    pub eta_correction: bool,
}

impl ControlProblem {
    pub fn preset(preset: Preset, target: GateTarget, lambda: f64) -> Self {
        let constraints = preset.constraints();
        Self {
            target,
            lambda,
            eta: DEFAULT_ETA,
            rabi: if lambda.is_finite() {
                DEFAULT_TRAP_FREQUENCY / lambda
            } else {
                DEFAULT_RABI
            },
            weights: vec![1.0; constraints.len()],
            constraints,
            eta_correction: preset.eta_correction(),
        }
    }

    pub fn with_rabi(self, rabi: f64) -> Self {
        Self { rabi, ..self }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    pub fn scale(&self) -> f64 {
        if self.eta_correction {
            1.0 - self.eta * self.eta / 2.0
        } else {
            1.0
        }
    }

    /// Constraints that are meaningful at this ratio, with their weights.
    pub fn active(&self) -> Vec<(Constraint, f64)> {
        self.constraints
            .iter()
            .zip(&self.weights)
            .filter(|(c, _)| self.lambda.is_finite() || c.harmonic() == 0)
            .map(|(&c, &w)| (c, w))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.constraints.len() != self.weights.len() {
            return Err(Error::InvalidParameter("one weight per constraint required".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("constraint weights must be positive".into()));
        }
        if !(self.rabi > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter("Rabi frequency and ratio must be positive".into()));
        }
        Ok(())
    }
}

/// Default segment count `⌈40 ΩT/π⌉`, at least 2.
pub fn default_segments(omega_t: f64) -> usize {
    ((DEFAULT_DENSITY * omega_t / PI).ceil() as usize).max(2)
}

struct Residual {
    r: DVector<f64>,
    jac: Option<DMatrix<f64>>,
    defect: f64,
    norms: Vec<f64>,
}

fn residual(phases: &[f64], problem: &ControlProblem, tau: f64, with_jac: bool) -> Residual {
    let n = phases.len();
    let taus = vec![tau; n];
    let active = problem.active();
    let cons: Vec<Constraint> = active.iter().map(|a| a.0).collect();
    let e = avh::evaluate(&taus, phases, problem.scale(), problem.lambda, &cons, with_jac);
    let tr = target_rotation(problem.target.theta_tar, problem.target.axis_angle);
    let m = 9 + 6 * cons.len();
    let mut r = DVector::zeros(m);
    let inv8 = 1.0 / 8f64.sqrt();
    let diff = e.rotation - tr;
    for (i, x) in diff.iter().enumerate() {
        r[i] = x * inv8;
    }
    let mut norms = Vec::with_capacity(cons.len());
    for (ci, (_, w)) in active.iter().enumerate() {
        let s = (2.0 * w).sqrt();
        let v = &e.values[ci];
        for k in 0..3 {
            r[9 + 6 * ci + 2 * k] = s * v[k].re;
            r[9 + 6 * ci + 2 * k + 1] = s * v[k].im;
        }
        norms.push(v.norm() * std::f64::consts::SQRT_2);
    }
    let jac = with_jac.then(|| {
        let mut j = DMatrix::zeros(m, n);
        for seg in 0..n {
            for (i, x) in e.rotation_grad[seg].iter().enumerate() {
                j[(i, seg)] = x * inv8;
            }
            for (ci, (_, w)) in active.iter().enumerate() {
                let s = (2.0 * w).sqrt();
                let g = &e.value_grad[ci][seg];
                for k in 0..3 {
                    j[(9 + 6 * ci + 2 * k, seg)] = s * g[k].re;
                    j[(9 + 6 * ci + 2 * k + 1, seg)] = s * g[k].im;
                }
            }
        }
        j
    });
    let defect = (3.0 - (tr.transpose() * e.rotation).trace()) / 4.0;
    Residual {
        r,
        jac,
        defect,
        norms,
    }
}

/// Cost and its gradient with respect to each segment phase, for a pulse of
/// duration `t` (seconds) split into `phases.len()` equal segments.
pub fn cost_and_gradient(phases: &[f64], problem: &ControlProblem, t: f64) -> Result<(f64, Vec<f64>)> {
    problem.validate()?;
    if phases.len() < 2 || !(t > 0.0) {
        return Err(Error::InvalidParameter("need at least two segments and T > 0".into()));
    }
    let tau = problem.rabi * t / phases.len() as f64;
    let res = residual(phases, problem, tau, true);
    let jac = res.jac.expect("jacobian requested");
    let grad = jac.transpose() * &res.r * 2.0;
    Ok((res.r.norm_squared(), grad.iter().copied().collect()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationResult {
    #[serde(skip)]
    pub pulse: Option<PulseProgram>,
    pub phases: Vec<f64>,
    pub duration: f64,
    pub cost: f64,
    pub constraint_norms: BTreeMap<String, f64>,
    pub target_defect: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl OptimizationResult {
    pub fn pulse(&self) -> &PulseProgram {
        self.pulse.as_ref().expect("result carries its pulse")
    }

    pub fn max_norm(&self) -> f64 {
        self.constraint_norms.values().copied().fold(0.0, f64::max)
    }
}

fn is_converged(res: &Residual) -> bool {
    res.defect < CONVERGENCE_TOL && res.norms.iter().all(|&n| n < CONVERGENCE_TOL)
}

/// Levenberg-Marquardt from one starting point.
fn descend(start: Vec<f64>, problem: &ControlProblem, tau: f64) -> (Vec<f64>, Residual, usize) {
    let mut x = start;
    let mut res = residual(&x, problem, tau, true);
    let mut cost = res.r.norm_squared();
    let mut mu = 1e-2;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && cost > STOP_COST {
        iterations += 1;
        let jac = res.jac.as_ref().expect("jacobian");
        let jjt = jac * jac.transpose();
        let mut accepted = false;
        for _ in 0..20 {
            let mut a = jjt.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += mu;
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = -(jac.transpose() * chol.solve(&res.r));
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let tres = residual(&trial, problem, tau, true);
            let tcost = tres.r.norm_squared();
            if tcost < cost {
                x = trial;
                res = tres;
                cost = tcost;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    (x, res, iterations)
}

fn finish(phases: Vec<f64>, res: &Residual, iterations: usize, problem: &ControlProblem, t: f64) -> Result<OptimizationResult> {
    let dt = t / phases.len() as f64;
    let wrapped: Vec<f64> = phases.iter().map(|&p| crate::pulse::wrap_phase(p)).collect();
    let mut pulse = make_sampled(&wrapped, dt, problem.rabi)?;
    pulse.label = "optimized".into();
    let constraint_norms = problem
        .active()
        .iter()
        .zip(&res.norms)
        .map(|((c, _), &n)| (c.name().to_string(), n))
        .collect();
    Ok(OptimizationResult {
        pulse: Some(pulse),
        phases: wrapped,
        duration: t,
        cost: res.r.norm_squared(),
        constraint_norms,
        target_defect: res.defect,
        iterations,
        converged: is_converged(res),
    })
}

/// Bang-bang starting guess: the first-order time-optimal pulse stretched
/// to area `omega_t` and sampled on `n` equal segments.
fn bang_seed(problem: &ControlProblem, omega_t: f64, n: usize) -> Vec<f64> {
    let base = problem
        .lambda
        .is_finite()
        .then(|| solve_torf(problem.lambda.max(1.6), problem.target.theta_tar).ok())
        .flatten()
        .and_then(|s| make_torf(&s.angles, 1.0).ok());
    let Some(p) = base else {
        return vec![problem.target.axis_angle; n];
    };
    let stretch = p.duration() / omega_t;
    (0..n)
        .map(|k| p.phase_at((k as f64 + 0.5) * omega_t / n as f64 * stretch) + problem.target.axis_angle)
        .collect()
}

/// Best of `restarts` random starts plus one bang-bang start at fixed
/// duration `t` (seconds) with `n` segments.
pub fn solve_fixed_t(problem: &ControlProblem, t: f64, n: usize, restarts: usize, seed: u64) -> Result<OptimizationResult> {
    problem.validate()?;
    if n < 2 || !(t > 0.0) {
        return Err(Error::InvalidParameter("need at least two segments and T > 0".into()));
    }
    let tau = problem.rabi * t / n as f64;
    let mut starts = vec![bang_seed(problem, problem.rabi * t, n)];
    for k in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(k as u64));
        starts.push((0..n).map(|_| PI - rng.gen_range(0.0..2.0 * PI)).collect());
    }
    let runs: Vec<(Vec<f64>, Residual, usize)> = starts
        .into_par_iter()
        .map(|s| descend(s, problem, tau))
        .collect();
    // converged runs first, then lowest cost; ties keep the earlier start
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            let key = |r: &Residual| (!is_converged(r), r.r.norm_squared());
            let (ka, kb) = (key(&a.1), key(&b.1));
            ka.0.cmp(&kb.0)
                .then(ka.1.partial_cmp(&kb.1).unwrap_or(std::cmp::Ordering::Equal))
                .then(i.cmp(j))
        })
        .map(|(_, r)| r)
        .expect("at least one start");
    finish(best.0, &best.1, best.2, problem, t)
}

/// Shortest duration at which the problem is solved: geometric growth from
/// the speed limit, then bisection to relative `1e-3`.
pub fn min_time_search(problem: &ControlProblem, density: f64, restarts: usize, seed: u64) -> Result<OptimizationResult> {
    problem.validate()?;
    let segments = |t: f64| (((density * problem.rabi * t) / PI).ceil() as usize).max(2);
    let solve = |t: f64| solve_fixed_t(problem, t, segments(t), restarts, seed);

    let theta = problem.target.theta_tar;
    let floor = theta / (problem.scale() * problem.rabi);
    let ceiling = 20.0 * theta / problem.rabi;
    let mut lo = floor;
    let mut t = floor;
    let mut best: Option<OptimizationResult> = None;
    let mut last_cost = f64::INFINITY;
    while t <= ceiling {
        let r = solve(t)?;
        last_cost = r.cost;
        if r.converged {
            best = Some(r);
            break;
        }
        lo = t;
        t *= 1.05;
    }
    let Some(mut hi_result) = best else {
        return Err(Error::NoConvergence {
            message: format!("no converged design below the ceiling T = {ceiling:.3e} s"),
            residual: last_cost.sqrt(),
        });
    };
    let mut hi = hi_result.duration;
    while (hi - lo) > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        let r = solve(mid)?;
        if r.converged {
            hi = mid;
            hi_result = r;
        } else {
            lo = mid;
        }
    }
    Ok(hi_result)
}

/// Named composite pulses used as references. `rabi` is the nominal Rabi
/// frequency; the composite is driven at `Ω/(1 − η²/2)` so each constant
/// subpulse completes a π rotation of the slowed qubit in `π/Ω`.
pub fn composite_reference(name: &str, rabi: f64, eta: f64) -> Result<PulseProgram> {
    let phases_deg: &[f64] = match name {
        "jones-5a" => &[240.0, 210.0, 300.0, 210.0, 240.0],
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unknown composite pulse '{name}' (known: jones-5a)"
            )))
        }
    };
    let scale = 1.0 - eta * eta / 2.0;
    let drive = rabi / scale;
    let segments = phases_deg
        .iter()
        .map(|d| Segment {
            duration: PI / (drive * scale),
            phase: d.to_radians(),
        })
        .collect();
    PulseProgram::new(drive, segments, name)
}
