//! Time-optimal recoil-free (TORF) bang-bang pulses.
//!
//! First order: five segments `θ1 θ2 θ3 θ2 θ1` with phases `0 π 0 π 0`
//! solve three trigonometric equations. Eliminating the linear angle sum
//! leaves a 2×2 root-finding problem in `(θ1, θ2)`; the pulse area is
//! `θ_Tar + 4θ2`, so the time-optimal root is the one with smallest `θ2`.
//!
//! Second order: nine segments with alternating phases. The recoil
//! conditions leave a one-parameter family of solutions, and the shortest
//! member is found by bisecting on the total π-phase angle `θ2 + θ4`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avh::{self, Constraint, MIN_RATIO};
use crate::error::{Error, Result};
use crate::pulse::TorfAngles;

/// Acceptance threshold on the residual of a returned solution.
pub const RESIDUAL_TOL: f64 = 1e-10;

const FD_STEP: f64 = 1e-7;
const RANDOM_STARTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorfSolution {
    pub angles: TorfAngles,
    pub lambda: f64,
    pub theta_tar: f64,
    /// Pulse area `ΩT`.
    pub omega_t: f64,
    pub residual: f64,
}

fn check_ratio(lambda: f64) -> Result<()> {
    if !(lambda > MIN_RATIO && lambda.is_finite()) {
        return Err(Error::AvhValidity(format!(
            "ω/Ω must exceed {MIN_RATIO} (strong motional excitation below), got {lambda}"
        )));
    }
    Ok(())
}

fn check_target(theta_tar: f64) -> Result<()> {
    if !(theta_tar > 0.0 && theta_tar <= PI + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "target angle must lie in (0, π], got {theta_tar}"
        )));
    }
    Ok(())
}

/// The three first-order bang-bang residuals `(r0, r1, r2)`.
pub fn residuals_b1(theta1: f64, theta2: f64, theta3: f64, lambda: f64, theta_tar: f64) -> [f64; 3] {
    let (lm, lp) = (lambda - 1.0, lambda + 1.0);
    let h = theta3 / 2.0;
    let a1 = (theta1 * lm + theta2 * lp + h * lm).sin();
    let a2 = (theta2 * lp + h * lm).sin();
    let a3 = (h * lm).sin();
    let b1 = (theta1 * lp + theta2 * lm + h * lp).sin();
    let b2 = (theta2 * lm + h * lp).sin();
    let b3 = (h * lp).sin();
    [
        2.0 * theta1 - 2.0 * theta2 + theta3 - theta_tar,
        lp * a1 - 2.0 * lambda * a2 + 2.0 * lambda * a3,
        (1.0 - lambda) * b1 + 2.0 * lambda * b2 - 2.0 * lambda * b3,
    ]
}

fn norm3(r: [f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

fn reduced(x: [f64; 2], lambda: f64, theta_tar: f64) -> [f64; 2] {
    let t3 = theta_tar - 2.0 * x[0] + 2.0 * x[1];
    let r = residuals_b1(x[0], x[1], t3, lambda, theta_tar);
    [r[1], r[2]]
}

/// Damped Newton on the reduced 2×2 system with a forward-difference
/// Jacobian.
fn newton2(start: [f64; 2], lambda: f64, theta_tar: f64) -> [f64; 2] {
    let f = |x: [f64; 2]| reduced(x, lambda, theta_tar);
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let mut x = start;
    let mut r = f(x);
    for _ in 0..100 {
        if norm(r) < 1e-14 {
            break;
        }
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut xp = x;
            xp[j] += FD_STEP;
            let rp = f(xp);
            for i in 0..2 {
                jac[i][j] = (rp[i] - r[i]) / FD_STEP;
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dx = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha > 1e-6 {
            let xn = [x[0] + alpha * dx[0], x[1] + alpha * dx[1]];
            let rn = f(xn);
            if norm(rn) < norm(r) {
                x = xn;
                r = rn;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    x
}

/// Turn a raw root into a checked candidate, or reject it.
fn accept_first(x: [f64; 2], lambda: f64, theta_tar: f64) -> Option<TorfSolution> {
    let clamp = |v: f64| if v < 0.0 && v > -1e-9 { 0.0 } else { v };
    let (mut t1, mut t2) = (clamp(x[0]), clamp(x[1]));
    if t2 < 1e-9 {
        // θ2 → 0 merges all segments into one constant pulse
        t1 = 0.0;
        t2 = 0.0;
    }
    let t3 = clamp(theta_tar - 2.0 * t1 + 2.0 * t2);
    let angles = [t1, t2, t3];
    if angles.iter().any(|&a| !(0.0..2.0 * PI).contains(&a)) {
        return None;
    }
    let residual = norm3(residuals_b1(t1, t2, t3, lambda, theta_tar));
    (residual < RESIDUAL_TOL).then(|| TorfSolution {
        angles: TorfAngles::First(angles),
        lambda,
        theta_tar,
        omega_t: 2.0 * t1 + 2.0 * t2 + t3,
        residual,
    })
}

fn seed_for(lambda: f64, theta_tar: f64) -> u64 {
    lambda.to_bits() ^ theta_tar.to_bits().rotate_left(17)
}

/// Time-optimal first-order recoil-free angles for ratio `lambda`.
pub fn solve_torf(lambda: f64, theta_tar: f64) -> Result<TorfSolution> {
    check_ratio(lambda)?;
    check_target(theta_tar)?;

    let mut best: Option<TorfSolution> = None;
    let mut best_residual = f64::INFINITY;
    let mut consider = |start: [f64; 2], best: &mut Option<TorfSolution>| {
        let root = newton2(start, lambda, theta_tar);
        let t3 = theta_tar - 2.0 * root[0] + 2.0 * root[1];
        best_residual = best_residual.min(norm3(residuals_b1(root[0], root[1], t3, lambda, theta_tar)));
        if let Some(sol) = accept_first(root, lambda, theta_tar) {
            if best.as_ref().map_or(true, |b| sol.omega_t < b.omega_t - 1e-12) {
                *best = Some(sol);
            }
        }
    };

    // The residuals oscillate on the scale 2π/(λ+1), so roots are dense.
    // Starts are laid on a grid finer than that scale, scanned by
    // increasing θ2; once a root is known, rows far above it cannot beat it.
    let h = (PI / (4.0 * (lambda + 1.0))).min(PI / 32.0);
    let rows = (PI / 2.0 / h).ceil() as usize;
    for i in 0..=rows {
        let t2 = i as f64 * h;
        if let Some(b) = &best {
            if t2 > b.angles.values()[1] + 2.0 * h {
                break;
            }
        }
        let cols = ((theta_tar / 2.0 + t2) / h).ceil() as usize;
        for j in 0..=cols {
            consider([j as f64 * h, t2], &mut best);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(lambda, theta_tar));
    for _ in 0..RANDOM_STARTS {
        consider([rng.gen_range(0.0..PI / 2.0), rng.gen_range(0.0..PI / 2.0)], &mut best);
    }
    best.ok_or_else(|| Error::NoConvergence {
        message: format!("no non-negative TORF root at λ = {lambda}, θ = {theta_tar}"),
        residual: best_residual,
    })
}

fn fifth_angle(y: &[f64; 4], theta_tar: f64, scale: f64) -> f64 {
    theta_tar / scale - 2.0 * (y[0] - y[1] + y[2] - y[3])
}

/// Second-order recoil residuals of the nine-segment pulse, the last angle
/// fixed by the rotation condition. Entries are scaled so the vector norm
/// equals the Frobenius norm of the operators.
fn second_residuals(y: &[f64; 4], lambda: f64, theta_tar: f64, scale: f64) -> DVector<f64> {
    let t5 = fifth_angle(y, theta_tar, scale);
    let taus = TorfAngles::Second([y[0], y[1], y[2], y[3], t5]).segment_angles();
    let phases: Vec<f64> = (0..9).map(|n| if n % 2 == 0 { 0.0 } else { PI }).collect();
    let e = avh::evaluate(&taus, &phases, scale, lambda, &[Constraint::Rec1, Constraint::Rec2], false);
    let mut r = DVector::zeros(12);
    for (c, v) in e.values.iter().enumerate() {
        for k in 0..3 {
            r[6 * c + 2 * k] = v[k].re * std::f64::consts::SQRT_2;
            r[6 * c + 2 * k + 1] = v[k].im * std::f64::consts::SQRT_2;
        }
    }
    r
}

/// Angles `(θ1, θ2, θ3, θ4)` from the fixed-sum parameters `(θ1, u, θ3)`.
fn expand(z: &[f64; 3], sum: f64) -> [f64; 4] {
    [z[0], z[1], z[2], sum - z[1]]
}

/// Projected Levenberg-Marquardt at fixed `θ2 + θ4 = sum`.
fn lm_fixed_sum(start: [f64; 3], sum: f64, lambda: f64, theta_tar: f64, scale: f64) -> ([f64; 3], f64) {
    let project = |z: [f64; 3]| [z[0].max(0.0), z[1].clamp(0.0, sum), z[2].max(0.0)];
    let f = |z: &[f64; 3]| second_residuals(&expand(z, sum), lambda, theta_tar, scale);
    let mut z = project(start);
    let mut r = f(&z);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    for _ in 0..200 {
        if cost < 1e-26 {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), 3);
        for j in 0..3 {
            let mut zp = z;
            zp[j] += FD_STEP;
            let rp = f(&zp);
            jac.set_column(j, &((rp - &r) / FD_STEP));
        }
        let g = jac.transpose() * &r;
        let h = jac.transpose() * &jac;
        let mut accepted = false;
        for _ in 0..12 {
            let mut a = h.clone();
            for d in 0..3 {
                a[(d, d)] += mu * (1.0 + h[(d, d)]);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let zn = project([z[0] + step[0], z[1] + step[1], z[2] + step[2]]);
            let rn = f(&zn);
            let cn = rn.norm_squared();
            if cn < cost {
                z = zn;
                r = rn;
                cost = cn;
                mu = (mu * 0.3).max(1e-12);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    (z, cost.sqrt())
}

fn feasible(z: &[f64; 3], residual: f64, sum: f64, theta_tar: f64, scale: f64) -> bool {
    residual < 1e-11 && fifth_angle(&expand(z, sum), theta_tar, scale) > -1e-9
}

/// Search a fixed sum for a feasible root, trying `warm` first.
fn search_sum(
    sum: f64,
    warm: &[[f64; 3]],
    lambda: f64,
    theta_tar: f64,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Option<[f64; 3]> {
    let mut starts: Vec<[f64; 3]> = warm.to_vec();
    for _ in 0..24 {
        starts.push([
            rng.gen_range(0.0..theta_tar / 2.0),
            rng.gen_range(0.0..=sum),
            rng.gen_range(0.0..theta_tar / 2.0),
        ]);
    }
    starts.into_iter().find_map(|s| {
        let (z, res) = lm_fixed_sum(s, sum, lambda, theta_tar, scale);
        feasible(&z, res, sum, theta_tar, scale).then_some(z)
    })
}

/// Minimum-norm Gauss-Newton polish on all four free angles.
fn polish(mut y: [f64; 4], lambda: f64, theta_tar: f64, scale: f64) -> [f64; 4] {
    for _ in 0..8 {
        let r = second_residuals(&y, lambda, theta_tar, scale);
        if r.norm() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), 4);
        for j in 0..4 {
            let mut yp = y;
            yp[j] += FD_STEP;
            jac.set_column(j, &((second_residuals(&yp, lambda, theta_tar, scale) - &r) / FD_STEP));
        }
        let svd = jac.svd(true, true);
        let Ok(step) = svd.solve(&(-&r), 1e-9) else { break };
        let yn = [y[0] + step[0], y[1] + step[1], y[2] + step[2], y[3] + step[3]];
        if second_residuals(&yn, lambda, theta_tar, scale).norm() < r.norm() {
            y = yn;
        } else {
            break;
        }
    }
    y
}

fn second_solution(y: [f64; 4], lambda: f64, theta_tar: f64, eta: f64) -> TorfSolution {
    let scale = 1.0 - eta * eta / 2.0;
    let y = y.map(|a| if a < 0.0 && a > -1e-9 { 0.0 } else { a });
    let t5 = fifth_angle(&y, theta_tar, scale);
    let angles = TorfAngles::Second([y[0], y[1], y[2], y[3], t5]);
    let taus = angles.segment_angles();
    let phases: Vec<f64> = (0..9).map(|n| if n % 2 == 0 { 0.0 } else { PI }).collect();
    let e = avh::evaluate(&taus, &phases, scale, lambda, &[Constraint::Rec1, Constraint::Rec2], false);
    let norms = e.values.iter().map(|v| v.norm() * std::f64::consts::SQRT_2);
    let target = avh::target_rotation(theta_tar, 0.0);
    let defect = (3.0 - (target.transpose() * e.rotation).trace()) / 4.0;
    let residual = norms.fold(defect.abs(), f64::max);
    TorfSolution {
        angles,
        lambda,
        theta_tar,
        omega_t: angles.area(),
        residual,
    }
}

/// Time-optimal second-order recoil-free angles, with the qubit slowed by
/// `1 − η²/2`.
pub fn solve_torf2(lambda: f64, theta_tar: f64, eta: f64) -> Result<TorfSolution> {
    check_ratio(lambda)?;
    check_target(theta_tar)?;
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("η must lie in [0, 1), got {eta}")));
    }
    let scale = 1.0 - eta * eta / 2.0;

    let constant = second_solution([0.0; 4], lambda, theta_tar, eta);
    if constant.residual < 1e-10 {
        return Ok(TorfSolution {
            angles: TorfAngles::Second([0.0, 0.0, 0.0, 0.0, theta_tar / scale]),
            ..constant
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(lambda, theta_tar) ^ eta.to_bits());
    // grow the π-phase angle until the family is reached
    let mut lo = 0.0;
    let mut sum = 0.01 * theta_tar;
    let mut hi_solution = None;
    while sum < 2.0 * PI {
        if let Some(z) = search_sum(sum, &[], lambda, theta_tar, scale, &mut rng) {
            hi_solution = Some((sum, z));
            break;
        }
        lo = sum;
        sum *= 1.15;
    }
    let Some((mut hi, mut z_hi)) = hi_solution else {
        return Err(Error::NoConvergence {
            message: format!("no second-order TORF family found at λ = {lambda}"),
            residual: f64::INFINITY,
        });
    };
    while hi - lo > 1e-9 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        match search_sum(mid, &[z_hi], lambda, theta_tar, scale, &mut rng) {
            Some(z) => {
                hi = mid;
                z_hi = z;
            }
            None => lo = mid,
        }
    }
    let y = polish(expand(&z_hi, hi), lambda, theta_tar, scale);
    let sol = second_solution(y, lambda, theta_tar, eta);
    let valid = sol.angles.values().iter().all(|&a| a >= 0.0);
    if sol.residual < 1e-8 && valid {
        Ok(sol)
    } else {
        Err(Error::NoConvergence {
            message: format!("second-order TORF polish failed at λ = {lambda}"),
            residual: sol.residual,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationPoint {
    pub lambda: f64,
    /// `ΩT` of the time-optimal solution, absent when the solve failed.
    pub omega_t: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

/// Time-optimal pulse area across a grid of ratios. Failed points are kept
/// with their error message.
pub fn duration_curve(theta_tar: f64, lambda_grid: &[f64]) -> Vec<DurationPoint> {
    lambda_grid
        .par_iter()
        .map(|&lambda| match solve_torf(lambda, theta_tar) {
            Ok(s) => DurationPoint {
                lambda,
                omega_t: Some(s.omega_t),
                residual: Some(s.residual),
                error: None,
            },
            Err(e) => DurationPoint {
                lambda,
                omega_t: None,
                residual: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Target angles (degrees) and ratios of the standard parameter table.
pub const TABLE_TARGETS_DEG: [f64; 3] = [45.0, 90.0, 180.0];
pub const TABLE_RATIOS: [f64; 5] = [2.0, 3.0, 4.0, 5.0, 6.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub theta_tar_deg: f64,
    pub lambda: f64,
    pub angles_deg: [f64; 3],
    pub omega_t: f64,
    pub residual: f64,
}

/// Time-optimal first-order angles for every target/ratio pair of the
/// standard table, target-major.
pub fn table1() -> Result<Vec<TableRow>> {
    let cases: Vec<(f64, f64)> = TABLE_TARGETS_DEG
        .iter()
        .flat_map(|&t| TABLE_RATIOS.iter().map(move |&l| (t, l)))
        .collect();
    cases
        .par_iter()
        .map(|&(deg, lambda)| {
            let s = solve_torf(lambda, deg.to_radians())?;
            let v = s.angles.values();
            Ok(TableRow {
                theta_tar_deg: deg,
                lambda,
                angles_deg: [v[0].to_degrees(), v[1].to_degrees(), v[2].to_degrees()],
                omega_t: s.omega_t,
                residual: s.residual,
            })
        })
        .collect()
}
