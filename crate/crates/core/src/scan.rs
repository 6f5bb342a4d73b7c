//! Parameter sweeps emitted as tables: gate error versus frequency ratio,
//! versus ground-state population, and over the inhomogeneity plane.
//!
//! Grid points are evaluated in parallel and gathered in grid order, so the
//! output is identical for any thread count. A point that fails keeps its
//! row with `NaN` error and a status code.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fidelity::{simulate, thermal_fidelity, thermal_limit_exact, GateTarget};
use crate::model::{Model, SystemParams};
use crate::propagate::evolve;
use crate::pulse::{self, make_constant, make_torf, PulseProgram};
use crate::torf::{solve_torf, solve_torf2};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pulses that can be rebuilt at every frequency ratio of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseSource {
    #[serde(skip)]
    Fixed { pulse: PulseProgram },
    Constant { theta: f64, speed_correction: bool },
    Torf { theta: f64 },
    Torf2 { theta: f64 },
}

impl PulseSource {
    /// The pulse at ratio `lambda`, driven at `rabi`.
    pub fn build(&self, lambda: f64, rabi: f64, eta: f64) -> Result<PulseProgram> {
        match self {
            PulseSource::Fixed { pulse } => Ok(pulse.clone()),
            PulseSource::Constant { theta, speed_correction } => {
                make_constant(*theta, rabi, *speed_correction, eta)
            }
            PulseSource::Torf { theta } => make_torf(&solve_torf(lambda, *theta)?.angles, rabi),
            PulseSource::Torf2 { theta } => make_torf(&solve_torf2(lambda, *theta, eta)?.angles, rabi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub source: PulseSource,
    pub model: Model,
    /// Frequency ratios `ω/Ω`.
    pub grid: Vec<f64>,
    pub p0: f64,
    pub target: GateTarget,
    /// Supplies `η`, the truncation and the Rabi frequency; `ω` is set per point.
    pub params: SystemParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: Vec<f64>,
    pub infidelity: f64,
    /// Extra numeric columns (for example a reference bound).
    pub extra: Vec<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub kind: String,
    pub params: SystemParams,
    pub pulse_sha256: Vec<String>,
    pub truncation: usize,
    pub p0: Vec<f64>,
    pub model: Model,
    pub target: GateTarget,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub point_columns: Vec<String>,
    pub extra_columns: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.point_columns.iter().map(String::as_str).collect();
        header.push("infidelity");
        header.extend(self.extra_columns.iter().map(String::as_str));
        header.push("status");
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.point.iter().map(|x| x.to_string()).collect();
            rec.push(row.infidelity.to_string());
            rec.extend(row.extra.iter().map(|x| x.to_string()));
            rec.push(row.status.clone());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Write the table and its JSON sidecar (`<path>.json`).
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()?)?;
        let mut side = csv_path.as_os_str().to_owned();
        side.push(".json");
        let mut f = std::fs::File::create(side)?;
        serde_json::to_writer_pretty(&mut f, &self.metadata)?;
        writeln!(f)?;
        Ok(())
    }
}

pub fn pulse_hash(p: &PulseProgram) -> String {
    hex::encode(Sha256::digest(pulse::serialize(p).as_bytes()))
}

fn status_of(e: &Error) -> String {
    match e {
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::NotHermitian(_) => "not_hermitian",
        Error::Truncation { .. } => "truncation",
        Error::GuardMargin { .. } => "guard_margin",
        Error::AvhValidity(_) => "avh_validity",
        Error::NoConvergence { .. } => "no_convergence",
        _ => "error",
    }
    .to_string()
}

fn row(point: Vec<f64>, outcome: Result<(f64, Vec<f64>)>) -> SweepRow {
    match outcome {
        Ok((infidelity, extra)) => SweepRow {
            point,
            infidelity,
            extra,
            status: "ok".into(),
        },
        Err(e) => SweepRow {
            point,
            infidelity: f64::NAN,
            extra: Vec::new(),
            status: status_of(&e),
        },
    }
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Ratios 2 to 20 in steps of 0.05.
pub fn default_ratio_grid() -> Vec<f64> {
    linspace(2.0, 20.0, 361)
}

/// 81 offsets spanning ±0.25 Ω.
pub fn default_map_axis() -> Vec<f64> {
    linspace(-0.25, 0.25, 81)
}

/// Gate error at each frequency ratio. The drive stays at `params.rabi`
/// and the trap frequency follows the ratio.
pub fn sweep_ratio(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    spec.params.validate()?;
    let expanded = spec.model != Model::Full;
    let rows: Vec<SweepRow> = spec
        .grid
        .par_iter()
        .map(|&lambda| {
            let outcome = (|| {
                if !(lambda > 0.0) || (expanded && lambda <= crate::avh::MIN_RATIO) {
                    return Err(Error::InvalidParameter(format!("ratio {lambda} outside model validity")));
                }
                let pulse = spec.source.build(lambda, spec.params.rabi, spec.params.eta)?;
                let params = SystemParams {
                    omega: lambda * pulse.rabi(),
                    ..spec.params
                };
                let r = simulate(&params, &pulse, spec.model, &spec.target, spec.p0)?;
                Ok((r.infidelity(), Vec::new()))
            })();
            row(vec![lambda], outcome)
        })
        .collect();
    let hashes = match &spec.source {
        PulseSource::Fixed { pulse } => vec![pulse_hash(pulse)],
        _ => Vec::new(),
    };
    Ok(SweepResult {
        point_columns: vec!["lambda".into()],
        extra_columns: Vec::new(),
        rows,
        metadata: SweepMetadata {
            kind: "ratio".into(),
            params: spec.params,
            pulse_sha256: hashes,
            truncation: spec.params.truncation,
            p0: vec![spec.p0],
            model: spec.model,
            target: spec.target,
            tool_version: TOOL_VERSION.into(),
            config: serde_json::to_value(&spec.source).ok(),
        },
    })
}

/// Gate error over a grid of `(δΔ/Ω, δΩ/Ω)` under the full Hamiltonian.
/// Offsets are in units of `params.rabi`; rows run over `d_delta` slowest.
pub fn robustness_map(
    pulse: &PulseProgram,
    params: &SystemParams,
    d_delta: &[f64],
    d_omega: &[f64],
    p0: f64,
    target: &GateTarget,
) -> Result<SweepResult> {
    if d_delta.is_empty() || d_omega.is_empty() {
        return Err(Error::InvalidParameter("map grid is empty".into()));
    }
    params.validate()?;
    let grid: Vec<(f64, f64)> = d_delta
        .iter()
        .flat_map(|&a| d_omega.iter().map(move |&b| (a, b)))
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(a, b)| {
            let p = SystemParams {
                delta_detuning: a * params.rabi,
                delta_rabi: b * params.rabi,
                ..*params
            };
            let outcome = simulate(&p, pulse, Model::Full, target, p0).map(|r| (r.infidelity(), Vec::new()));
            row(vec![a, b], outcome)
        })
        .collect();
    Ok(SweepResult {
        point_columns: vec!["ddelta_over_omega".into(), "domega_over_omega".into()],
        extra_columns: Vec::new(),
        rows,
        metadata: SweepMetadata {
            kind: "map".into(),
            params: *params,
            pulse_sha256: vec![pulse_hash(pulse)],
            truncation: params.truncation,
            p0: vec![p0],
            model: Model::Full,
            target: *target,
            tool_version: TOOL_VERSION.into(),
            config: None,
        },
    })
}

/// Gate error of each pulse at each ground-state probability, with the
/// recoil-free thermal limit as a reference column. Each pulse is evolved
/// once; `params.omega` fixes the trap.
pub fn error_vs_p0(
    pulses: &[PulseProgram],
    p0_grid: &[f64],
    target: &GateTarget,
    params: &SystemParams,
    model: Model,
) -> Result<SweepResult> {
    if pulses.is_empty() || p0_grid.is_empty() {
        return Err(Error::InvalidParameter("need at least one pulse and one p0".into()));
    }
    params.validate()?;
    let props: Vec<_> = pulses.par_iter().map(|p| evolve(params, p, model)).collect();
    let mut rows = Vec::with_capacity(pulses.len() * p0_grid.len());
    for (k, prop) in props.iter().enumerate() {
        for &p0 in p0_grid {
            let limit = thermal_limit_exact(p0, params.eta, target.theta_tar);
            let outcome = match prop {
                Ok(u) => thermal_fidelity(u, target, p0).map(|r| (r.infidelity(), vec![limit])),
                Err(e) => Err(Error::InvalidParameter(e.to_string())),
            };
            rows.push(row(vec![k as f64, p0], outcome));
        }
    }
    Ok(SweepResult {
        point_columns: vec!["pulse".into(), "p0".into()],
        extra_columns: vec!["thermal_limit".into()],
        rows,
        metadata: SweepMetadata {
            kind: "p0".into(),
            params: *params,
            pulse_sha256: pulses.iter().map(pulse_hash).collect(),
            truncation: params.truncation,
            p0: p0_grid.to_vec(),
            model,
            target: *target,
            tool_version: TOOL_VERSION.into(),
            config: Some(serde_json::Value::from(
                pulses.iter().map(|p| p.label.clone()).collect::<Vec<_>>(),
            )),
        },
    })
}
