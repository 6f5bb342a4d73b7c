//! Piecewise-constant laser-phase waveforms.
//!
//! The drive amplitude is constant during a pulse; only the phase `φ(t)`
//! changes, segment by segment. Bang-bang designs are kept as exact segments
//! so downstream integrals can be evaluated in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PULSE_FILE_VERSION: u32 = 1;

/// Map a phase into `(−π, π]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let k = ((phase - PI) / (2.0 * PI)).ceil();
    let wrapped = phase - 2.0 * PI * k;
    // guard against roundoff landing exactly on −π
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(rename = "phase_rad")]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseProgram {
    rabi_hz: f64,
    segments: Vec<Segment>,
    pub label: String,
}

impl PulseProgram {
    /// Build from raw segments; durations must be positive and finite, phases
    /// finite. Phases are wrapped into `(−π, π]`.
    pub fn new(rabi: f64, segments: Vec<Segment>, label: impl Into<String>) -> Result<Self> {
        Self::from_rabi_hz(rabi / (2.0 * PI), segments, label)
    }

    fn from_rabi_hz(
        rabi_hz: f64,
        segments: Vec<Segment>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(rabi_hz > 0.0 && rabi_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Rabi frequency must be positive, got {rabi_hz} Hz"
            )));
        }
        let mut checked = Vec::with_capacity(segments.len());
        for (i, s) in segments.into_iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: duration must be positive and finite, got {}",
                    s.duration
                )));
            }
            if !s.phase.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: phase must be finite, got {}",
                    s.phase
                )));
            }
            checked.push(Segment {
                duration: s.duration,
                phase: wrap_phase(s.phase),
            });
        }
        Ok(Self {
            rabi_hz,
            segments: checked,
            label: label.into(),
        })
    }

    /// A pulse with no segments; its propagator is the identity.
    pub fn empty(rabi: f64) -> Self {
        Self {
            rabi_hz: rabi / (2.0 * PI),
            segments: Vec::new(),
            label: "empty".into(),
        }
    }

    /// Rabi frequency Ω in rad/s.
    pub fn rabi(&self) -> f64 {
        2.0 * PI * self.rabi_hz
    }

    pub fn rabi_hz(&self) -> f64 {
        self.rabi_hz
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Total duration T in seconds.
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Pulse area ΩT in radians.
    pub fn area(&self) -> f64 {
        self.rabi() * self.duration()
    }

    /// Phase in effect at time `t` (the later segment wins at boundaries).
    pub fn phase_at(&self, t: f64) -> f64 {
        let mut start = 0.0;
        for s in &self.segments {
            if t < start + s.duration {
                return s.phase;
            }
            start += s.duration;
        }
        self.segments.last().map_or(0.0, |s| s.phase)
    }

    /// Same pulse with the drive frequency replaced; durations unchanged.
    pub fn with_rabi(&self, rabi: f64) -> Self {
        Self {
            rabi_hz: rabi / (2.0 * PI),
            ..self.clone()
        }
    }

    /// Split every segment into `k` equal sub-segments.
    pub fn refine(&self, k: usize) -> Self {
        let k = k.max(1);
        let segments = self
            .segments
            .iter()
            .flat_map(|s| {
                std::iter::repeat(Segment {
                    duration: s.duration / k as f64,
                    phase: s.phase,
                })
                .take(k)
            })
            .collect();
        Self {
            segments,
            ..self.clone()
        }
    }
}

/// Bang-bang angles of a time-optimal recoil-free pulse. Each angle is the
/// rotation `Ω τ` produced by one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "order", content = "angles", rename_all = "snake_case")]
pub enum TorfAngles {
    /// Segments `θ1 θ2 θ3 θ2 θ1` with phases `0 π 0 π 0`.
    First([f64; 3]),
    /// Segments `θ1 θ2 θ3 θ4 θ5 θ4 θ3 θ2 θ1` with alternating phases.
    Second([f64; 5]),
}

impl TorfAngles {
    pub fn values(&self) -> &[f64] {
        match self {
            TorfAngles::First(a) => a,
            TorfAngles::Second(a) => a,
        }
    }

    /// Segment angles in time order.
    pub fn segment_angles(&self) -> Vec<f64> {
        match *self {
            TorfAngles::First([a, b, c]) => vec![a, b, c, b, a],
            TorfAngles::Second([a, b, c, d, e]) => vec![a, b, c, d, e, d, c, b, a],
        }
    }

    /// Net x-rotation `Σ ± θ_k` in units of the segment angles.
    pub fn net_rotation(&self) -> f64 {
        self.segment_angles()
            .iter()
            .enumerate()
            .map(|(i, &a)| if i % 2 == 0 { a } else { -a })
            .sum()
    }

    /// Pulse area ΩT.
    pub fn area(&self) -> f64 {
        self.segment_angles().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.values().iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "bang-bang angles must be non-negative and finite, got {a}"
            )));
        }
        Ok(())
    }
}

/// Constant-phase rotation by `theta`. With `speed_correction` the duration
/// is stretched by `1/(1 − η²/2)`.
pub fn make_constant(theta: f64, rabi: f64, speed_correction: bool, eta: f64) -> Result<PulseProgram> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rotation angle must be positive, got {theta}"
        )));
    }
    let scale = if speed_correction { 1.0 - eta * eta / 2.0 } else { 1.0 };
    let label = if speed_correction {
        format!("constant {:.4}π corrected", theta / PI)
    } else {
        format!("constant {:.4}π", theta / PI)
    };
    PulseProgram::new(
        rabi,
        vec![Segment {
            duration: theta / (rabi * scale),
            phase: 0.0,
        }],
        label,
    )
}

/// Symmetric bang-bang pulse from TORF angles. Zero angles are dropped and
/// neighbouring segments of equal phase merged.
pub fn make_torf(angles: &TorfAngles, rabi: f64) -> Result<PulseProgram> {
    angles.validate()?;
    let mut segments: Vec<Segment> = Vec::new();
    for (i, &a) in angles.segment_angles().iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let phase = if i % 2 == 0 { 0.0 } else { PI };
        let duration = a / rabi;
        match segments.last_mut() {
            Some(last) if last.phase == phase => last.duration += duration,
            _ => segments.push(Segment { duration, phase }),
        }
    }
    let label = match angles {
        TorfAngles::First(_) => "torf",
        TorfAngles::Second(_) => "torf2",
    };
    PulseProgram::new(rabi, segments, label)
}

/// One segment of length `dt` per phase sample.
pub fn make_sampled(phases: &[f64], dt: f64, rabi: f64) -> Result<PulseProgram> {
    if phases.is_empty() {
        return Err(Error::InvalidParameter("sampled pulse needs at least one phase".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("sample step must be positive, got {dt}")));
    }
    let segments = phases
        .iter()
        .map(|&phase| Segment { duration: dt, phase })
        .collect();
    PulseProgram::new(rabi, segments, "sampled")
}

/// Rotate the drive axis by `axis_angle` (offsets every phase).
pub fn shift_axis(p: &PulseProgram, axis_angle: f64) -> PulseProgram {
    let segments = p
        .segments
        .iter()
        .map(|s| Segment {
            duration: s.duration,
            phase: wrap_phase(s.phase + axis_angle),
        })
        .collect();
    PulseProgram {
        segments,
        ..p.clone()
    }
}

#[derive(Serialize, Deserialize)]
struct PulseFile {
    version: u32,
    rabi_hz: f64,
    label: String,
    segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<serde_json::Value>,
}

/// Serialize to the pulse file format.
pub fn serialize(p: &PulseProgram) -> String {
    serialize_with_metadata(p, None)
}

/// Serialize with an optional `metadata` object (e.g. the resolved run
/// configuration).
pub fn serialize_with_metadata(p: &PulseProgram, metadata: Option<serde_json::Value>) -> String {
    let file = PulseFile {
        version: PULSE_FILE_VERSION,
        rabi_hz: p.rabi_hz,
        label: p.label.clone(),
        segments: p.segments.clone(),
        metadata,
    };
    serde_json::to_string_pretty(&file).expect("pulse file serializes")
}

pub fn parse(text: &str) -> Result<PulseProgram> {
    parse_with_metadata(text).map(|(p, _)| p)
}

pub fn parse_with_metadata(text: &str) -> Result<(PulseProgram, Option<serde_json::Value>)> {
    // Non-finite numbers are not valid JSON, so serde rejects them here.
    let file: PulseFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.version != PULSE_FILE_VERSION {
        return Err(Error::Parse(format!(
            "unsupported version {} (expected {PULSE_FILE_VERSION})",
            file.version
        )));
    }
    let program = PulseProgram::from_rabi_hz(file.rabi_hz, file.segments, file.label)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok((program, file.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;

    const RABI: f64 = 2.0 * PI * 20e3;

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert_eq!(wrap_phase(0.0), 0.0);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        for k in -50..50 {
            let w = wrap_phase(0.731 * k as f64);
            assert!(w > -PI && w <= PI);
        }
    }

    #[test]
    fn constant_durations() {
        let p = make_constant(PI, RABI, false, 0.2156).unwrap();
        assert!((p.duration() * 1e6 - 25.0).abs() < 1e-9);
        assert_eq!(p.len(), 1);

        let p = make_constant(PI / 2.0, 2.0 * PI * 770.0, true, 0.2156).unwrap();
        assert_eq!((p.duration() * 1e6).round(), 332.0);

        let p = make_constant(PI / 2.0, RABI, true, 0.2156).unwrap();
        assert!((p.duration() * 1e6 - 12.80).abs() < 5e-3);
        assert!(make_constant(0.0, RABI, false, 0.0).is_err());
    }

    #[test]
    fn torf_structure() {
        let p = make_torf(&TorfAngles::First([0.0, 0.0, PI]), RABI).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.area() - PI).abs() < 1e-12);

        let a = TorfAngles::First([0.0840 * PI, 0.0269 * PI, 0.3858 * PI]);
        let p = make_torf(&a, RABI).unwrap();
        assert_eq!(p.len(), 5);
        let closed = 2.0 * 0.0840 * PI + 2.0 * 0.0269 * PI + 0.3858 * PI;
        assert!((p.area() - closed).abs() < 1e-14);
        assert!((p.area() / PI - 0.6077).abs() < 2e-4);
        let phases: Vec<f64> = p.segments().iter().map(|s| s.phase).collect();
        assert_eq!(phases, vec![0.0, PI, 0.0, PI, 0.0]);

        let a2 = TorfAngles::Second([0.0589, 0.0313, 0.1015, 0.0097, 0.2729].map(|x| x * PI));
        let p = make_torf(&a2, RABI).unwrap();
        assert_eq!(p.len(), 9);
        assert!((p.area() / PI - 0.6757).abs() < 1e-9);
        assert!((a2.area() - p.area()).abs() < 1e-12);
    }

    #[test]
    fn torf_merges_equal_phases() {
        let p = make_torf(&TorfAngles::First([0.2, 0.0, 0.5]), RABI).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.area() - 0.9).abs() < 1e-12);
        assert!(make_torf(&TorfAngles::First([-0.1, 0.0, 0.5]), RABI).is_err());
    }

    #[test]
    fn net_rotation_identity() {
        let a = TorfAngles::First([0.3, 0.2, 0.7]);
        assert!((a.net_rotation() - (0.6 - 0.4 + 0.7)).abs() < 1e-15);
        let b = TorfAngles::Second([0.1, 0.2, 0.3, 0.4, 0.5]);
        assert!((b.net_rotation() - (2.0 * (0.1 + 0.3 - 0.2 - 0.4) + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn sampled_pulse() {
        let p = make_sampled(&[0.0], 1e-6, RABI).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.duration(), 1e-6);
        assert!(make_sampled(&[], 1e-6, RABI).is_err());
        assert!(make_sampled(&[0.0], 0.0, RABI).is_err());
    }

    #[test]
    fn round_trip_sawtooth() {
        let phases: Vec<f64> = (0..37).map(|k| -3.0 + 0.173_205_080_756_887_7 * k as f64).collect();
        let p = make_sampled(&phases, 1.234_567_890_123e-7, RABI).unwrap();
        let text = serialize(&p);
        assert_eq!(parse(&text).unwrap(), p);
    }

    #[test]
    fn round_trip_torf2() {
        let a2 = TorfAngles::Second([0.0589, 0.0313, 0.1015, 0.0097, 0.2729].map(|x| x * PI));
        let p = make_torf(&a2, RABI).unwrap();
        let q = parse(&serialize(&p)).unwrap();
        assert_eq!(q.len(), 9);
        assert_eq!(q, p);
    }

    #[test]
    fn parse_rejects_bad_files() {
        let bad = r#"{"version":1,"rabi_hz":20000,"label":"x",
            "segments":[{"duration_s":1e-6,"phase_rad":0},{"duration_s":-1e-6,"phase_rad":0}]}"#;
        let err = parse(bad).unwrap_err().to_string();
        assert!(err.contains("segment 1"), "{err}");

        let missing = r#"{"version":1,"label":"x","segments":[]}"#;
        assert!(parse(missing).is_err());
        let nonfinite = r#"{"version":1,"rabi_hz":1,"label":"x","segments":[{"duration_s":1,"phase_rad":NaN}]}"#;
        assert!(parse(nonfinite).is_err());
        let version = r#"{"version":2,"rabi_hz":1,"label":"x","segments":[]}"#;
        assert!(parse(version).is_err());
    }

    #[test]
    fn shift_axis_cases() {
        let a = TorfAngles::First([0.0840 * PI, 0.0269 * PI, 0.3858 * PI]);
        let p = make_torf(&a, RABI).unwrap();
        assert_eq!(shift_axis(&p, 0.0), p);
        let full = shift_axis(&p, 2.0 * PI);
        for (s, t) in full.segments().iter().zip(p.segments()) {
            assert!((s.phase - t.phase).abs() < 1e-14 || (s.phase - t.phase).abs() > 2.0 * PI - 1e-14);
        }
        let y = shift_axis(&p, PI / 2.0);
        assert!((y.segments()[0].phase - PI / 2.0).abs() < 1e-15);
        assert!((y.segments()[1].phase + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn shift_commutes_with_serialization() {
        let p = make_sampled(&[0.1, -2.0, 3.0], 1e-6, RABI).unwrap();
        let a = shift_axis(&parse(&serialize(&p)).unwrap(), 1.1);
        let b = parse(&serialize(&shift_axis(&p, 1.1))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refine_keeps_duration() {
        let p = make_sampled(&[0.1, -2.0, 3.0], 1e-6, RABI).unwrap();
        let r = p.refine(4);
        assert_eq!(r.len(), 12);
        assert!((r.duration() - p.duration()).abs() < 1e-15 * p.duration().max(1.0));
    }
}
