//! Normalized two-beam interference and phase retrieval.
//!
//! The retrieved phase is confined to `[0, π]`: inverting `Ī = cos²(φ/2)`
//! cannot tell `φ` from `−φ`, so any excursion beyond the principal branch is
//! folded back. Nothing downstream unwraps it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::PhaseTrace;

/// Out-of-range intensity accepted (and clamped) before retrieval fails.
pub const CLAMP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferencePattern {
    /// Normalized intensity `Ī`.
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub t0: f64,
    /// Operating-point offset `φ_0` (rad).
    pub phase_offset: f64,
    /// Fringe contrast `V` in `(0, 1]`.
    pub contrast: f64,
}

impl InterferencePattern {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// `Ī = cos²((φ + φ_0)/2)` for ideal contrast.
pub fn intensity(phase: &PhaseTrace, phase_offset: f64) -> InterferencePattern {
    intensity_with_contrast(phase, phase_offset, 1.0).expect("unit contrast is valid")
}

/// `Ī = (1 + V·cos(φ + φ_0))/2`.
pub fn intensity_with_contrast(
    phase: &PhaseTrace,
    phase_offset: f64,
    contrast: f64,
) -> Result<InterferencePattern> {
    if !(contrast > 0.0 && contrast <= 1.0) {
        return Err(Error::invalid(format!("contrast {contrast} must be in (0, 1]")));
    }
    let samples = phase
        .samples
        .iter()
        .map(|&p| {
            let total = p + phase_offset;
            if contrast == 1.0 {
                (total / 2.0).cos().powi(2)
            } else {
                0.5 * (1.0 + contrast * total.cos())
            }
        })
        .collect();
    Ok(InterferencePattern {
        samples,
        sample_rate: phase.sample_rate,
        t0: phase.t0,
        phase_offset,
        contrast,
    })
}

/// Inverts the pattern onto `[0, π]`: `φ = 2·arccos(√Ī)` at unit contrast.
///
/// Samples within [`CLAMP_TOLERANCE`] outside `[0, 1]` are clamped; anything
/// further out is treated as a calibration failure.
pub fn retrieve_phase(pattern: &InterferencePattern) -> Result<PhaseTrace> {
    let lo = -CLAMP_TOLERANCE;
    let hi = 1.0 + CLAMP_TOLERANCE;
    if let Some((i, &v)) = pattern
        .samples
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= lo && **v <= hi))
    {
        return Err(Error::OutOfRange(format!(
            "normalized intensity {v} at sample {i} is outside [0, 1] beyond the clamp tolerance"
        )));
    }
    let v = pattern.contrast;
    let samples = pattern
        .samples
        .iter()
        .map(|&i| {
            let i = i.clamp(0.0, 1.0);
            if v == 1.0 {
                2.0 * i.sqrt().acos()
            } else {
                ((2.0 * i - 1.0) / v).clamp(-1.0, 1.0).acos()
            }
        })
        .collect();
    Ok(PhaseTrace::new(samples, pattern.sample_rate)?
        .with_t0(pattern.t0)
        .with_provenance("retrieved from normalized intensity"))
}

/// `rate · 10^(−dB/10)`.
pub fn attenuate(rate: f64, db: f64) -> Result<f64> {
    if !(db.is_finite() && db >= 0.0) {
        return Err(Error::invalid(format!("attenuation {db} dB must be >= 0")));
    }
    Ok(rate * 10f64.powf(-db / 10.0))
}

/// Principal value of `φ` in `(−π, π]`.
pub fn wrap(phi: f64) -> f64 {
    let w = phi.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}
