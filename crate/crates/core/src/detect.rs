//! Photodiode acquisition of the classical interference pattern and
//! free-running single-photon detection with dead time and background.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{wilson_interval, QberEstimate, QberMethod};
use crate::error::{Error, Result};
use crate::interference::InterferencePattern;

/// Timestamp quantum of exported count records (s).
pub const TIMESTAMP_RESOLUTION_S: f64 = 150e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotodiodeConfig {
    /// First-order analog bandwidth; `f64::INFINITY` disables filtering.
    pub analog_bandwidth_hz: f64,
    pub sample_rate_hz: f64,
    /// Additive white noise in normalized intensity units.
    #[serde(default)]
    pub noise_rms: f64,
}

impl PhotodiodeConfig {
    pub fn ideal(sample_rate_hz: f64) -> Self {
        PhotodiodeConfig {
            analog_bandwidth_hz: f64::INFINITY,
            sample_rate_hz,
            noise_rms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "photodiode sample rate {} must be > 0",
                self.sample_rate_hz
            )));
        }
        if !(self.analog_bandwidth_hz > 0.0) {
            return Err(Error::invalid("photodiode bandwidth must be > 0"));
        }
        if !(self.noise_rms.is_finite() && self.noise_rms >= 0.0) {
            return Err(Error::invalid("photodiode noise must be >= 0"));
        }
        Ok(())
    }

    /// True when the sample rate is below twice a finite analog bandwidth.
    pub fn undersampled(&self) -> bool {
        self.analog_bandwidth_hz.is_finite() && self.sample_rate_hz < 2.0 * self.analog_bandwidth_hz
    }
}

/// Low-pass filters, resamples and adds measurement noise to a pattern.
///
/// The filter is a one-pole IIR started at the first sample. Resampling is
/// linear interpolation onto the photodiode clock starting at the pattern's `t0`.
pub fn photodiode_acquire(
    pattern: &InterferencePattern,
    config: &PhotodiodeConfig,
    seed: u64,
) -> Result<InterferencePattern> {
    config.validate()?;
    if pattern.is_empty() {
        return Err(Error::InsufficientData("empty interference pattern".into()));
    }
    if config.undersampled() {
        log::warn!(
            "photodiode sampled at {} Hz below twice its {} Hz bandwidth",
            config.sample_rate_hz,
            config.analog_bandwidth_hz
        );
    }
    let fs_in = pattern.sample_rate;
    let mut filtered = pattern.samples.clone();
    if config.analog_bandwidth_hz.is_finite() {
        let alpha = 1.0 - (-TAU * config.analog_bandwidth_hz / fs_in).exp();
        let mut y = filtered[0];
        for v in filtered.iter_mut() {
            y += alpha * (*v - y);
            *v = y;
        }
    }
    let mut samples = if config.sample_rate_hz == fs_in {
        filtered
    } else {
        let ratio = fs_in / config.sample_rate_hz;
        let last = (filtered.len() - 1) as f64;
        let n_out = (last / ratio).floor() as usize + 1;
        (0..n_out)
            .map(|j| {
                let pos = j as f64 * ratio;
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                if i + 1 < filtered.len() {
                    filtered[i] + frac * (filtered[i + 1] - filtered[i])
                } else {
                    filtered[i]
                }
            })
            .collect()
    };
    if config.noise_rms > 0.0 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.noise_rms).map_err(|e| Error::invalid(e.to_string()))?;
        for v in samples.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(InterferencePattern {
        samples,
        sample_rate: config.sample_rate_hz,
        t0: pattern.t0,
        phase_offset: pattern.phase_offset,
        contrast: pattern.contrast,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdConfig {
    pub efficiency: f64,
    pub dead_time_s: f64,
    pub dark_rate_hz: f64,
    /// Gaussian timing jitter (σ).
    pub jitter_s: f64,
}

impl SpdConfig {
    /// Free-running InGaAs detector: 10% efficiency, 25 µs dead time,
    /// 4.52/s dark counts.
    pub fn free_running_default() -> Self {
        SpdConfig {
            efficiency: 0.1,
            dead_time_s: 25e-6,
            dark_rate_hz: 4.52,
            jitter_s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("detector efficiency must be in [0, 1]"));
        }
        for (name, v) in [
            ("dead time", self.dead_time_s),
            ("dark rate", self.dark_rate_hz),
            ("jitter", self.jitter_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("detector {name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Additionally checks the dead time against the 2–100 µs range of the
    /// modeled device.
    pub fn validate_device_profile(&self) -> Result<()> {
        self.validate()?;
        if !(2e-6..=100e-6).contains(&self.dead_time_s) {
            return Err(Error::invalid(format!(
                "dead time {} s outside the device range [2 µs, 100 µs]",
                self.dead_time_s
            )));
        }
        Ok(())
    }

    /// Non-paralyzable measured rate `R/(1 + R·τ_d)` for an incident count rate `R`.
    pub fn measured_rate(&self, rate_hz: f64) -> f64 {
        rate_hz / (1.0 + rate_hz * self.dead_time_s)
    }
}

impl Default for SpdConfig {
    fn default() -> Self {
        Self::free_running_default()
    }
}

/// Background count rates at one detector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundModel {
    /// Raman scattering of the sensing laser in the QKD fiber.
    pub raman_hz: f64,
    /// Rayleigh backscatter of the reference light.
    pub rayleigh_hz: f64,
    pub external_hz: f64,
}

impl BackgroundModel {
    pub fn total_hz(&self) -> f64 {
        self.raman_hz + self.rayleigh_hz + self.external_hz
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("raman", self.raman_hz),
            ("rayleigh", self.rayleigh_hz),
            ("external", self.external_hz),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} background rate must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    D0,
    D1,
}

impl Detector {
    pub fn other(self) -> Detector {
        match self {
            Detector::D0 => Detector::D1,
            Detector::D1 => Detector::D0,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Detector::D0 => "D0",
            Detector::D1 => "D1",
        }
    }
}

/// Photon flux incident on a detector (photons/s).
#[derive(Debug, Clone, PartialEq)]
pub enum PhotonFlux {
    Constant { rate_hz: f64, duration_s: f64 },
    /// Piecewise-constant rate, `rates[i]` holding on `[t0 + i/f_s, t0 + (i+1)/f_s)`.
    Sampled {
        rates: Vec<f64>,
        sample_rate: f64,
        t0: f64,
    },
}

impl PhotonFlux {
    pub fn duration_s(&self) -> f64 {
        match self {
            PhotonFlux::Constant { duration_s, .. } => *duration_s,
            PhotonFlux::Sampled {
                rates, sample_rate, ..
            } => rates.len() as f64 / sample_rate,
        }
    }

    pub fn t0(&self) -> f64 {
        match self {
            PhotonFlux::Constant { .. } => 0.0,
            PhotonFlux::Sampled { t0, .. } => *t0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |r: f64| r.is_finite() && r >= 0.0;
        match self {
            PhotonFlux::Constant { rate_hz, duration_s } => {
                if !ok(*rate_hz) {
                    return Err(Error::invalid("photon rate must be finite and >= 0"));
                }
                if !(duration_s.is_finite() && *duration_s > 0.0) {
                    return Err(Error::invalid("flux duration must be > 0"));
                }
            }
            PhotonFlux::Sampled {
                rates, sample_rate, ..
            } => {
                if !(sample_rate.is_finite() && *sample_rate > 0.0) {
                    return Err(Error::invalid("flux sample rate must be > 0"));
                }
                if rates.is_empty() {
                    return Err(Error::InsufficientData("empty flux trace".into()));
                }
                if let Some(r) = rates.iter().find(|r| !ok(**r)) {
                    return Err(Error::invalid(format!(
                        "photon rate {r} must be finite and >= 0"
                    )));
                }
            }
        }
        Ok(())
    }

    fn max_rate(&self) -> f64 {
        match self {
            PhotonFlux::Constant { rate_hz, .. } => *rate_hz,
            PhotonFlux::Sampled { rates, .. } => rates.iter().copied().fold(0.0, f64::max),
        }
    }

    fn rate_at(&self, t: f64) -> f64 {
        match self {
            PhotonFlux::Constant { rate_hz, .. } => *rate_hz,
            PhotonFlux::Sampled {
                rates,
                sample_rate,
                t0,
            } => {
                let i = ((t - t0) * sample_rate).floor().max(0.0) as usize;
                rates[i.min(rates.len() - 1)]
            }
        }
    }
}

/// Fluxes at the two outputs of the beam splitter: `rate·Ī` on D0 and
/// `rate·(1 − Ī)` on D1, averaged over blocks of `decimation` samples.
pub fn fluxes_from_pattern(
    pattern: &InterferencePattern,
    incident_rate_hz: f64,
    decimation: usize,
) -> Result<(PhotonFlux, PhotonFlux)> {
    if !(incident_rate_hz.is_finite() && incident_rate_hz >= 0.0) {
        return Err(Error::invalid("incident photon rate must be >= 0"));
    }
    if decimation == 0 || decimation > pattern.len() {
        return Err(Error::invalid("decimation must be in 1..=pattern length"));
    }
    let blocks = pattern.len() / decimation;
    let mut d0 = Vec::with_capacity(blocks);
    let mut d1 = Vec::with_capacity(blocks);
    for chunk in pattern.samples.chunks_exact(decimation) {
        let mean = (chunk.iter().sum::<f64>() / decimation as f64).clamp(0.0, 1.0);
        d0.push(incident_rate_hz * mean);
        d1.push(incident_rate_hz * (1.0 - mean));
    }
    let sample_rate = pattern.sample_rate / decimation as f64;
    let mk = |rates| PhotonFlux::Sampled {
        rates,
        sample_rate,
        t0: pattern.t0,
    };
    Ok((mk(d0), mk(d1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub detector: Detector,
    /// Sorted detection times (s).
    pub timestamps: Vec<f64>,
    pub t0: f64,
    pub duration_s: f64,
}

impl CountRecord {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        self.timestamps.len() as f64 / self.duration_s
    }

    /// Counts per consecutive bin of `bin_s`; a trailing partial bin is dropped.
    pub fn binned(&self, bin_s: f64) -> Result<Vec<u64>> {
        if !(bin_s > 0.0) {
            return Err(Error::invalid("bin width must be > 0"));
        }
        let bins = (self.duration_s / bin_s + 1e-9).floor() as usize;
        let mut out = vec![0u64; bins];
        for &t in &self.timestamps {
            let i = ((t - self.t0) / bin_s).floor();
            if i >= 0.0 && (i as usize) < bins {
                out[i as usize] += 1;
            }
        }
        Ok(out)
    }

    /// Writes `detector,tick,time_s` rows with times on the 150 ps grid.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "# timestamp resolution {TIMESTAMP_RESOLUTION_S:e} s")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["detector", "tick", "time_s"])?;
        for &t in &self.timestamps {
            let tick = (t / TIMESTAMP_RESOLUTION_S).round() as u64;
            w.write_record([
                self.detector.label().to_string(),
                tick.to_string(),
                format!("{:.12}", tick as f64 * TIMESTAMP_RESOLUTION_S),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates one free-running detector.
///
/// Candidate events come from a homogeneous Poisson process at the peak
/// rate and are thinned to `η·flux(t) + background + dark`. Jitter is added
/// before the non-paralyzable dead time, and events are kept inside
/// `[t0, t0 + duration)`. Background and dark rates are count rates at the
/// detector output and are not scaled by the efficiency.
pub fn spd_detect(
    flux: &PhotonFlux,
    spd: &SpdConfig,
    bg: &BackgroundModel,
    detector: Detector,
    seed: u64,
) -> Result<CountRecord> {
    flux.validate()?;
    spd.validate()?;
    bg.validate()?;
    let t0 = flux.t0();
    let duration = flux.duration_s();
    let floor = bg.total_hz() + spd.dark_rate_hz;
    let peak = spd.efficiency * flux.max_rate() + floor;
    let mut record = CountRecord {
        detector,
        timestamps: Vec::new(),
        t0,
        duration_s: duration,
    };
    if peak <= 0.0 {
        return Ok(record);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gaps = Exp::new(peak).map_err(|e| Error::invalid(e.to_string()))?;
    let jitter = (spd.jitter_s > 0.0)
        .then(|| Normal::new(0.0, spd.jitter_s))
        .transpose()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let end = t0 + duration;
    let mut t = t0;
    let mut events = Vec::new();
    loop {
        t += gaps.sample(&mut rng);
        if t >= end {
            break;
        }
        let rate = spd.efficiency * flux.rate_at(t) + floor;
        if rng.random::<f64>() * peak < rate {
            let jittered = match &jitter {
                Some(j) => t + j.sample(&mut rng),
                None => t,
            };
            if jittered >= t0 && jittered < end {
                events.push(jittered);
            }
        }
    }
    if jitter.is_some() {
        events.sort_by(f64::total_cmp);
    }
    let mut last = f64::NEG_INFINITY;
    for e in events {
        if e - last >= spd.dead_time_s {
            record.timestamps.push(e);
            last = e;
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateLine {
    pub source: String,
    pub rate_hz: f64,
    /// `√(rate·T)/T`
    pub uncertainty_hz: f64,
}

impl RateLine {
    fn new(source: &str, rate_hz: f64, duration_s: f64) -> Self {
        RateLine {
            source: source.to_string(),
            rate_hz,
            uncertainty_hz: (rate_hz * duration_s).sqrt() / duration_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundBudget {
    pub duration_s: f64,
    pub sources: Vec<RateLine>,
    /// Everything with the lasers on.
    pub total: RateLine,
    /// Dark counts plus external light only.
    pub lasers_off: RateLine,
}

/// Expected background count rates with their Poisson uncertainties over `duration_s`.
pub fn background_budget(
    bg: &BackgroundModel,
    spd: &SpdConfig,
    duration_s: f64,
) -> Result<BackgroundBudget> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!("duration {duration_s} s must be > 0")));
    }
    bg.validate()?;
    spd.validate()?;
    let sources = vec![
        RateLine::new("dark", spd.dark_rate_hz, duration_s),
        RateLine::new("external", bg.external_hz, duration_s),
        RateLine::new("raman", bg.raman_hz, duration_s),
        RateLine::new("rayleigh", bg.rayleigh_hz, duration_s),
    ];
    let total = sources.iter().map(|s| s.rate_hz).sum();
    Ok(BackgroundBudget {
        duration_s,
        total: RateLine::new("total", total, duration_s),
        lasers_off: RateLine::new("lasers off", spd.dark_rate_hz + bg.external_hz, duration_s),
        sources,
    })
}

/// QBER from the two detector records; `bright` is the detector that should
/// click at the operating point.
pub fn qber_from_counts(d0: &CountRecord, d1: &CountRecord, bright: Detector) -> Result<QberEstimate> {
    let scale = d0.duration_s.abs().max(d1.duration_s.abs()).max(f64::MIN_POSITIVE);
    if (d0.duration_s - d1.duration_s).abs() / scale > 1e-9 {
        return Err(Error::Mismatch(format!(
            "record durations differ: {} s vs {} s",
            d0.duration_s, d1.duration_s
        )));
    }
    let (right, wrong) = match bright {
        Detector::D0 => (d0.len() as u64, d1.len() as u64),
        Detector::D1 => (d1.len() as u64, d0.len() as u64),
    };
    let n = right + wrong;
    if n == 0 {
        return Err(Error::InsufficientData("no counts on either detector".into()));
    }
    let e = wrong as f64 / n as f64;
    let (lo, hi) = wilson_interval(wrong, n, 1.96);
    Ok(QberEstimate {
        e,
        method: QberMethod::Counts,
        sigma_rad: None,
        uncertainty: (hi - lo) / 2.0,
        interval: Some((lo, hi)),
        warning: None,
    })
}
