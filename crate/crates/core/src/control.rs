//! Discrete-time feedback: the fiber-noise cancellation loop acting on Alice's
//! arm and the phase locks of the QKD lasers.
//!
//! The actuator is an ideal phase shifter driven by a frequency-like command,
//! so the correction is the running sum of the controller output. With only
//! the proportional path this gives a first-order loop
//! `G(f) ≈ BW/(jf)` crossing unity at the configured bandwidth:
//!
//! ```text
//! u[k] = u[k-1] - (kp·e[k] + I[k] + kd·(e[k] - e[k-1]))
//! I[k] = I[k-1] + ki·e[k]
//! kp = 2π·BW/f_s          (per sample)
//! ki = kp · 2π·(c·BW)/f_s (integral corner at c·BW, c = 0.1 by default)
//! kd = kp · f_s/(2π·10·BW) (PID only)
//! ```
//!
//! A correction computed at sample `k` acts from sample `k + D`, with
//! `D = round(latency·f_s)`. `D = 0` is the ideal instantaneous loop, solved
//! algebraically.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{ArmPair, LinkTopology};
use crate::noise::{delayed_self, derive_seed, gen_power_law, gen_trace, NoiseSpec, PhaseTrace};

/// Default integral corner as a fraction of the loop bandwidth.
pub const DEFAULT_INTEGRAL_CORNER: f64 = 0.1;
/// Error-signal prescaler ahead of the controller.
pub const DEFAULT_ERROR_SCALE: f64 = 0.1;
/// Loop delay in samples before any electronics delay is added.
pub const DEFAULT_LATENCY_SAMPLES: f64 = 2.0;
/// Error RMS above this multiple of the open-loop RMS is reported as unstable.
pub const INSTABILITY_RMS_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    Pi,
    Pid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub kind: LoopKind,
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
    pub latency_s: f64,
    /// Integral corner as a fraction of `bandwidth_hz`; 0 disables the integral path.
    pub integral_corner: f64,
    /// Scale applied to the error before the controller; gains compensate for it.
    pub error_scale: f64,
    /// Multiplies every gain. 1 gives the nominal bandwidth.
    pub gain_scale: f64,
    pub slew_limit_rad_per_s: Option<f64>,
    pub range_limit_rad: Option<f64>,
}

impl LoopConfig {
    /// Nominal loop with the default latency of two samples.
    pub fn new(kind: LoopKind, bandwidth_hz: f64, sample_rate_hz: f64) -> Self {
        LoopConfig {
            kind,
            bandwidth_hz,
            sample_rate_hz,
            latency_s: DEFAULT_LATENCY_SAMPLES / sample_rate_hz,
            integral_corner: DEFAULT_INTEGRAL_CORNER,
            error_scale: DEFAULT_ERROR_SCALE,
            gain_scale: 1.0,
            slew_limit_rad_per_s: None,
            range_limit_rad: None,
        }
    }

    /// Adds an electronics delay on top of the default two-sample latency.
    pub fn with_electronics_delay(mut self, delay_s: f64) -> Self {
        self.latency_s = DEFAULT_LATENCY_SAMPLES / self.sample_rate_hz + delay_s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fs = self.sample_rate_hz;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid(format!("loop sample rate {fs} must be > 0")));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("loop bandwidth must be > 0"));
        }
        if self.bandwidth_hz >= fs / 10.0 {
            return Err(Error::invalid(format!(
                "loop bandwidth {} Hz must be below f_s/10 = {} Hz",
                self.bandwidth_hz,
                fs / 10.0
            )));
        }
        if !(self.latency_s.is_finite() && self.latency_s >= 0.0) {
            return Err(Error::invalid("loop latency must be >= 0"));
        }
        if !(self.integral_corner.is_finite() && (0.0..1.0).contains(&self.integral_corner)) {
            return Err(Error::invalid("integral corner must be in [0, 1)"));
        }
        if !(self.error_scale.is_finite() && self.error_scale > 0.0) {
            return Err(Error::invalid("error scale must be > 0"));
        }
        if !(self.gain_scale.is_finite() && self.gain_scale > 0.0) {
            return Err(Error::invalid("gain scale must be > 0"));
        }
        for (name, v) in [
            ("slew limit", self.slew_limit_rad_per_s),
            ("range limit", self.range_limit_rad),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::invalid(format!("{name} must be > 0")));
                }
            }
        }
        Ok(())
    }

    pub fn delay_samples(&self) -> usize {
        (self.latency_s * self.sample_rate_hz).round() as usize
    }

    /// Controller gains referred to the unscaled error.
    pub fn gains(&self) -> Gains {
        let fs = self.sample_rate_hz;
        let kp = TAU * self.bandwidth_hz / fs * self.gain_scale;
        let ki = kp * TAU * self.integral_corner * self.bandwidth_hz / fs;
        let kd = match self.kind {
            LoopKind::Pi => 0.0,
            LoopKind::Pid => kp * fs / (TAU * 10.0 * self.bandwidth_hz),
        };
        Gains { kp, ki, kd }
    }

    /// Open-loop gain `G` of the sampled loop at frequency `f`, delay included.
    pub fn open_loop_gain(&self, f: f64) -> Complex64 {
        let g = self.gains();
        let z_inv = Complex64::from_polar(1.0, -TAU * f / self.sample_rate_hz);
        let one = Complex64::new(1.0, 0.0);
        let diff = one - z_inv;
        let controller = (g.kp + g.ki / diff + g.kd * diff) / diff;
        controller * z_inv.powu(self.delay_samples() as u32)
    }

    /// Error-to-disturbance transfer `1/(1 + G)`.
    pub fn sensitivity(&self, f: f64) -> Complex64 {
        1.0 / (1.0 + self.open_loop_gain(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone)]
pub struct LoopState {
    /// Integral accumulator (rad).
    pub integral: f64,
    /// Controller output before the delay line (rad).
    pub output: f64,
    prev_scaled_error: f64,
    /// Corrections for the current and the next `D − 1` samples.
    pending: VecDeque<f64>,
}

impl LoopState {
    pub fn new(config: &LoopConfig) -> Result<Self> {
        config.validate()?;
        let d = config.delay_samples();
        Ok(LoopState {
            integral: 0.0,
            output: 0.0,
            prev_scaled_error: 0.0,
            pending: std::iter::repeat_n(0.0, d).collect(),
        })
    }

    pub fn delay_len(&self) -> usize {
        self.pending.len()
    }

    /// Correction acting on the current sample.
    pub fn applied(&self) -> f64 {
        self.pending.front().copied().unwrap_or(self.output)
    }

    fn update(&mut self, error: f64, config: &LoopConfig, g: &Gains) -> f64 {
        let s = config.error_scale;
        let x = error * s;
        self.integral += g.ki / s * x;
        let delta = g.kp / s * x + self.integral + g.kd / s * (x - self.prev_scaled_error);
        self.prev_scaled_error = x;
        let mut u = self.output - delta;
        if let Some(slew) = config.slew_limit_rad_per_s {
            let step = slew / config.sample_rate_hz;
            u = self.output + (u - self.output).clamp(-step, step);
        }
        if let Some(range) = config.range_limit_rad {
            u = u.clamp(-range, range);
        }
        self.output = u;
        u
    }
}

/// Feeds one error sample to the controller and returns the correction that
/// acts on the next sample (the controller output `D − 1` samples ago).
/// With zero latency the fresh output is returned.
pub fn loop_step(state: &mut LoopState, error: f64, config: &LoopConfig) -> Result<f64> {
    if !error.is_finite() {
        return Err(Error::invalid(format!("non-finite loop error {error}")));
    }
    let g = config.gains();
    let u = state.update(error, config, &g);
    if state.pending.is_empty() {
        return Ok(u);
    }
    state.pending.pop_front();
    state.pending.push_back(u);
    Ok(state.applied())
}

/// Zero-latency step: solves `e = x + u(e)` for the current sample.
fn algebraic_step(state: &mut LoopState, disturbance: f64, config: &LoopConfig) -> Result<(f64, f64)> {
    let g = config.gains();
    let k = g.kp + g.ki + g.kd;
    let prev_error = state.prev_scaled_error / config.error_scale;
    let u = (state.output - k * disturbance - state.integral + g.kd * prev_error) / (1.0 + k);
    let u = loop_step(state, disturbance + u, config)?;
    Ok((disturbance + u, u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRun {
    /// `disturbance + correction`
    pub error: PhaseTrace,
    pub correction: PhaseTrace,
    /// Error RMS over open-loop RMS (both about their means).
    pub rms_ratio: Option<f64>,
}

/// Closes the loop on a disturbance trace.
///
/// Fails with [`Error::Unstable`] when the correction diverges or the error
/// RMS exceeds [`INSTABILITY_RMS_RATIO`] times the open-loop RMS.
pub fn run_loop(disturbance: &PhaseTrace, config: &LoopConfig) -> Result<LoopRun> {
    if disturbance.sample_rate != config.sample_rate_hz {
        return Err(Error::Mismatch(format!(
            "disturbance sampled at {} Hz, loop configured for {} Hz",
            disturbance.sample_rate, config.sample_rate_hz
        )));
    }
    let mut state = LoopState::new(config)?;
    let n = disturbance.len();
    let mut error = Vec::with_capacity(n);
    let mut correction = Vec::with_capacity(n);
    let mut peak = 0.0f64;
    for (i, &x) in disturbance.samples.iter().enumerate() {
        peak = peak.max(x.abs());
        let (e, a) = if state.delay_len() == 0 {
            algebraic_step(&mut state, x, config)?
        } else {
            let a = state.applied();
            let e = x + a;
            loop_step(&mut state, e, config)?;
            (e, a)
        };
        if !a.is_finite() || a.abs() > 1.0e6 * (peak + 1.0) {
            return Err(Error::Unstable(format!(
                "correction diverged to {a:e} rad at sample {i} \
                 (bandwidth {} Hz, latency {} s)",
                config.bandwidth_hz, config.latency_s
            )));
        }
        error.push(e);
        correction.push(a);
    }
    let error = PhaseTrace::new(error, disturbance.sample_rate)?
        .with_t0(disturbance.t0)
        .with_provenance("loop error");
    let correction = PhaseTrace::new(correction, disturbance.sample_rate)?
        .with_t0(disturbance.t0)
        .with_provenance("loop correction");
    let open = disturbance.variance().sqrt();
    let rms_ratio = (open > 0.0).then(|| error.variance().sqrt() / open);
    if let Some(r) = rms_ratio {
        if r > INSTABILITY_RMS_RATIO {
            return Err(Error::Unstable(format!(
                "error RMS is {r:.3e} times the open-loop RMS \
                 (bandwidth {} Hz, latency {} s)",
                config.bandwidth_hz, config.latency_s
            )));
        }
    }
    Ok(LoopRun {
        error,
        correction,
        rms_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    pub bandwidth_hz: f64,
}

impl Default for LockConfig {
    fn default() -> Self {
        LockConfig { bandwidth_hz: 0.9e6 }
    }
}

/// Residual laser phase after a phase lock to a noiseless reference: the
/// input high-passed by `jf/(jf + BW)`.
///
/// The filter is applied on the discrete Fourier grid of the whole trace,
/// which treats the trace as periodic.
pub fn qkd_laser_lock(laser_noise: &PhaseTrace, config: &LockConfig) -> Result<PhaseTrace> {
    if !(config.bandwidth_hz.is_finite() && config.bandwidth_hz > 0.0) {
        return Err(Error::invalid("lock bandwidth must be > 0"));
    }
    if laser_noise.sample_rate < 5.0e6 {
        log::warn!(
            "phase lock simulated at {} Hz; a {} Hz lock is resolved only approximately",
            laser_noise.sample_rate,
            config.bandwidth_hz
        );
    }
    let n = laser_noise.len();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut input = laser_noise.samples.clone();
    let mut spectrum = fwd.make_output_vec();
    fwd.process(&mut input, &mut spectrum)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let df = laser_noise.sample_rate / n as f64;
    for (k, bin) in spectrum.iter_mut().enumerate() {
        let jf = Complex64::new(0.0, k as f64 * df);
        *bin *= jf / (jf + config.bandwidth_hz);
    }
    // The imaginary parts of DC and (even n) Nyquist must be zero for c2r.
    spectrum[0].im = 0.0;
    if n.is_multiple_of(2) {
        spectrum[n / 2].im = 0.0;
    }
    inv.process(&mut spectrum, &mut input)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let scale = 1.0 / n as f64;
    input.iter_mut().for_each(|x| *x *= scale);
    Ok(PhaseTrace::new(input, laser_noise.sample_rate)?
        .with_t0(laser_noise.t0)
        .with_provenance(format!("locked at {} Hz [{}]", config.bandwidth_hz, laser_noise.provenance)))
}

/// Phase-noise sources beyond the fiber spans of the topology.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseInputs {
    /// Alice − Bob fiber phase at the sensing wavelength, added to the span noise.
    pub fiber_differential: NoiseSpec,
    /// Laser shared by both arms; enters through the round-trip unbalance.
    pub reference_laser: NoiseSpec,
    /// Free-running QKD laser noise before the phase lock.
    pub qkd_lasers: ArmPair<NoiseSpec>,
    /// Paths seen by the QKD light but not by the sensing light.
    pub uncommon_path: ArmPair<NoiseSpec>,
}

impl Default for ArmPair<NoiseSpec> {
    fn default() -> Self {
        ArmPair {
            alice: NoiseSpec::default(),
            bob: NoiseSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoopConfigs {
    /// Fiber-noise cancellation; `None` leaves the fiber uncorrected.
    pub fiber: Option<LoopConfig>,
    /// QKD laser phase locks; `None` passes the free-running noise through.
    pub qkd_lock: Option<LockConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Scale fiber phase to the QKD wavelength; when false the QKD light sees
    /// exactly the sensed fiber phase.
    pub wavelength_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    /// Differential QKD phase at Charlie with the fiber correction applied.
    pub stabilized_phase: PhaseTrace,
    /// The same phase without correction.
    pub open_loop_phase: PhaseTrace,
    pub error_signal: PhaseTrace,
    pub correction: PhaseTrace,
    /// Error RMS over sensed open-loop RMS, when the fiber loop ran.
    pub rms_ratio: Option<f64>,
}

/// Samples in a run of `duration_s` at `sample_rate_hz`.
pub fn run_length(sample_rate_hz: f64, duration_s: f64) -> Result<usize> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be > 0"));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid("duration must be > 0"));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    if n < 2 {
        return Err(Error::invalid("run must span at least 2 samples"));
    }
    Ok(n)
}

fn maybe_gen(spec: &NoiseSpec, fs: f64, n: usize, seed: u64) -> Result<Option<PhaseTrace>> {
    if spec.is_silent() {
        return Ok(None);
    }
    gen_trace(spec, fs, n, seed).map(Some)
}

fn add_into(acc: &mut [f64], t: &PhaseTrace) {
    for (a, x) in acc.iter_mut().zip(&t.samples) {
        *a += x;
    }
}

/// Simulates the whole link: fiber noise seen by the sensing light, the
/// cancellation loop writing its correction onto Alice's arm, and the
/// differential QKD phase with laser, delayed-self, uncommon-path and
/// wavelength-mismatch contributions.
pub fn closed_loop_run(
    noise: &NoiseInputs,
    topology: &LinkTopology,
    loops: &LoopConfigs,
    settings: &RunSettings,
) -> Result<ClosedLoopRun> {
    topology.validate()?;
    let fs = settings.sample_rate_hz;
    let n = run_length(fs, settings.duration_s)?;
    if n < 1 << 20 {
        log::warn!("closed-loop run of {n} samples; long-term statistics will be noisy");
    }
    if let Some(cfg) = &loops.fiber {
        cfg.validate()?;
        if cfg.sample_rate_hz != fs {
            return Err(Error::Mismatch(format!(
                "fiber loop configured for {} Hz, run sampled at {fs} Hz",
                cfg.sample_rate_hz
            )));
        }
    }
    if let Some(lock) = &loops.qkd_lock {
        if !(lock.bandwidth_hz.is_finite() && lock.bandwidth_hz > 0.0) {
            return Err(Error::invalid("lock bandwidth must be > 0"));
        }
    }
    let seed = settings.seed;

    let fiber_spec = topology
        .differential_noise_spec()
        .merged(&noise.fiber_differential);
    let fiber = maybe_gen(&fiber_spec, fs, n, derive_seed(seed, "fiber"))?;

    let delay = topology.self_delay_s();
    let m = (delay * fs).round() as usize;
    let reference = match maybe_gen(&noise.reference_laser, fs, n + m, derive_seed(seed, "reference"))? {
        Some(t) => Some(delayed_self(&t, delay)?),
        None => None,
    };

    let mut sensed = vec![0.0; n];
    if let Some(f) = &fiber {
        add_into(&mut sensed, f);
    }
    if let Some(r) = &reference {
        add_into(&mut sensed, r);
    }
    let sensed = PhaseTrace::new(sensed, fs)?.with_provenance("sensing error, open loop");

    let (error_signal, correction, rms_ratio) = match &loops.fiber {
        Some(cfg) => {
            let run = run_loop(&sensed, cfg)?;
            (run.error, run.correction, run.rms_ratio)
        }
        None => (sensed.clone(), PhaseTrace::zeros(n, fs)?, None),
    };
    drop(sensed);

    let ratio = if settings.wavelength_mismatch {
        topology.wavelengths.reference_hz / topology.wavelengths.sensing_hz
    } else {
        1.0
    };
    let mut open = vec![0.0; n];
    if let Some(f) = fiber {
        for (o, x) in open.iter_mut().zip(&f.samples) {
            *o += ratio * x;
        }
    }
    if let Some(r) = reference {
        add_into(&mut open, &r);
    }

    let lasers = noise.qkd_lasers.alice.merged(&noise.qkd_lasers.bob);
    if !lasers.is_silent() {
        let full = n.next_power_of_two().max(2);
        let raw = gen_power_law(&lasers, fs, full, derive_seed(seed, "qkd_lasers"))?;
        let residual = match &loops.qkd_lock {
            Some(lock) => qkd_laser_lock(&raw, lock)?,
            None => raw,
        };
        add_into(&mut open, &residual);
    }

    let uncommon = noise.uncommon_path.alice.merged(&noise.uncommon_path.bob);
    if let Some(u) = maybe_gen(&uncommon, fs, n, derive_seed(seed, "uncommon_path"))? {
        add_into(&mut open, &u);
    }

    let mut stabilized = open.clone();
    add_into(&mut stabilized, &correction);

    Ok(ClosedLoopRun {
        stabilized_phase: PhaseTrace::new(stabilized, fs)?.with_provenance(format!(
            "stabilized QKD phase seed={seed}"
        )),
        open_loop_phase: PhaseTrace::new(open, fs)?.with_provenance(format!(
            "open-loop QKD phase seed={seed}"
        )),
        error_signal,
        correction,
        rms_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(bw: f64, fs: f64) -> LoopConfig {
        LoopConfig::new(LoopKind::Pi, bw, fs)
    }

    #[test]
    fn zero_error_zero_correction() {
        let c = cfg(1e3, 1e5);
        let mut s = LoopState::new(&c).unwrap();
        for _ in 0..100 {
            assert_eq!(loop_step(&mut s, 0.0, &c).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_error_ramps() {
        let mut c = cfg(1e3, 1e5);
        c.integral_corner = 0.0;
        c.latency_s = 0.0;
        let kp = c.gains().kp;
        let mut s = LoopState::new(&c).unwrap();
        let mut prev = 0.0;
        for k in 1..=50 {
            let u = loop_step(&mut s, 0.5, &c).unwrap();
            assert!((u - prev + kp * 0.5).abs() < 1e-12, "step {k}");
            prev = u;
        }
        c.integral_corner = 0.1;
        let mut s = LoopState::new(&c).unwrap();
        let u: Vec<f64> = (0..100).map(|_| loop_step(&mut s, 0.5, &c).unwrap()).collect();
        let d1 = u[1] - u[0];
        let d2 = u[99] - u[98];
        assert!(d2 < d1 && d2 < 0.0, "integral path accelerates the ramp");
    }

    #[test]
    fn rejects_non_finite_error() {
        let c = cfg(1e3, 1e5);
        let mut s = LoopState::new(&c).unwrap();
        assert!(loop_step(&mut s, f64::NAN, &c).is_err());
    }

    #[test]
    fn delay_line_length() {
        let c = cfg(1e3, 1e5).with_electronics_delay(1e-4);
        assert_eq!(c.delay_samples(), 12);
        assert_eq!(LoopState::new(&c).unwrap().delay_len(), 12);
    }

    #[test]
    fn delay_line_timing() {
        let mut c = cfg(1e3, 1e5);
        c.latency_s = 3.0 / 1e5;
        c.integral_corner = 0.0;
        let mut s = LoopState::new(&c).unwrap();
        let kp = c.gains().kp;
        // Impulse at sample 0 acts at sample 3.
        let mut applied = vec![s.applied()];
        applied.push(loop_step(&mut s, 1.0, &c).unwrap());
        for _ in 0..4 {
            applied.push(loop_step(&mut s, 0.0, &c).unwrap());
        }
        assert_eq!(&applied[..3], &[0.0, 0.0, 0.0]);
        assert!((applied[3] + kp).abs() < 1e-15);
    }

    #[test]
    fn rejects_fast_loops() {
        assert!(cfg(1e4, 1e5).validate().is_err());
        assert!(cfg(0.99e4, 1e5).validate().is_ok());
        let mut c = cfg(1e3, 1e5);
        c.latency_s = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sensitivity_low_frequency_first_order() {
        let mut c = cfg(5e4, 5e6);
        c.integral_corner = 0.0;
        let s = c.sensitivity(500.0).norm();
        assert!((s / (500.0 / 5e4) - 1.0).abs() < 0.02);
    }

    #[test]
    fn lock_zero_in_zero_out() {
        let z = PhaseTrace::zeros(1000, 5e6).unwrap();
        let r = qkd_laser_lock(&z, &LockConfig::default()).unwrap();
        assert!(r.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lock_removes_dc_and_keeps_fast_tone() {
        let fs = 5e6;
        let n = 5000;
        let f0 = 2.0e6;
        let t = PhaseTrace::new(
            (0..n).map(|i| 3.0 + (TAU * f0 * i as f64 / fs).sin()).collect(),
            fs,
        )
        .unwrap();
        let r = qkd_laser_lock(&t, &LockConfig { bandwidth_hz: 1e3 }).unwrap();
        assert!(r.mean().abs() < 1e-9);
        assert!((r.variance() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn run_length_edges() {
        assert_eq!(run_length(10.0, 1.0).unwrap(), 10);
        assert!(run_length(10.0, 0.0).is_err());
        assert!(run_length(0.0, 1.0).is_err());
    }
}
