//! Seeded colored phase-noise synthesis.
//!
//! Traces are synthesized in the frequency domain: every positive-frequency
//! bin of a length-`n` real spectrum gets a complex Gaussian amplitude scaled
//! so that the one-sided PSD of the result is `S(f) = Σ h_α f^α` on
//! `[f_s/n, f_s/2]`, and a single inverse real FFT produces the trace.
//! Deterministic tones and transient events are added in the time domain.
//!
//! The random source is ChaCha20 (`rand_chacha::ChaCha20Rng`). Each seed owns
//! three independent ChaCha streams: stream 0 drives the spectral amplitudes,
//! stream 1 the tone phases and stream 2 the transient events. Zeroing one
//! component therefore never shifts the random numbers seen by another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use realfft::num_complex::Complex;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-law coefficients `h_α` of a one-sided phase PSD `S_φ(f) = Σ h_α f^α`.
///
/// Units are rad²·Hz^(−1−α). Field names follow the usual oscillator-noise
/// nomenclature for each exponent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerLaw {
    /// α = 0
    pub white_phase: f64,
    /// α = −1
    pub flicker_phase: f64,
    /// α = −2
    pub white_frequency: f64,
    /// α = −3
    pub flicker_frequency: f64,
    /// α = −4
    pub random_walk_frequency: f64,
}

impl PowerLaw {
    pub const EXPONENTS: [i32; 5] = [0, -1, -2, -3, -4];

    pub fn get(&self, alpha: i32) -> Option<f64> {
        match alpha {
            0 => Some(self.white_phase),
            -1 => Some(self.flicker_phase),
            -2 => Some(self.white_frequency),
            -3 => Some(self.flicker_frequency),
            -4 => Some(self.random_walk_frequency),
            _ => None,
        }
    }

    pub fn set(&mut self, alpha: i32, h: f64) -> Result<()> {
        let slot = match alpha {
            0 => &mut self.white_phase,
            -1 => &mut self.flicker_phase,
            -2 => &mut self.white_frequency,
            -3 => &mut self.flicker_frequency,
            -4 => &mut self.random_walk_frequency,
            _ => return Err(Error::invalid(format!("power-law exponent {alpha} not in -4..=0"))),
        };
        *slot = h;
        Ok(())
    }

    /// `(α, h_α)` pairs in exponent order 0, −1, …, −4.
    pub fn terms(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        Self::EXPONENTS
            .iter()
            .map(move |&a| (a, self.get(a).unwrap_or(0.0)))
    }

    pub fn psd(&self, f: f64) -> f64 {
        self.terms()
            .filter(|&(_, h)| h != 0.0)
            .map(|(a, h)| h * f.powi(a))
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms().all(|(_, h)| h == 0.0)
    }

    fn scaled(&self, power_factor: f64) -> Self {
        PowerLaw {
            white_phase: self.white_phase * power_factor,
            flicker_phase: self.flicker_phase * power_factor,
            white_frequency: self.white_frequency * power_factor,
            flicker_frequency: self.flicker_frequency * power_factor,
            random_walk_frequency: self.random_walk_frequency * power_factor,
        }
    }

    fn plus(&self, other: &PowerLaw) -> Self {
        PowerLaw {
            white_phase: self.white_phase + other.white_phase,
            flicker_phase: self.flicker_phase + other.flicker_phase,
            white_frequency: self.white_frequency + other.white_frequency,
            flicker_frequency: self.flicker_frequency + other.flicker_frequency,
            random_walk_frequency: self.random_walk_frequency + other.random_walk_frequency,
        }
    }
}

/// Deterministic sinusoidal phase modulation with a seeded random phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tone {
    pub frequency_hz: f64,
    /// Peak phase amplitude (rad).
    pub amplitude_rad: f64,
}

/// Poisson-distributed phase excursions.
///
/// Each event moves the phase by `±amplitude_rad` (random sign) along a
/// raised-cosine step lasting `duration_s`; the offset persists afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientModel {
    pub rate_hz: f64,
    pub amplitude_rad: f64,
    pub duration_s: f64,
}

/// Parametric phase-noise description shared by fibers and lasers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub power_law: PowerLaw,
    pub tones: Vec<Tone>,
    pub transients: Vec<TransientModel>,
}

impl NoiseSpec {
    pub fn white_phase(h0: f64) -> Self {
        NoiseSpec {
            power_law: PowerLaw {
                white_phase: h0,
                ..PowerLaw::default()
            },
            ..NoiseSpec::default()
        }
    }

    pub fn from_terms(terms: &[(i32, f64)]) -> Result<Self> {
        let mut spec = NoiseSpec::default();
        for &(alpha, h) in terms {
            let current = spec.power_law.get(alpha).unwrap_or(0.0);
            spec.power_law.set(alpha, current + h)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// True when the spec generates an all-zero trace.
    pub fn is_silent(&self) -> bool {
        self.power_law.is_zero()
            && self.tones.iter().all(|t| t.amplitude_rad == 0.0)
            && self
                .transients
                .iter()
                .all(|t| t.amplitude_rad == 0.0 || t.rate_hz == 0.0)
    }

    /// One-sided PSD of the stochastic (power-law) part, rad²/Hz.
    pub fn psd(&self, f: f64) -> f64 {
        self.power_law.psd(f)
    }

    /// Scales the trace amplitude by `factor`: power-law terms by `factor²`,
    /// tone and transient amplitudes by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        NoiseSpec {
            power_law: self.power_law.scaled(factor * factor),
            tones: self
                .tones
                .iter()
                .map(|t| Tone {
                    amplitude_rad: t.amplitude_rad * factor,
                    ..*t
                })
                .collect(),
            transients: self
                .transients
                .iter()
                .map(|t| TransientModel {
                    amplitude_rad: t.amplitude_rad * factor,
                    ..*t
                })
                .collect(),
        }
    }

    /// Spec of the sum of two independent processes.
    pub fn merged(&self, other: &NoiseSpec) -> Self {
        NoiseSpec {
            power_law: self.power_law.plus(&other.power_law),
            tones: self.tones.iter().chain(&other.tones).copied().collect(),
            transients: self
                .transients
                .iter()
                .chain(&other.transients)
                .copied()
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (alpha, h) in self.power_law.terms() {
            if !(h.is_finite() && h >= 0.0) {
                return Err(Error::invalid(format!(
                    "power-law coefficient h[{alpha}] = {h} must be finite and >= 0"
                )));
            }
        }
        for t in &self.tones {
            if !(t.frequency_hz.is_finite() && t.frequency_hz > 0.0) {
                return Err(Error::invalid(format!(
                    "tone frequency {} Hz must be > 0",
                    t.frequency_hz
                )));
            }
            if !t.amplitude_rad.is_finite() {
                return Err(Error::invalid("tone amplitude must be finite"));
            }
        }
        for t in &self.transients {
            if !(t.rate_hz.is_finite() && t.rate_hz >= 0.0) {
                return Err(Error::invalid("transient rate must be finite and >= 0"));
            }
            if !(t.duration_s.is_finite() && t.duration_s > 0.0) {
                return Err(Error::invalid("transient duration must be > 0"));
            }
            if !t.amplitude_rad.is_finite() {
                return Err(Error::invalid("transient amplitude must be finite"));
            }
        }
        Ok(())
    }

    /// Checks the spec against the Nyquist frequency of a trace sampled at `sample_rate`.
    pub fn validate_for_rate(&self, sample_rate: f64) -> Result<()> {
        self.validate()?;
        if let Some(t) = self
            .tones
            .iter()
            .find(|t| t.frequency_hz >= sample_rate / 2.0)
        {
            return Err(Error::invalid(format!(
                "tone at {} Hz is not below Nyquist ({} Hz)",
                t.frequency_hz,
                sample_rate / 2.0
            )));
        }
        Ok(())
    }
}

/// Uniformly sampled phase series (rad).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    /// Time of the first sample (s).
    pub t0: f64,
    /// Free-form tag recording how the trace was produced.
    pub provenance: String,
}

impl PhaseTrace {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate {sample_rate} must be > 0"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "trace needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        Ok(PhaseTrace {
            samples,
            sample_rate,
            t0: 0.0,
            provenance: String::new(),
        })
    }

    pub fn zeros(n: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![0.0; n], sample_rate)
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn with_provenance(mut self, tag: impl Into<String>) -> Self {
        self.provenance = tag.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Keeps the first `n` samples.
    pub fn truncated(mut self, n: usize) -> Result<Self> {
        if n < 2 || n > self.samples.len() {
            return Err(Error::invalid(format!(
                "cannot truncate {} samples to {n}",
                self.samples.len()
            )));
        }
        self.samples.truncate(n);
        self.samples.shrink_to_fit();
        Ok(self)
    }

    pub fn ensure_compatible(&self, other: &PhaseTrace) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::Mismatch(format!(
                "sample rates differ: {} Hz vs {} Hz",
                self.sample_rate, other.sample_rate
            )));
        }
        if self.len() != other.len() {
            return Err(Error::Mismatch(format!(
                "lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Element-wise `self + factor * other`.
    pub fn add_scaled(&mut self, other: &PhaseTrace, factor: f64) -> Result<()> {
        self.ensure_compatible(other)?;
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PhaseTrace {
        PhaseTrace {
            samples: self.samples.iter().map(|&x| f(x)).collect(),
            sample_rate: self.sample_rate,
            t0: self.t0,
            provenance: self.provenance.clone(),
        }
    }

    pub fn reversed(&self) -> PhaseTrace {
        let mut out = self.clone();
        out.samples.reverse();
        out
    }
}

const STREAM_SPECTRUM: u64 = 0;
const STREAM_TONES: u64 = 1;
const STREAM_TRANSIENTS: u64 = 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a label into a seed so that each noise source of a scenario gets
/// its own reproducible sub-seed (splitmix64 finalizer over an FNV-1a hash).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Synthesizes `n` samples at `sample_rate` whose ensemble one-sided PSD is
/// `spec.psd(f)` on `[f_s/n, f_s/2]`, plus the spec's tones and transients.
pub fn gen_power_law(spec: &NoiseSpec, sample_rate: f64, n: usize, seed: u64) -> Result<PhaseTrace> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::invalid(format!(
            "trace length {n} must be a power of two >= 2"
        )));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid(format!("sample rate {sample_rate} must be > 0")));
    }
    spec.validate_for_rate(sample_rate)?;

    let mut samples = if spec.power_law.is_zero() {
        vec![0.0; n]
    } else {
        synthesize_spectrum(&spec.power_law, sample_rate, n, seed)?
    };
    add_tones(&mut samples, &spec.tones, sample_rate, seed);
    add_transients(&mut samples, &spec.transients, sample_rate, seed);

    Ok(PhaseTrace::new(samples, sample_rate)?
        .with_provenance(format!("power-law seed={seed} n={n} fs={sample_rate}")))
}

fn synthesize_spectrum(law: &PowerLaw, sample_rate: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng_for(seed, STREAM_SPECTRUM);
    let mut planner = RealFftPlanner::<f64>::new();
    let c2r = planner.plan_fft_inverse(n);
    let mut spectrum = c2r.make_input_vec();
    let half = n / 2;
    let df = sample_rate / n as f64;
    let bin_scale = sample_rate * n as f64 / 4.0;

    spectrum[0] = Complex::new(0.0, 0.0);
    for (k, bin) in spectrum.iter_mut().enumerate().skip(1) {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let s = law.psd(k as f64 * df);
        *bin = if k == half {
            // The Nyquist bin is real and carries the whole bin power.
            Complex::new(re * (4.0 * bin_scale * s).sqrt(), 0.0)
        } else {
            Complex::new(re, im) * (bin_scale * s).sqrt()
        };
    }

    let mut out = c2r.make_output_vec();
    c2r.process(&mut spectrum, &mut out)
        .map_err(|e| Error::invalid(format!("inverse FFT failed: {e}")))?;
    let norm = 1.0 / n as f64;
    out.iter_mut().for_each(|x| *x *= norm);
    Ok(out)
}

fn add_tones(samples: &mut [f64], tones: &[Tone], sample_rate: f64, seed: u64) {
    if tones.is_empty() {
        return;
    }
    let mut rng = rng_for(seed, STREAM_TONES);
    for tone in tones {
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        if tone.amplitude_rad == 0.0 {
            continue;
        }
        let w = std::f64::consts::TAU * tone.frequency_hz / sample_rate;
        for (i, x) in samples.iter_mut().enumerate() {
            *x += tone.amplitude_rad * (w * i as f64 + phase).sin();
        }
    }
}

fn add_transients(samples: &mut [f64], models: &[TransientModel], sample_rate: f64, seed: u64) {
    if models.is_empty() {
        return;
    }
    let n = samples.len();
    let span = n as f64 / sample_rate;
    let mut rng = rng_for(seed, STREAM_TRANSIENTS);
    // Persistent offsets are accumulated as a difference array.
    let mut steps = vec![0.0; n + 1];
    let mut any = false;
    for model in models {
        if model.rate_hz <= 0.0 {
            continue;
        }
        let gaps = Exp::new(model.rate_hz).expect("rate validated > 0");
        let d = model.duration_s;
        // Events starting before t = 0 still overlap the trace.
        let mut t = -d;
        loop {
            t += gaps.sample(&mut rng);
            if t >= span {
                break;
            }
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let a = sign * model.amplitude_rad;
            let i0 = ((t * sample_rate).ceil().max(0.0)) as usize;
            let end = t + d;
            let i1 = ((end * sample_rate).ceil().max(0.0) as usize).min(n);
            for (i, x) in samples.iter_mut().enumerate().take(i1).skip(i0) {
                let u = (i as f64 / sample_rate - t) / d;
                *x += a * (u - (std::f64::consts::TAU * u).sin() / std::f64::consts::TAU);
            }
            if i1 < n {
                steps[i1] += a;
                any = true;
            }
        }
    }
    if any {
        let mut acc = 0.0;
        for (x, s) in samples.iter_mut().zip(&steps) {
            acc += s;
            *x += acc;
        }
    }
}

/// [`gen_power_law`] for any length: synthesizes the next power of two and
/// keeps the first `n` samples.
pub fn gen_trace(spec: &NoiseSpec, sample_rate: f64, n: usize, seed: u64) -> Result<PhaseTrace> {
    let full = n.max(2).next_power_of_two();
    gen_power_law(spec, sample_rate, full, seed)?.truncated(n)
}

/// `φ(i) − φ(i − m)` with `m = round(delay·f_s)`; the output starts at the
/// first sample with a full delay history and is `m` samples shorter.
pub fn delayed_self(trace: &PhaseTrace, delay_s: f64) -> Result<PhaseTrace> {
    if !(delay_s.is_finite() && delay_s >= 0.0) {
        return Err(Error::invalid(format!("delay {delay_s} s must be >= 0")));
    }
    let m = (delay_s * trace.sample_rate).round() as usize;
    if m + 2 > trace.len() {
        return Err(Error::InsufficientData(format!(
            "delay of {m} samples leaves fewer than 2 samples of a {}-sample trace",
            trace.len()
        )));
    }
    let samples = trace.samples[m..]
        .iter()
        .zip(&trace.samples)
        .map(|(now, past)| now - past)
        .collect();
    Ok(PhaseTrace::new(samples, trace.sample_rate)?
        .with_t0(trace.time(m))
        .with_provenance(format!("delayed-self({m} samples) of [{}]", trace.provenance)))
}

/// White-frequency-noise spec for a laser of Lorentzian FWHM `linewidth_hz`.
///
/// A Lorentzian line of FWHM `Δν` comes from a flat frequency-noise PSD
/// `S_ν = Δν/π` (Hz²/Hz), i.e. phase PSD `S_φ(f) = (Δν/π)·f⁻²`.
pub fn laser_spec(linewidth_hz: f64) -> Result<NoiseSpec> {
    if !(linewidth_hz.is_finite() && linewidth_hz > 0.0) {
        return Err(Error::invalid(format!(
            "laser linewidth {linewidth_hz} Hz must be > 0"
        )));
    }
    Ok(NoiseSpec {
        power_law: PowerLaw {
            white_frequency: linewidth_hz / std::f64::consts::PI,
            ..PowerLaw::default()
        },
        ..NoiseSpec::default()
    })
}

/// Monte Carlo setup used to measure the drift of a fiber-noise shape.
#[derive(Debug, Clone)]
pub struct DriftCalibration {
    pub sample_rate: f64,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub window_s: f64,
    pub percentile: f64,
}

impl Default for DriftCalibration {
    fn default() -> Self {
        DriftCalibration {
            sample_rate: 1.0e6,
            n: 1 << 21,
            seeds: (0..16).map(|i| 0x0D21_F700 + i).collect(),
            window_s: 1.0e-3,
            percentile: 0.95,
        }
    }
}

impl DriftCalibration {
    /// Pooled `percentile` of `|φ(t + window) − φ(t)|` over all seeds, in rad per ms.
    pub fn measure(&self, spec: &NoiseSpec) -> Result<f64> {
        let lag = (self.window_s * self.sample_rate).round() as usize;
        if lag == 0 || lag >= self.n {
            return Err(Error::invalid("drift window must span 1..n samples"));
        }
        let mut pool: Vec<f32> = Vec::with_capacity(self.seeds.len() * (self.n - lag));
        for &seed in &self.seeds {
            let trace = gen_power_law(spec, self.sample_rate, self.n, seed)?;
            pool.extend(
                trace.samples[lag..]
                    .iter()
                    .zip(&trace.samples)
                    .map(|(a, b)| (a - b).abs() as f32),
            );
        }
        let per_ms = 1.0e-3 / (lag as f64 / self.sample_rate);
        Ok(percentile_f32(&mut pool, self.percentile) * per_ms)
    }
}

/// `percentile` (0..=1) of `|Δφ|` over lag `window_s`, in rad per ms.
pub fn drift_metric(trace: &PhaseTrace, window_s: f64, percentile: f64) -> Result<f64> {
    let lag = (window_s * trace.sample_rate).round() as usize;
    if lag == 0 || lag >= trace.len() {
        return Err(Error::InsufficientData(format!(
            "drift window of {lag} samples does not fit a {}-sample trace",
            trace.len()
        )));
    }
    let mut diffs: Vec<f32> = trace.samples[lag..]
        .iter()
        .zip(&trace.samples)
        .map(|(a, b)| (a - b).abs() as f32)
        .collect();
    let per_ms = 1.0e-3 / (lag as f64 / trace.sample_rate);
    Ok(percentile_f32(&mut diffs, percentile) * per_ms)
}

fn percentile_f32(values: &mut [f32], q: f64) -> f64 {
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    let (_, v, _) = values.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    f64::from(*v)
}

/// Scales `base_shape` so that its drift metric equals `target_rad_per_ms`.
///
/// Every component of a [`NoiseSpec`] scales linearly in amplitude, so one
/// Monte Carlo pass over the fixed calibration seeds fixes the factor exactly.
pub fn calibrate_fiber_spec(target_rad_per_ms: f64, base_shape: &NoiseSpec) -> Result<NoiseSpec> {
    calibrate_fiber_spec_with(target_rad_per_ms, base_shape, &DriftCalibration::default())
        .map(|(spec, _)| spec)
}

/// As [`calibrate_fiber_spec`], also returning the amplitude factor applied.
pub fn calibrate_fiber_spec_with(
    target_rad_per_ms: f64,
    base_shape: &NoiseSpec,
    calibration: &DriftCalibration,
) -> Result<(NoiseSpec, f64)> {
    if !(target_rad_per_ms.is_finite() && target_rad_per_ms > 0.0) {
        return Err(Error::invalid(format!(
            "target drift {target_rad_per_ms} rad/ms must be > 0"
        )));
    }
    base_shape.validate()?;
    if base_shape.is_silent() {
        return Err(Error::invalid("base shape is identically zero; nothing to scale"));
    }
    let measured = calibration.measure(base_shape)?;
    if !(measured > 0.0) {
        return Err(Error::invalid(
            "base shape shows no drift over the calibration window",
        ));
    }
    let factor = target_rad_per_ms / measured;
    Ok((base_shape.scaled(factor), factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spec_gives_zero_trace() {
        let t = gen_power_law(&NoiseSpec::default(), 1.0e3, 1024, 9).unwrap();
        assert!(t.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_non_power_of_two() {
        let spec = NoiseSpec::white_phase(1.0);
        assert!(gen_power_law(&spec, 1.0, 1000, 0).is_err());
        assert!(gen_power_law(&spec, 1.0, 1, 0).is_err());
    }

    #[test]
    fn rejects_tone_above_nyquist() {
        let spec = NoiseSpec {
            tones: vec![Tone {
                frequency_hz: 600.0,
                amplitude_rad: 1.0,
            }],
            ..NoiseSpec::default()
        };
        assert!(gen_power_law(&spec, 1000.0, 256, 0).is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = NoiseSpec::from_terms(&[(0, 1e-3), (-2, 1e-1)]).unwrap();
        let a = gen_power_law(&spec, 1.0e4, 4096, 77).unwrap();
        let b = gen_power_law(&spec, 1.0e4, 4096, 77).unwrap();
        let c = gen_power_law(&spec, 1.0e4, 4096, 78).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn delay_zero_cancels() {
        let spec = NoiseSpec::from_terms(&[(-2, 1.0)]).unwrap();
        let t = gen_power_law(&spec, 1.0e3, 512, 3).unwrap();
        let d = delayed_self(&t, 0.0).unwrap();
        assert_eq!(d.len(), t.len());
        assert!(d.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn delayed_step_is_a_pulse() {
        let fs = 100.0;
        let k = 30;
        let m = 7;
        let samples: Vec<f64> = (0..100).map(|i| if i >= k { 1.0 } else { 0.0 }).collect();
        let t = PhaseTrace::new(samples, fs).unwrap();
        let d = delayed_self(&t, m as f64 / fs).unwrap();
        assert_eq!(d.len(), 100 - m);
        for j in 0..d.len() {
            // output sample j sits at original index j + m
            let i = j + m;
            let expected = if (k..k + m).contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(d.samples[j], expected, "index {i}");
        }
        assert!((d.t0 - m as f64 / fs).abs() < 1e-12);
    }

    #[test]
    fn delay_longer_than_trace_is_insufficient_data() {
        let t = PhaseTrace::zeros(10, 1.0).unwrap();
        assert!(matches!(
            delayed_self(&t, 20.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn laser_spec_mapping() {
        let s = laser_spec(1.0).unwrap();
        assert!((s.power_law.white_frequency - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        let s2 = laser_spec(2.0).unwrap();
        assert!((s2.power_law.white_frequency - 2.0 * s.power_law.white_frequency).abs() < 1e-15);
        assert!(laser_spec(0.0).is_err());
        assert!(laser_spec(-1.0).is_err());
    }

    #[test]
    fn derive_seed_separates_labels() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(5, "fiber"), derive_seed(5, "fiber"));
    }

    #[test]
    fn calibration_rejects_silent_shape() {
        assert!(calibrate_fiber_spec(30.0, &NoiseSpec::default()).is_err());
    }
}
