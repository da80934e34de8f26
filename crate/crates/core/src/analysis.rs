//! Phase statistics: Welch PSD, frame-duration phase deviation by spectral
//! integration and by time-domain subsetting, and QBER estimates.

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{Error, Result};
use crate::noise::PhaseTrace;

/// QBER levels whose small-phase inversion `σ = 2√e` marks the threshold bands.
pub const QBER_THRESHOLDS: [f64; 3] = [0.005, 0.01, 0.03];

/// Minimum subsets for a sigma point not to be flagged low-confidence.
pub const MIN_CONFIDENT_SUBSETS: usize = 4;

/// Phase deviation at which the small-phase QBER reaches `qber`.
pub fn sigma_for_qber(qber: f64) -> f64 {
    2.0 * qber.sqrt()
}

/// One-sided phase PSD on `(0, f_s/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub frequencies: Vec<f64>,
    /// rad²/Hz
    pub density: Vec<f64>,
    pub sample_rate: f64,
    pub segment_len: usize,
    pub overlap: f64,
    pub segments: usize,
    pub window: String,
}

impl Psd {
    pub fn resolution(&self) -> f64 {
        self.sample_rate / self.segment_len as f64
    }

    pub fn lowest_frequency(&self) -> f64 {
        self.frequencies[0]
    }

    /// Trapezoidal integral of the density over `[f_lo, f_hi]`, with linear
    /// interpolation at band edges that fall between grid points.
    pub fn band_power(&self, f_lo: f64, f_hi: f64) -> f64 {
        let f = &self.frequencies;
        let s = &self.density;
        let lo = f_lo.max(f[0]);
        let hi = f_hi.min(*f.last().unwrap());
        if hi <= lo {
            return 0.0;
        }
        let interp = |x: f64| -> f64 {
            let j = f.partition_point(|&v| v <= x);
            if j == 0 {
                return s[0];
            }
            if j >= f.len() {
                return *s.last().unwrap();
            }
            let (x0, x1) = (f[j - 1], f[j]);
            s[j - 1] + (s[j] - s[j - 1]) * (x - x0) / (x1 - x0)
        };
        let mut total = 0.0;
        let mut prev_f = lo;
        let mut prev_s = interp(lo);
        let start = f.partition_point(|&v| v <= lo);
        for j in start..f.len() {
            if f[j] >= hi {
                break;
            }
            total += 0.5 * (prev_s + s[j]) * (f[j] - prev_f);
            prev_f = f[j];
            prev_s = s[j];
        }
        total += 0.5 * (prev_s + interp(hi)) * (hi - prev_f);
        total
    }

    /// Integral of the whole estimate.
    pub fn total_power(&self) -> f64 {
        self.band_power(self.frequencies[0], *self.frequencies.last().unwrap())
    }
}

/// Default Welch segment: the smallest power of two ≥ N/8, capped at N.
pub fn default_segment_len(n: usize) -> usize {
    let target = n.div_ceil(8).max(4).next_power_of_two();
    if target > n {
        prev_power_of_two(n)
    } else {
        target
    }
}

fn prev_power_of_two(n: usize) -> usize {
    if n.is_power_of_two() {
        n
    } else {
        n.next_power_of_two() >> 1
    }
}

/// Welch periodogram: periodic Hann window, per-segment mean removal,
/// one-sided density scaled so that `∫S df` equals the windowed variance.
pub fn welch_psd(trace: &PhaseTrace, segment_len: usize, overlap: f64) -> Result<Psd> {
    if segment_len < 4 || !segment_len.is_power_of_two() {
        return Err(Error::invalid(format!(
            "segment length {segment_len} must be a power of two >= 4"
        )));
    }
    if segment_len > trace.len() {
        return Err(Error::InsufficientData(format!(
            "segment length {segment_len} exceeds trace length {}",
            trace.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(format!("overlap {overlap} must be in [0, 1)")));
    }
    let step = (segment_len - (overlap * segment_len as f64).round() as usize).max(1);
    let segments = (trace.len() - segment_len) / step + 1;

    let window: Vec<f64> = (0..segment_len)
        .map(|i| {
            0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / segment_len as f64).cos())
        })
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = RealFftPlanner::<f64>::new();
    let r2c = planner.plan_fft_forward(segment_len);
    let mut input = r2c.make_input_vec();
    let mut spectrum = r2c.make_output_vec();
    let mut scratch = r2c.make_scratch_vec();
    let mut acc = vec![0.0; segment_len / 2 + 1];

    for seg in 0..segments {
        let chunk = &trace.samples[seg * step..seg * step + segment_len];
        let mean = chunk.iter().sum::<f64>() / segment_len as f64;
        for ((dst, &x), &w) in input.iter_mut().zip(chunk).zip(&window) {
            *dst = (x - mean) * w;
        }
        r2c.process_with_scratch(&mut input, &mut spectrum, &mut scratch)
            .map_err(|e| Error::invalid(format!("FFT failed: {e}")))?;
        for (a, z) in acc.iter_mut().zip(&spectrum) {
            *a += z.norm_sqr();
        }
    }

    let fs = trace.sample_rate;
    let scale = 1.0 / (fs * window_power * segments as f64);
    let half = segment_len / 2;
    let df = fs / segment_len as f64;
    let mut frequencies = Vec::with_capacity(half);
    let mut density = Vec::with_capacity(half);
    for (k, &a) in acc.iter().enumerate().skip(1) {
        let one_sided = if k == half { 1.0 } else { 2.0 };
        frequencies.push(k as f64 * df);
        density.push(one_sided * a * scale);
    }
    Ok(Psd {
        frequencies,
        density,
        sample_rate: fs,
        segment_len,
        overlap,
        segments,
        window: "hann".to_string(),
    })
}

/// Welch estimate with the default segment length and 50 % overlap.
pub fn welch_psd_default(trace: &PhaseTrace) -> Result<Psd> {
    welch_psd(trace, default_segment_len(trace.len()), 0.5)
}

/// `σ_φ(t_a) = sqrt(∫_{1/t_a}^{f_s/2} S_φ(f) df)`.
pub fn sigma_from_psd(psd: &Psd, t_a: f64) -> Result<f64> {
    if !(t_a.is_finite() && t_a > 2.0 / psd.sample_rate) {
        return Err(Error::OutOfRange(format!(
            "frame duration {t_a} s must exceed two sample periods"
        )));
    }
    let f_lo = 1.0 / t_a;
    // Allow for rounding in the grid itself.
    if f_lo < psd.lowest_frequency() * (1.0 - 1e-9) {
        return Err(Error::OutOfRange(format!(
            "1/t_a = {f_lo} Hz is below the lowest resolved frequency {} Hz",
            psd.lowest_frequency()
        )));
    }
    Ok(psd.band_power(f_lo, psd.sample_rate / 2.0).max(0.0).sqrt())
}

/// Time-domain deviation at one frame duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub t_a: f64,
    pub sigma: f64,
    /// Number of disjoint frames `i ≈ N/n` that fit the trace.
    pub subsets: usize,
    pub subset_len: usize,
    pub low_confidence: bool,
}

/// Splits the trace into frames of `n = round(t_a·f_s)` samples and returns
/// the root of the mean per-frame sample variance (`n − 1` normalization).
///
/// When `N` is not a multiple of `n`, frames aligned to the start and frames
/// aligned to the end are both used, so the statistic does not depend on
/// the direction of time.
pub fn sigma_time_domain(trace: &PhaseTrace, t_a: f64) -> Result<SigmaPoint> {
    if !(t_a.is_finite() && t_a > 0.0) {
        return Err(Error::OutOfRange(format!("frame duration {t_a} s must be > 0")));
    }
    let n = (t_a * trace.sample_rate).round() as usize;
    if n < 2 {
        return Err(Error::OutOfRange(format!(
            "frame duration {t_a} s holds fewer than 2 samples"
        )));
    }
    let total = trace.len();
    let subsets = total / n;
    if subsets == 0 {
        return Err(Error::InsufficientData(format!(
            "frame of {n} samples does not fit a {total}-sample trace"
        )));
    }
    let x = &trace.samples;
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..subsets {
        sum += sample_variance(&x[k * n..(k + 1) * n]);
        count += 1;
    }
    let rem = total - subsets * n;
    if rem > 0 {
        for k in 0..subsets {
            let start = rem + k * n;
            sum += sample_variance(&x[start..start + n]);
            count += 1;
        }
    }
    Ok(SigmaPoint {
        t_a,
        sigma: (sum / count as f64).sqrt(),
        subsets,
        subset_len: n,
        low_confidence: subsets < MIN_CONFIDENT_SUBSETS,
    })
}

/// Shifted by the first sample so that constant frames give exactly zero.
fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let shift = x[0];
    let mean = x.iter().map(|v| v - shift).sum::<f64>() / n;
    x.iter()
        .map(|v| {
            let d = v - shift - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QberMethod {
    SmallPhase,
    Integral,
    Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QberEstimate {
    pub e: f64,
    pub method: QberMethod,
    pub sigma_rad: Option<f64>,
    /// One-standard-error (samples, counts) or numerical-error (Gaussian) bound.
    pub uncertainty: f64,
    /// 95 % Wilson interval, counts method only.
    pub interval: Option<(f64, f64)>,
    pub warning: Option<String>,
}

/// `e = σ²/4`, the low-noise limit of the sin²(φ/2) expectation.
pub fn qber_small_phase(sigma: f64) -> Result<QberEstimate> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma {sigma} must be >= 0")));
    }
    let mut e = sigma * sigma / 4.0;
    let mut warning = None;
    if sigma > 0.5 {
        warning = Some(format!(
            "sigma = {sigma:.3} rad exceeds 0.5 rad; the small-phase approximation degrades"
        ));
        log::warn!("qber_small_phase: sigma = {sigma:.3} rad > 0.5 rad");
    }
    if e > 0.5 {
        e = 0.5;
    }
    Ok(QberEstimate {
        e,
        method: QberMethod::SmallPhase,
        sigma_rad: Some(sigma),
        uncertainty: 0.0,
        interval: None,
        warning,
    })
}

/// Phase distribution for the QBER integral.
#[derive(Debug, Clone, Copy)]
pub enum PhaseDistribution<'a> {
    Samples(&'a [f64]),
    Gaussian { mean: f64, sigma: f64 },
}

const QUADRATURE_HALF_WIDTH: f64 = 12.0;
const QUADRATURE_INTERVALS: usize = 6000;

/// `e = ∫ sin²(φ/2) P(φ) dφ`.
///
/// Sample sets use the empirical mean with its standard error. The Gaussian
/// case is integrated by composite Simpson over ±12σ; the reported
/// uncertainty is the gap to the closed form `(1 − cos μ·e^{−σ²/2})/2`.
pub fn qber_integral(dist: PhaseDistribution<'_>) -> Result<QberEstimate> {
    match dist {
        PhaseDistribution::Samples(xs) => {
            if xs.is_empty() {
                return Err(Error::InsufficientData("empty phase sample set".into()));
            }
            let n = xs.len() as f64;
            let vals = xs.iter().map(|&p| (p / 2.0).sin().powi(2));
            let (s, s2) = vals.fold((0.0, 0.0), |(a, b), v| (a + v, b + v * v));
            let e = s / n;
            let var = if xs.len() > 1 {
                ((s2 - n * e * e) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            let mean_phase = xs.iter().sum::<f64>() / n;
            let sigma = (xs.iter().map(|p| (p - mean_phase).powi(2)).sum::<f64>() / n).sqrt();
            Ok(QberEstimate {
                e,
                method: QberMethod::Integral,
                sigma_rad: Some(sigma),
                uncertainty: (var / n).sqrt(),
                interval: None,
                warning: (e > 0.5).then(|| "QBER above 0.5: operating point likely inverted".into()),
            })
        }
        PhaseDistribution::Gaussian { mean, sigma } => {
            if !(sigma.is_finite() && sigma >= 0.0 && mean.is_finite()) {
                return Err(Error::invalid(format!(
                    "Gaussian phase needs finite mean and sigma >= 0, got ({mean}, {sigma})"
                )));
            }
            let closed = (1.0 - mean.cos() * (-sigma * sigma / 2.0).exp()) / 2.0;
            let e = if sigma == 0.0 {
                (mean / 2.0).sin().powi(2)
            } else {
                simpson(
                    |x| {
                        let z = (x - mean) / sigma;
                        (x / 2.0).sin().powi(2) * (-0.5 * z * z).exp()
                            / (sigma * std::f64::consts::TAU.sqrt())
                    },
                    mean - QUADRATURE_HALF_WIDTH * sigma,
                    mean + QUADRATURE_HALF_WIDTH * sigma,
                    QUADRATURE_INTERVALS,
                )
            };
            Ok(QberEstimate {
                e,
                method: QberMethod::Integral,
                sigma_rad: Some(sigma),
                uncertainty: (e - closed).abs(),
                interval: None,
                warning: None,
            })
        }
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut sum = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// First frame duration at which the curve reaches a QBER threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCrossing {
    pub qber: f64,
    pub sigma: f64,
    /// Log-interpolated crossing time, `None` when never reached on the grid.
    pub t_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCurve {
    pub points: Vec<SigmaPoint>,
    pub crossings: Vec<ThresholdCrossing>,
}

impl SigmaCurve {
    pub fn t_a(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t_a).collect()
    }

    pub fn sigma_at(&self, t_a: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.t_a - t_a).abs() <= 1e-9 * t_a.abs().max(1e-300))
            .map(|p| p.sigma)
    }

    /// Log-interpolated first `t_a` where the deviation reaches `sigma`.
    pub fn first_crossing(&self, sigma: f64) -> Option<f64> {
        first_crossing(&self.points, sigma)
    }
}

fn first_crossing(points: &[SigmaPoint], level: f64) -> Option<f64> {
    let idx = points.iter().position(|p| p.sigma >= level)?;
    if idx == 0 {
        return Some(points[0].t_a);
    }
    let (a, b) = (&points[idx - 1], &points[idx]);
    let frac = (level - a.sigma) / (b.sigma - a.sigma);
    let ln_t = a.t_a.ln() + frac * (b.t_a.ln() - a.t_a.ln());
    Some(ln_t.exp())
}

/// Time-domain deviation over a grid of frame durations, with the QBER
/// threshold crossings annotated.
pub fn sigma_curve(trace: &PhaseTrace, grid: &[f64]) -> Result<SigmaCurve> {
    if grid.is_empty() {
        return Err(Error::invalid("empty frame-duration grid"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("frame-duration grid must be strictly increasing"));
    }
    let points = grid
        .iter()
        .map(|&t| sigma_time_domain(trace, t))
        .collect::<Result<Vec<_>>>()?;
    let crossings = QBER_THRESHOLDS
        .iter()
        .map(|&q| {
            let s = sigma_for_qber(q);
            ThresholdCrossing {
                qber: q,
                sigma: s,
                t_a: first_crossing(&points, s),
            }
        })
        .collect();
    Ok(SigmaCurve { points, crossings })
}

/// 1-2-3-5 sequence per decade from `t_min` to `t_max` inclusive.
pub fn log_grid(t_min: f64, t_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut decade = 10f64.powi(t_min.log10().floor() as i32 - 1);
    while decade <= t_max * 10.0 {
        for m in [1.0, 2.0, 3.0, 5.0] {
            // round away binary noise from the decade multiplication
            let t = format!("{:.6e}", m * decade).parse::<f64>().unwrap();
            if t >= t_min * (1.0 - 1e-12) && t <= t_max * (1.0 + 1e-12) {
                out.push(t);
            }
        }
        decade *= 10.0;
    }
    out
}

/// Default frame grid for a trace: from 1 µs (or 2 samples) up to the trace duration.
pub fn default_ta_grid(sample_rate: f64, duration: f64) -> Vec<f64> {
    let t_min = (2.0 / sample_rate).max(1e-6);
    log_grid(t_min, duration)
}

/// Chi-square goodness of fit of per-bin counts against a Poisson law with
/// the sample mean; bins with expected occupancy below 5 are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    pub mean: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn poisson_goodness_of_fit(counts: &[u64]) -> Result<PoissonFit> {
    if counts.len() < 10 {
        return Err(Error::InsufficientData(
            "goodness of fit needs at least 10 bins".into(),
        ));
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    if mean <= 0.0 {
        return Err(Error::InsufficientData("no counts to fit".into()));
    }
    let law = Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?;
    let max_k = *counts.iter().max().unwrap();
    let mut observed = vec![0.0; max_k as usize + 1];
    for &c in counts {
        observed[c as usize] += 1.0;
    }
    // Class k covers exactly k, except the last which takes the upper tail.
    let mut expected: Vec<f64> = (0..=max_k).map(|k| n * law.pmf(k)).collect();
    let below: f64 = expected.iter().sum();
    *expected.last_mut().unwrap() += (n - below).max(0.0);

    let mut classes: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(&expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= 5.0 {
            classes.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match classes.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => classes.push((o_acc, e_acc)),
        }
    }
    if classes.len() < 3 {
        return Err(Error::InsufficientData(
            "too few populated classes for a chi-square test".into(),
        ));
    }
    let chi2: f64 = classes.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = classes.len() - 2;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(PoissonFit {
        mean,
        chi2,
        dof,
        p_value: 1.0 - dist.cdf(chi2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trace_zero_psd() {
        let t = PhaseTrace::zeros(4096, 1000.0).unwrap();
        let p = welch_psd(&t, 512, 0.5).unwrap();
        assert!(p.density.iter().all(|&s| s == 0.0));
        assert_eq!(p.frequencies.len(), 256);
        assert!((p.frequencies[255] - 500.0).abs() < 1e-12);
    }

    #[test]
    fn segment_longer_than_trace_rejected() {
        let t = PhaseTrace::zeros(100, 1.0).unwrap();
        assert!(welch_psd(&t, 128, 0.5).is_err());
        assert!(welch_psd(&t, 48, 0.5).is_err());
    }

    #[test]
    fn default_segment_rule() {
        assert_eq!(default_segment_len(1 << 20), 1 << 17);
        assert_eq!(default_segment_len(20_000_000), 1 << 22);
        assert_eq!(default_segment_len(9), 4);
    }

    #[test]
    fn flat_psd_rectangle() {
        let fs = 1000.0;
        let psd = Psd {
            frequencies: (1..=500).map(|k| k as f64).collect(),
            density: vec![2.0; 500],
            sample_rate: fs,
            segment_len: 1000,
            overlap: 0.5,
            segments: 1,
            window: "hann".into(),
        };
        let t_a = 0.1;
        let s = sigma_from_psd(&psd, t_a).unwrap();
        let expected = (2.0 * (fs / 2.0 - 1.0 / t_a)).sqrt();
        assert!((s - expected).abs() < 1e-9);
        // edge between grid points
        let s = sigma_from_psd(&psd, 1.0 / 10.5).unwrap();
        assert!((s * s - 2.0 * (500.0 - 10.5)).abs() < 1e-9);
        assert!(sigma_from_psd(&psd, 2.0).is_err());
        assert!(sigma_from_psd(&psd, 0.001).is_err());
    }

    #[test]
    fn zero_psd_zero_sigma() {
        let t = PhaseTrace::zeros(1 << 12, 1000.0).unwrap();
        let p = welch_psd(&t, 512, 0.5).unwrap();
        assert_eq!(sigma_from_psd(&p, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn constant_trace_zero_sigma() {
        let t = PhaseTrace::new(vec![1.7; 1000], 100.0).unwrap();
        let p = sigma_time_domain(&t, 0.1).unwrap();
        assert_eq!(p.sigma, 0.0);
        assert_eq!(p.subsets, 100);
    }

    #[test]
    fn alternating_sequence_sigma() {
        // ±a with even frame length n has sample std a·sqrt(n/(n−1)).
        let a = 0.3;
        let t = PhaseTrace::new((0..4000).map(|i| if i % 2 == 0 { a } else { -a }).collect(), 1.0)
            .unwrap();
        for n in [2usize, 4, 10, 100, 1000] {
            let p = sigma_time_domain(&t, n as f64).unwrap();
            let expected = a * (n as f64 / (n as f64 - 1.0)).sqrt();
            assert!((p.sigma - expected).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn time_domain_rejects_unresolvable() {
        let t = PhaseTrace::zeros(10, 1.0).unwrap();
        assert!(sigma_time_domain(&t, 1.0).is_err());
        assert!(sigma_time_domain(&t, 11.0).is_err());
        assert!(sigma_time_domain(&t, 10.0).is_ok());
    }

    #[test]
    fn small_phase_values() {
        assert_eq!(qber_small_phase(0.0).unwrap().e, 0.0);
        assert!((qber_small_phase(0.13).unwrap().e - 0.004225).abs() < 1e-15);
        assert!((qber_small_phase(0.2).unwrap().e - 0.01).abs() < 1e-15);
        assert!(qber_small_phase(0.6).unwrap().warning.is_some());
        assert!(qber_small_phase(0.3).unwrap().warning.is_none());
    }

    #[test]
    fn integral_point_mass_and_empty() {
        let e = qber_integral(PhaseDistribution::Samples(&[0.0; 10])).unwrap();
        assert_eq!(e.e, 0.0);
        assert!(qber_integral(PhaseDistribution::Samples(&[])).is_err());
        let g = qber_integral(PhaseDistribution::Gaussian {
            mean: 0.0,
            sigma: 0.0,
        })
        .unwrap();
        assert_eq!(g.e, 0.0);
    }

    #[test]
    fn thresholds_invert_small_phase() {
        assert!((sigma_for_qber(0.01) - 0.2).abs() < 1e-15);
        assert!((sigma_for_qber(0.005) - 0.141_421_356).abs() < 1e-8);
        assert!((sigma_for_qber(0.03) - 0.346_410_16).abs() < 1e-8);
    }

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(10, 1000, 1.96);
        assert!(lo < 0.01 && hi > 0.01);
        let (lo, hi) = wilson_interval(0, 1000, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn log_grid_sequence() {
        let g = log_grid(1e-6, 4.0);
        assert_eq!(g[0], 1e-6);
        assert_eq!(*g.last().unwrap(), 3.0);
        assert!(g.contains(&1e-2));
        assert!(g.contains(&0.1));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
