//! Scenario files, the end-to-end run that turns one into data files and a
//! report, and the comparison and budget tables built on top.
//!
//! Scenarios are TOML. Unknown keys are rejected so that typos surface as
//! configuration errors with the offending path.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    default_ta_grid, qber_integral, qber_small_phase, sigma_curve, welch_psd_default,
    PhaseDistribution, Psd, QberEstimate, SigmaCurve, ThresholdCrossing,
};
use crate::control::{
    closed_loop_run, LockConfig, LoopConfig, LoopConfigs, LoopKind, NoiseInputs, RunSettings,
    DEFAULT_ERROR_SCALE, DEFAULT_INTEGRAL_CORNER, DEFAULT_LATENCY_SAMPLES,
};
use crate::detect::{
    background_budget, fluxes_from_pattern, photodiode_acquire, qber_from_counts, spd_detect,
    BackgroundBudget, BackgroundModel, Detector, PhotodiodeConfig, SpdConfig,
};
use crate::error::{Error, Result};
use crate::interference::{intensity, retrieve_phase, InterferencePattern};
use crate::link::{loss_budget, timing_skew, ArmPair, LinkTopology, LossBudget, TimingSkew};
use crate::noise::{calibrate_fiber_spec_with, derive_seed, laser_spec, DriftCalibration, NoiseSpec, PhaseTrace};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "PHASELINK_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    /// Scale fiber phase to the QKD wavelength.
    #[serde(default = "yes")]
    pub wavelength_mismatch: bool,
    pub topology: LinkTopology,
    #[serde(default)]
    pub fiber: FiberNoise,
    #[serde(default)]
    pub lasers: Lasers,
    #[serde(default)]
    pub uncommon_path: UncommonPath,
    #[serde(default)]
    pub loops: Loops,
    pub photodiode: PhotodiodeSection,
    #[serde(default)]
    pub detectors: Detectors,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn yes() -> bool {
    true
}

/// Link-level differential fiber noise, optionally scaled to a drift target.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberNoise {
    pub shape: NoiseSpec,
    /// 95th percentile of the 1 ms phase change, rad/ms.
    pub drift_target_rad_per_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lasers {
    /// Lorentzian linewidth of the shared reference laser.
    pub reference_linewidth_hz: Option<f64>,
    /// Free-running linewidth of each QKD laser.
    pub qkd_linewidth_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncommonPath {
    pub alice: NoiseSpec,
    pub bob: NoiseSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Loops {
    pub fiber: Option<FiberLoopSection>,
    pub qkd_lock: Option<LockSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberLoopSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_kind")]
    pub kind: LoopKind,
    pub bandwidth_hz: f64,
    /// Added to the default two-sample latency.
    #[serde(default)]
    pub electronics_delay_s: f64,
    #[serde(default = "default_corner")]
    pub integral_corner: f64,
    #[serde(default = "default_error_scale")]
    pub error_scale: f64,
    #[serde(default = "default_gain_scale")]
    pub gain_scale: f64,
    #[serde(default)]
    pub slew_limit_rad_per_s: Option<f64>,
    #[serde(default)]
    pub range_limit_rad: Option<f64>,
}

fn default_kind() -> LoopKind {
    LoopKind::Pi
}
fn default_corner() -> f64 {
    DEFAULT_INTEGRAL_CORNER
}
fn default_error_scale() -> f64 {
    DEFAULT_ERROR_SCALE
}
fn default_gain_scale() -> f64 {
    1.0
}

impl FiberLoopSection {
    pub fn to_config(&self, sample_rate_hz: f64) -> LoopConfig {
        LoopConfig {
            kind: self.kind,
            bandwidth_hz: self.bandwidth_hz,
            sample_rate_hz,
            latency_s: DEFAULT_LATENCY_SAMPLES / sample_rate_hz + self.electronics_delay_s,
            integral_corner: self.integral_corner,
            error_scale: self.error_scale,
            gain_scale: self.gain_scale,
            slew_limit_rad_per_s: self.slew_limit_rad_per_s,
            range_limit_rad: self.range_limit_rad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotodiodeSection {
    /// Omitted means an ideal, unfiltered front end.
    #[serde(default)]
    pub analog_bandwidth_hz: Option<f64>,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub noise_rms: f64,
    /// Operating point of the classical interference measurement.
    #[serde(default = "quadrature")]
    pub operating_point_rad: f64,
}

fn quadrature() -> f64 {
    std::f64::consts::FRAC_PI_2
}

impl PhotodiodeSection {
    pub fn to_config(&self) -> PhotodiodeConfig {
        PhotodiodeConfig {
            analog_bandwidth_hz: self.analog_bandwidth_hz.unwrap_or(f64::INFINITY),
            sample_rate_hz: self.sample_rate_hz,
            noise_rms: self.noise_rms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Detectors {
    pub spd: SpdConfig,
    pub background: BackgroundModel,
    /// Photon rate arriving at Charlie's beam splitter before attenuation.
    pub source_rate_hz: f64,
    pub attenuation_db: f64,
    /// Flux is averaged over this many phase samples before detection.
    pub flux_decimation: usize,
}

impl Default for Detectors {
    fn default() -> Self {
        Detectors {
            spd: SpdConfig::default(),
            background: BackgroundModel::default(),
            source_rate_hz: 0.0,
            attenuation_db: 0.0,
            flux_decimation: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Frame-duration grid; defaults to a 1-2-3-5 grid over the run.
    pub ta_grid_s: Option<Vec<f64>>,
    /// Frame durations summarized in the report.
    pub key_ta_s: Vec<f64>,
    /// Upper edge of the in-band region for loop suppression.
    pub in_band_hz: f64,
    /// Edges of the bands summarized in the report.
    pub band_edges_hz: Vec<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            ta_grid_s: None,
            key_ta_s: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            in_band_hz: 5e3,
            band_edges_hz: vec![1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Write the full retrieved-phase trace (large).
    pub phase_trace: bool,
    /// Length of the high-rate pattern excerpt.
    pub pattern_window_s: f64,
    /// Points in the decimated full-run pattern.
    pub pattern_long_points: usize,
    /// Log-spaced PSD bins per decade in psd.csv.
    pub psd_bins_per_decade: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            phase_trace: false,
            pattern_window_s: 2e-3,
            pattern_long_points: 20_000,
            psd_bins_per_decade: 40,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let span = e
                .span()
                .map(|r| format!(" (bytes {}..{})", r.start, r.end))
                .unwrap_or_default();
            Error::config("scenario", format!("{}{span}", e.message()))
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(path.display().to_string(), format!("cannot read scenario: {e}"))
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { path: p, message } => Error::config(p, format!("{message} in {}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fs = self.sample_rate_hz;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::config("sample_rate_hz", "must be > 0"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::config("duration_s", "must be > 0"));
        }
        if self.duration_s * fs < 64.0 {
            return Err(Error::config("duration_s", "run must span at least 64 samples"));
        }
        self.topology.validate()?;
        self.topology
            .wavelengths
            .validate()
            .map_err(|e| Error::config("topology.wavelengths", e.to_string()))?;
        let noise_checks: [(&str, &NoiseSpec); 3] = [
            ("fiber.shape", &self.fiber.shape),
            ("uncommon_path.alice", &self.uncommon_path.alice),
            ("uncommon_path.bob", &self.uncommon_path.bob),
        ];
        for (path, spec) in noise_checks {
            spec.validate_for_rate(fs)
                .map_err(|e| Error::config(path, e.to_string()))?;
        }
        for (arm, role, span) in self.topology.spans() {
            span.noise.validate_for_rate(fs).map_err(|e| {
                Error::config(
                    format!("topology.{}.noise", crate::link::span_label(arm, role)),
                    e.to_string(),
                )
            })?;
        }
        if let Some(t) = self.fiber.drift_target_rad_per_ms {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::config("fiber.drift_target_rad_per_ms", "must be > 0"));
            }
            if self.fiber.shape.is_silent() {
                return Err(Error::config(
                    "fiber.shape",
                    "a drift target needs a non-zero noise shape",
                ));
            }
        }
        for (path, v) in [
            ("lasers.reference_linewidth_hz", self.lasers.reference_linewidth_hz),
            ("lasers.qkd_linewidth_hz", self.lasers.qkd_linewidth_hz),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(path, "must be > 0"));
                }
            }
        }
        if let Some(l) = &self.loops.fiber {
            l.to_config(fs)
                .validate()
                .map_err(|e| Error::config("loops.fiber", e.to_string()))?;
        }
        if let Some(l) = &self.loops.qkd_lock {
            if !(l.bandwidth_hz.is_finite() && l.bandwidth_hz > 0.0 && l.bandwidth_hz < fs / 2.0) {
                return Err(Error::config(
                    "loops.qkd_lock.bandwidth_hz",
                    format!("must be in (0, f_s/2 = {} Hz)", fs / 2.0),
                ));
            }
        }
        let pd = self.photodiode.to_config();
        pd.validate()
            .map_err(|e| Error::config("photodiode", e.to_string()))?;
        if pd.sample_rate_hz > fs {
            return Err(Error::config(
                "photodiode.sample_rate_hz",
                "cannot exceed the simulation sample rate",
            ));
        }
        if pd.analog_bandwidth_hz.is_finite() && pd.analog_bandwidth_hz > fs / 2.0 {
            return Err(Error::config(
                "photodiode.analog_bandwidth_hz",
                format!("must not exceed f_s/2 = {} Hz", fs / 2.0),
            ));
        }
        if !self.photodiode.operating_point_rad.is_finite() {
            return Err(Error::config("photodiode.operating_point_rad", "must be finite"));
        }
        let d = &self.detectors;
        d.spd
            .validate()
            .map_err(|e| Error::config("detectors.spd", e.to_string()))?;
        d.background
            .validate()
            .map_err(|e| Error::config("detectors.background", e.to_string()))?;
        if !(d.source_rate_hz.is_finite() && d.source_rate_hz >= 0.0) {
            return Err(Error::config("detectors.source_rate_hz", "must be >= 0"));
        }
        if !(d.attenuation_db.is_finite() && d.attenuation_db >= 0.0) {
            return Err(Error::config("detectors.attenuation_db", "must be >= 0"));
        }
        let n = (self.duration_s * fs).round() as usize;
        if d.flux_decimation == 0 || d.flux_decimation > n {
            return Err(Error::config(
                "detectors.flux_decimation",
                "must be in 1..=number of samples",
            ));
        }
        let a = &self.analysis;
        if let Some(grid) = &a.ta_grid_s {
            if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config("analysis.ta_grid_s", "must be strictly increasing and non-empty"));
            }
            if let Some(t) = grid.iter().find(|&&t| t * pd.sample_rate_hz < 1.5 || t > self.duration_s) {
                return Err(Error::config(
                    "analysis.ta_grid_s",
                    format!("{t} s is outside [2 samples, duration]"),
                ));
            }
        }
        if !(a.in_band_hz.is_finite() && a.in_band_hz > 0.0) {
            return Err(Error::config("analysis.in_band_hz", "must be > 0"));
        }
        if a.band_edges_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("analysis.band_edges_hz", "must be strictly increasing"));
        }
        let o = &self.output;
        if !(o.pattern_window_s > 0.0) {
            return Err(Error::config("output.pattern_window_s", "must be > 0"));
        }
        if o.pattern_long_points < 2 {
            return Err(Error::config("output.pattern_long_points", "must be >= 2"));
        }
        if o.psd_bins_per_decade == 0 {
            return Err(Error::config("output.psd_bins_per_decade", "must be > 0"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of everything except the output
    /// selections. Formatting and key order in the file do not matter.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("scenario serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn ta_grid(&self) -> Vec<f64> {
        match &self.analysis.ta_grid_s {
            Some(g) => g.clone(),
            None => default_ta_grid(self.photodiode.sample_rate_hz, self.duration_s),
        }
    }

    fn noise_inputs(&self, fiber: NoiseSpec) -> Result<NoiseInputs> {
        let laser = |lw: Option<f64>| lw.map(laser_spec).transpose().map(Option::unwrap_or_default);
        let qkd = laser(self.lasers.qkd_linewidth_hz)?;
        Ok(NoiseInputs {
            fiber_differential: fiber,
            reference_laser: laser(self.lasers.reference_linewidth_hz)?,
            qkd_lasers: ArmPair {
                alice: qkd.clone(),
                bob: qkd,
            },
            uncommon_path: ArmPair {
                alice: self.uncommon_path.alice.clone(),
                bob: self.uncommon_path.bob.clone(),
            },
        })
    }

    fn loop_configs(&self) -> LoopConfigs {
        LoopConfigs {
            fiber: self
                .loops
                .fiber
                .as_ref()
                .filter(|l| l.enabled)
                .map(|l| l.to_config(self.sample_rate_hz)),
            qkd_lock: self
                .loops
                .qkd_lock
                .as_ref()
                .filter(|l| l.enabled)
                .map(|l| LockConfig {
                    bandwidth_hz: l.bandwidth_hz,
                }),
        }
    }

    /// Fiber noise after scaling the shape to the drift target.
    pub fn calibrated_fiber(&self) -> Result<(NoiseSpec, Option<f64>)> {
        match self.fiber.drift_target_rad_per_ms {
            Some(target) => {
                let (spec, factor) =
                    calibrate_fiber_spec_with(target, &self.fiber.shape, &DriftCalibration::default())?;
                Ok((spec, Some(factor)))
            }
            None => Ok((self.fiber.shape.clone(), None)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeySigma {
    pub t_a: f64,
    pub sigma: f64,
    pub subsets: usize,
    pub low_confidence: bool,
    pub qber_small_phase: f64,
    pub qber_gaussian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPower {
    pub f_lo: f64,
    pub f_hi: f64,
    pub power_rad2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub d0_counts: usize,
    pub d1_counts: usize,
    pub d0_rate_hz: f64,
    pub d1_rate_hz: f64,
    pub qber: Option<QberEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSummary {
    pub fiber_loop: bool,
    pub qkd_lock: bool,
    /// Error RMS over open-loop RMS of the sensing signal.
    pub error_rms_ratio: Option<f64>,
    /// In-band phase power, open loop over closed loop, in dB.
    pub in_band_suppression_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub samples: usize,
    pub fiber_scale_factor: Option<f64>,
    pub key_sigma: Vec<KeySigma>,
    pub crossings: Vec<ThresholdCrossing>,
    /// Sample-set QBER of the retrieved phase about the operating point.
    pub qber_whole_run: QberEstimate,
    pub counts: CountSummary,
    pub loops: LoopSummary,
    /// Phase power of the output below `in_band_hz`.
    pub in_band_hz: f64,
    pub in_band_power_rad2: f64,
    pub band_powers: Vec<BandPower>,
    pub sigma_curve: SigmaCurve,
    pub files: Vec<ManifestEntry>,
}

fn fmt(x: f64) -> String {
    format!("{x:.9e}")
}

struct OutDir {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl OutDir {
    fn new(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root)?;
        Ok(OutDir {
            root,
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.root.join(name);
        {
            let mut w = BufWriter::new(File::create(&path)?);
            f(&mut w)?;
            w.flush()?;
        }
        let bytes = std::fs::read(&path)?;
        self.files.push(ManifestEntry {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }
}

fn header_lines(s: &Scenario, hash: &str, fs: f64) -> Vec<String> {
    vec![
        format!("scenario {}", s.name),
        format!("scenario_hash {hash}"),
        format!("seed {}", s.seed),
        format!("sample_rate_hz {}", fmt(fs)),
    ]
}

fn write_header(w: &mut dyn Write, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

fn write_pattern(w: &mut dyn Write, header: &[String], pattern: &InterferencePattern, count: usize, step: usize) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "time_s,intensity")?;
    for j in 0..count {
        let lo = j * step;
        let hi = (lo + step).min(pattern.len());
        let mean = pattern.samples[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        let t = pattern.time(lo) + (hi - lo - 1) as f64 / (2.0 * pattern.sample_rate);
        writeln!(w, "{},{}", fmt(t), fmt(mean))?;
    }
    Ok(())
}

/// Averages the PSD into log-spaced bins for export.
fn log_binned(psd: &Psd, per_decade: usize) -> Vec<(f64, f64, usize)> {
    let mut out = Vec::new();
    let f0 = psd.frequencies[0];
    let step = 1.0 / per_decade as f64;
    let mut i = 0;
    let n = psd.frequencies.len();
    let mut edge = f0.log10();
    while i < n {
        edge += step;
        let hi = 10f64.powf(edge);
        let start = i;
        while i < n && psd.frequencies[i] < hi {
            i += 1;
        }
        if i > start {
            let k = i - start;
            let f = psd.frequencies[start..i].iter().sum::<f64>() / k as f64;
            let s = psd.density[start..i].iter().sum::<f64>() / k as f64;
            out.push((f, s, k));
        }
    }
    out
}

/// Resolves the output directory: `--out`, then the environment, then
/// `out/<scenario name>`.
pub fn resolve_out_dir(cli: Option<PathBuf>, scenario: &Scenario) -> PathBuf {
    cli.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name))
}

pub fn run_scenario(path: &Path, overrides: &Overrides) -> Result<RunReport> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = overrides.seed {
        scenario.seed = seed;
    }
    if let Some(d) = overrides.duration_s {
        scenario.duration_s = d;
    }
    scenario.validate()?;
    let out = resolve_out_dir(overrides.out_dir.clone(), &scenario);
    run(&scenario, &out)
}

/// Runs a parsed scenario and writes its outputs under `out_dir`.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunReport> {
    scenario.validate()?;
    let hash = scenario.hash();
    let fs = scenario.sample_rate_hz;
    let seed = scenario.seed;
    let (fiber, factor) = scenario.calibrated_fiber()?;
    if let Some(f) = factor {
        log::info!("fiber noise scaled by {f:.4e} to reach the drift target");
    }
    let loops = scenario.loop_configs();
    log::info!("running {} s at {fs} Hz, seed {seed}", scenario.duration_s);
    let sim = closed_loop_run(
        &scenario.noise_inputs(fiber)?,
        &scenario.topology,
        &loops,
        &RunSettings {
            sample_rate_hz: fs,
            duration_s: scenario.duration_s,
            seed,
            wavelength_mismatch: scenario.wavelength_mismatch,
        },
    )?;
    let n = sim.stabilized_phase.len();
    let error_rms_ratio = sim.rms_ratio;
    drop(sim.error_signal);
    drop(sim.correction);
    let output = sim.stabilized_phase;
    let open = sim.open_loop_phase;
    log::info!("closed-loop run done, writing outputs to {}", out_dir.display());

    let mut dir = OutDir::new(out_dir.to_path_buf())?;
    let header = header_lines(scenario, &hash, fs);

    let psd_out = welch_psd_default(&output)?;
    let in_band_hz = scenario.analysis.in_band_hz;
    let in_band_power = psd_out.band_power(0.0, in_band_hz);
    let in_band_suppression_db = if loops.fiber.is_some() {
        let psd_open = welch_psd_default(&open)?;
        let p_open = psd_open.band_power(0.0, in_band_hz);
        let db = (in_band_power > 0.0 && p_open > 0.0).then(|| 10.0 * (p_open / in_band_power).log10());
        let bins_open = log_binned(&psd_open, scenario.output.psd_bins_per_decade);
        let bins_out = log_binned(&psd_out, scenario.output.psd_bins_per_decade);
        dir.write("psd.csv", |w| {
            write_header(w, &header)?;
            writeln!(w, "# welch segment {} segments {}", psd_out.segment_len, psd_out.segments)?;
            writeln!(w, "frequency_hz,psd_rad2_per_hz,psd_open_loop_rad2_per_hz,bins")?;
            for ((f, s, k), (_, so, _)) in bins_out.iter().zip(&bins_open) {
                writeln!(w, "{},{},{},{k}", fmt(*f), fmt(*s), fmt(*so))?;
            }
            Ok(())
        })?;
        db
    } else {
        let bins_out = log_binned(&psd_out, scenario.output.psd_bins_per_decade);
        dir.write("psd.csv", |w| {
            write_header(w, &header)?;
            writeln!(w, "# welch segment {} segments {}", psd_out.segment_len, psd_out.segments)?;
            writeln!(w, "frequency_hz,psd_rad2_per_hz,bins")?;
            for (f, s, k) in &bins_out {
                writeln!(w, "{},{},{k}", fmt(*f), fmt(*s))?;
            }
            Ok(())
        })?;
        None
    };
    drop(open);
    let edges = &scenario.analysis.band_edges_hz;
    let band_powers = edges
        .windows(2)
        .map(|w| BandPower {
            f_lo: w[0],
            f_hi: w[1],
            power_rad2: psd_out.band_power(w[0], w[1]),
        })
        .collect();
    drop(psd_out);

    // Photon counting at the dark-port operating point: D0 bright.
    let counts = {
        let det = &scenario.detectors;
        let incident = crate::interference::attenuate(det.source_rate_hz, det.attenuation_db)?;
        let pattern = intensity(&output, 0.0);
        let (f0, f1) = fluxes_from_pattern(&pattern, incident, det.flux_decimation)?;
        drop(pattern);
        let d0 = spd_detect(&f0, &det.spd, &det.background, Detector::D0, derive_seed(seed, "spd.d0"))?;
        let d1 = spd_detect(&f1, &det.spd, &det.background, Detector::D1, derive_seed(seed, "spd.d1"))?;
        dir.write("counts_d0.csv", |w| d0.write_csv(w, &header))?;
        dir.write("counts_d1.csv", |w| d1.write_csv(w, &header))?;
        let qber = match qber_from_counts(&d0, &d1, Detector::D0) {
            Ok(q) => Some(q),
            Err(Error::InsufficientData(_)) => None,
            Err(e) => return Err(e),
        };
        CountSummary {
            d0_counts: d0.len(),
            d1_counts: d1.len(),
            d0_rate_hz: d0.rate_hz(),
            d1_rate_hz: d1.rate_hz(),
            qber,
        }
    };

    // Classical interference measurement and phase retrieval.
    let op = scenario.photodiode.operating_point_rad;
    let pattern = intensity(&output, op);
    drop(output);
    let acquired = photodiode_acquire(
        &pattern,
        &scenario.photodiode.to_config(),
        derive_seed(seed, "photodiode"),
    )?;
    drop(pattern);
    let pd_fs = acquired.sample_rate;
    let pd_header = header_lines(scenario, &hash, pd_fs);
    let window = ((scenario.output.pattern_window_s * pd_fs).round() as usize).clamp(1, acquired.len());
    dir.write("pattern_window.csv", |w| write_pattern(w, &pd_header, &acquired, window, 1))?;
    let points = scenario.output.pattern_long_points.min(acquired.len());
    let step = acquired.len() / points;
    dir.write("pattern_long.csv", |w| write_pattern(w, &pd_header, &acquired, points, step))?;
    let retrieved = retrieve_phase(&acquired)?;
    drop(acquired);

    let curve = sigma_curve(&retrieved, &scenario.ta_grid())?;
    dir.write("sigma_curve.csv", |w| {
        write_header(w, &pd_header)?;
        writeln!(w, "t_a_s,sigma_rad,subsets,subset_len,low_confidence")?;
        for p in &curve.points {
            writeln!(w, "{},{},{},{},{}", fmt(p.t_a), fmt(p.sigma), p.subsets, p.subset_len, p.low_confidence)?;
        }
        Ok(())
    })?;
    let key_sigma = scenario
        .analysis
        .key_ta_s
        .iter()
        .filter(|&&t| t * pd_fs >= 1.5 && t <= scenario.duration_s)
        .map(|&t| {
            let p = crate::analysis::sigma_time_domain(&retrieved, t)?;
            Ok(KeySigma {
                t_a: t,
                sigma: p.sigma,
                subsets: p.subsets,
                low_confidence: p.low_confidence,
                qber_small_phase: qber_small_phase(p.sigma)?.e,
                qber_gaussian: qber_integral(PhaseDistribution::Gaussian { mean: 0.0, sigma: p.sigma })?.e,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // Deviation about the operating point, folded back to the (0, π) branch it was measured on.
    let centre = crate::interference::wrap(op).abs();
    let deviations: Vec<f64> = retrieved.samples.iter().map(|&p| p - centre).collect();
    let qber_whole_run = qber_integral(PhaseDistribution::Samples(&deviations))?;
    drop(deviations);

    if scenario.output.phase_trace {
        dir.write("phase.csv", |w| write_trace(w, &pd_header, &retrieved))?;
    }

    let mut report = RunReport {
        scenario: scenario.name.clone(),
        scenario_hash: hash,
        seed,
        sample_rate_hz: fs,
        duration_s: scenario.duration_s,
        samples: n,
        fiber_scale_factor: factor,
        key_sigma,
        crossings: curve.crossings.clone(),
        qber_whole_run,
        counts,
        loops: LoopSummary {
            fiber_loop: loops.fiber.is_some(),
            qkd_lock: loops.qkd_lock.is_some(),
            error_rms_ratio,
            in_band_suppression_db,
        },
        in_band_hz,
        in_band_power_rad2: in_band_power,
        band_powers,
        sigma_curve: curve,
        files: Vec::new(),
    };
    report.files = dir.files.clone();
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(dir.root.join("report.json"), json + "\n")?;
    Ok(report)
}

/// Writes `time_s,phase_rad` rows with `#` metadata lines.
pub fn write_trace(w: &mut dyn Write, header: &[String], trace: &PhaseTrace) -> Result<()> {
    write_header(w, header)?;
    writeln!(w, "time_s,phase_rad")?;
    for (i, x) in trace.samples.iter().enumerate() {
        writeln!(w, "{},{}", fmt(trace.time(i)), fmt(*x))?;
    }
    Ok(())
}

/// Reads a `time_s,phase_rad` CSV; `#` lines are skipped and the sample rate
/// is taken from the first two timestamps.
pub fn read_trace(path: &Path) -> Result<PhaseTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut times = Vec::new();
    let mut phase = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::invalid(format!("row {}: column {j} is not a number", i + 1)))
        };
        times.push(parse(0)?);
        phase.push(parse(1)?);
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData("trace file holds fewer than 2 samples".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::invalid("timestamps must increase"));
    }
    Ok(PhaseTrace::new(phase, 1.0 / dt)?
        .with_t0(times[0])
        .with_provenance(path.display().to_string()))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `a / b`
    pub ratio: f64,
    /// Ratio in dB: `20·log10` for deviations, `10·log10` for powers and rates.
    pub db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub rows: Vec<ComparisonRow>,
}

/// Per-metric ratios of two runs on the same frame-duration grid.
pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    let ta = a.sigma_curve.t_a();
    let tb = b.sigma_curve.t_a();
    if ta.len() != tb.len() || ta.iter().zip(&tb).any(|(x, y)| (x - y).abs() > 1e-12 * x.abs()) {
        return Err(Error::Mismatch("runs use different frame-duration grids".into()));
    }
    let mut rows = Vec::new();
    let mut push = |metric: String, x: f64, y: f64, amplitude: bool| {
        let ratio = x / y;
        let k = if amplitude { 20.0 } else { 10.0 };
        rows.push(ComparisonRow {
            metric,
            a: x,
            b: y,
            ratio,
            db: k * ratio.log10(),
        });
    };
    push("in_band_power_rad2".into(), a.in_band_power_rad2, b.in_band_power_rad2, false);
    for (pa, pb) in a.band_powers.iter().zip(&b.band_powers) {
        if pa.f_lo == pb.f_lo && pa.f_hi == pb.f_hi {
            push(format!("band_power[{}-{} Hz]", pa.f_lo, pa.f_hi), pa.power_rad2, pb.power_rad2, false);
        }
    }
    for (pa, pb) in a.sigma_curve.points.iter().zip(&b.sigma_curve.points) {
        push(format!("sigma[t_a={:e} s]", pa.t_a), pa.sigma, pb.sigma, true);
    }
    push("qber_whole_run".into(), a.qber_whole_run.e, b.qber_whole_run.e, false);
    push("d0_rate_hz".into(), a.counts.d0_rate_hz, b.counts.d0_rate_hz, false);
    push("d1_rate_hz".into(), a.counts.d1_rate_hz, b.counts.d1_rate_hz, false);
    Ok(Comparison {
        a: a.scenario.clone(),
        b: b.scenario.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub loss: LossBudget,
    pub timing: TimingSkew,
    pub self_delay_s: f64,
    pub mismatch_ratio: f64,
    /// Background budget per detector, keyed by integration window.
    pub background: BTreeMap<String, BackgroundBudget>,
}

/// Loss, timing and background tables of a scenario, with the background
/// evaluated over the run and over 24 h.
pub fn budget(scenario: &Scenario) -> Result<Budget> {
    let t = &scenario.topology;
    let det = &scenario.detectors;
    let mut background = BTreeMap::new();
    background.insert(
        "run".to_string(),
        background_budget(&det.background, &det.spd, scenario.duration_s)?,
    );
    background.insert(
        "24h".to_string(),
        background_budget(&det.background, &det.spd, 86_400.0)?,
    );
    Ok(Budget {
        loss: loss_budget(t),
        timing: timing_skew(t),
        self_delay_s: t.self_delay_s(),
        mismatch_ratio: t.wavelengths.mismatch_ratio(),
        background,
    })
}
