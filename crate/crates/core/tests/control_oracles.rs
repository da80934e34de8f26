use std::f64::consts::TAU;

use phaselink::analysis::welch_psd;
use phaselink::control::{
    closed_loop_run, qkd_laser_lock, run_loop, LockConfig, LoopConfig, LoopConfigs, LoopKind,
    NoiseInputs, RunSettings,
};
use phaselink::link::{ArmPair, LinkTopology};
use phaselink::noise::{derive_seed, gen_power_law, gen_trace, laser_spec, NoiseSpec, PhaseTrace};
use phaselink::Error;
use proptest::prelude::*;

/// Amplitude of the `f0` component by projection over whole periods.
fn tone_amplitude(x: &[f64], fs: f64, f0: f64) -> f64 {
    let period = fs / f0;
    let periods = (x.len() as f64 / period).floor();
    let n = (periods * period).round() as usize;
    let (mut c, mut s) = (0.0, 0.0);
    for (i, v) in x[..n].iter().enumerate() {
        let ph = TAU * f0 * i as f64 / fs;
        c += v * ph.cos();
        s += v * ph.sin();
    }
    2.0 * (c * c + s * s).sqrt() / n as f64
}

fn tone(fs: f64, n: usize, f0: f64) -> PhaseTrace {
    PhaseTrace::new((0..n).map(|i| (TAU * f0 * i as f64 / fs).sin()).collect(), fs).unwrap()
}

#[test]
fn tone_suppression_matches_sensitivity() {
    let fs = 1e6;
    let cfg = LoopConfig::new(LoopKind::Pi, 1e4, fs);
    for f0 in [200.0, 1e3, 5e3, 2e4, 1e5] {
        let run = run_loop(&tone(fs, 400_000, f0), &cfg).unwrap();
        let settled = &run.error.samples[100_000..];
        let measured = tone_amplitude(settled, fs, f0);
        let expected = cfg.sensitivity(f0).norm();
        let db = 20.0 * (measured / expected).log10();
        assert!(db.abs() < 3.0, "f0 {f0}: measured {measured:e}, expected {expected:e}");
    }
}

#[test]
fn first_order_loop_suppresses_white_noise_as_f_over_bw() {
    let fs = 1e6;
    let bw = 2e4;
    let mut cfg = LoopConfig::new(LoopKind::Pi, bw, fs);
    cfg.integral_corner = 0.0;
    let x = gen_power_law(&NoiseSpec::white_phase(1e-6), fs, 1 << 20, 11).unwrap();
    let run = run_loop(&x, &cfg).unwrap();
    let p_in = welch_psd(&x, 1 << 14, 0.5).unwrap();
    let p_err = welch_psd(&run.error, 1 << 14, 0.5).unwrap();
    for (lo, hi) in [(bw / 100.0, bw / 50.0), (bw / 50.0, bw / 20.0), (bw / 20.0, bw / 10.0)] {
        let ratio = p_err.band_power(lo, hi) / p_in.band_power(lo, hi);
        let f = (lo * hi).sqrt();
        let expected = (f / bw).powi(2);
        let db = 10.0 * (ratio / expected).log10();
        assert!(db.abs() < 3.0, "band {lo}-{hi}: {ratio:e} vs {expected:e}");
    }
}

#[test]
fn high_gain_zero_latency_limit() {
    let fs = 1e6;
    let x = tone(fs, 200_000, 1.0);
    let mut cfg = LoopConfig::new(LoopKind::Pi, 1e4, fs);
    cfg.latency_s = 0.0;
    let base = run_loop(&x, &cfg).unwrap().rms_ratio.unwrap();
    cfg.gain_scale = 1000.0;
    let high = run_loop(&x, &cfg).unwrap().rms_ratio.unwrap();
    assert!(high <= 1e-6, "high-gain ratio {high:e}");
    assert!(high < base);
}

#[test]
fn latency_instability_is_reported() {
    let fs = 1e6;
    let bw = 1e4;
    let x = gen_power_law(&NoiseSpec::white_phase(1e-8), fs, 1 << 17, 2).unwrap();
    let mut cfg = LoopConfig::new(LoopKind::Pi, bw, fs);
    cfg.latency_s = 0.1 / bw;
    assert!(run_loop(&x, &cfg).is_ok());
    cfg.latency_s = 0.3 / bw;
    assert!(matches!(run_loop(&x, &cfg), Err(Error::Unstable(_))));
}

#[test]
fn range_limited_oscillation_is_reported() {
    let fs = 1e6;
    let bw = 1e4;
    let x = gen_power_law(&NoiseSpec::white_phase(1e-8), fs, 1 << 17, 2).unwrap();
    let mut cfg = LoopConfig::new(LoopKind::Pi, bw, fs);
    cfg.latency_s = 0.4 / bw;
    cfg.range_limit_rad = Some(1.0);
    assert!(matches!(run_loop(&x, &cfg), Err(Error::Unstable(_))));
}

#[test]
fn slew_limit_bounds_correction_steps() {
    let fs = 1e5;
    let mut x = vec![0.0; 5000];
    x[1000..].iter_mut().for_each(|v| *v = 5.0);
    let x = PhaseTrace::new(x, fs).unwrap();
    let mut cfg = LoopConfig::new(LoopKind::Pi, 1e3, fs);
    cfg.slew_limit_rad_per_s = Some(1e3);
    let run = run_loop(&x, &cfg).unwrap();
    let max_step = run
        .correction
        .samples
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    assert!(max_step <= 1e3 / fs + 1e-12);
}

#[test]
fn pid_loop_suppresses_tone() {
    let fs = 1e6;
    let cfg = LoopConfig::new(LoopKind::Pid, 1e4, fs);
    let run = run_loop(&tone(fs, 300_000, 500.0), &cfg).unwrap();
    let a = tone_amplitude(&run.error.samples[100_000..], fs, 500.0);
    let expected = cfg.sensitivity(500.0).norm();
    assert!((20.0 * (a / expected).log10()).abs() < 3.0);
}

#[test]
fn lock_is_a_first_order_high_pass() {
    let fs = 5e6;
    let bw = 1e5;
    let x = gen_power_law(&NoiseSpec::white_phase(1e-9), fs, 1 << 20, 5).unwrap();
    let y = qkd_laser_lock(&x, &LockConfig { bandwidth_hz: bw }).unwrap();
    let p_in = welch_psd(&x, 1 << 14, 0.5).unwrap();
    let p_out = welch_psd(&y, 1 << 14, 0.5).unwrap();
    for (lo, hi) in [(2e3, 5e3), (1e4, 2e4), (8e4, 1.2e5), (5e5, 1e6), (1.5e6, 2.5e6)] {
        let ratio = p_out.band_power(lo, hi) / p_in.band_power(lo, hi);
        let f: f64 = (lo * hi).sqrt();
        let expected = f * f / (f * f + bw * bw);
        assert!((10.0 * (ratio / expected).log10()).abs() < 3.0, "band {lo}-{hi}");
    }
}

#[test]
fn wide_lock_removes_slow_noise() {
    let fs = 5e6;
    let x = gen_power_law(&laser_spec(1e3).unwrap(), fs, 1 << 20, 8).unwrap();
    let y = qkd_laser_lock(&x, &LockConfig { bandwidth_hz: fs / 10.0 }).unwrap();
    assert!(y.variance() < 0.05 * x.variance());
}

fn small_topology() -> LinkTopology {
    LinkTopology::torino_default()
}

fn settings(seed: u64) -> RunSettings {
    RunSettings {
        sample_rate_hz: 1e6,
        duration_s: 0.2,
        seed,
        wavelength_mismatch: true,
    }
}

#[test]
fn silent_link_stays_silent() {
    let loops = LoopConfigs {
        fiber: Some(LoopConfig::new(LoopKind::Pi, 5e4, 1e6)),
        qkd_lock: Some(LockConfig { bandwidth_hz: 1e5 }),
    };
    let run = closed_loop_run(&NoiseInputs::default(), &small_topology(), &loops, &settings(1)).unwrap();
    assert!(run.stabilized_phase.samples.iter().all(|&x| x == 0.0));
    assert!(run.correction.samples.iter().all(|&x| x == 0.0));
}

#[test]
fn disabled_loops_pass_noise_through() {
    let spec = NoiseSpec::from_terms(&[(0, 1e-6), (-2, 1e-2)]).unwrap();
    let noise = NoiseInputs {
        uncommon_path: ArmPair {
            alice: spec.clone(),
            bob: NoiseSpec::default(),
        },
        ..NoiseInputs::default()
    };
    let s = settings(9);
    let run = closed_loop_run(&noise, &small_topology(), &LoopConfigs::default(), &s).unwrap();
    let expected = gen_trace(&spec, 1e6, 200_000, derive_seed(9, "uncommon_path")).unwrap();
    assert_eq!(run.stabilized_phase.samples, expected.samples);
    assert_eq!(run.open_loop_phase.samples, expected.samples);
}

#[test]
fn loop_cancels_fiber_up_to_wavelength_mismatch() {
    let fiber = NoiseSpec::from_terms(&[(-2, 50.0)]).unwrap();
    let noise = NoiseInputs {
        fiber_differential: fiber,
        ..NoiseInputs::default()
    };
    let topo = small_topology();
    let loops = LoopConfigs {
        fiber: Some(LoopConfig::new(LoopKind::Pi, 5e4, 1e6)),
        qkd_lock: None,
    };
    let run = closed_loop_run(&noise, &topo, &loops, &settings(3)).unwrap();
    let open = run.open_loop_phase.variance();
    let closed = run.stabilized_phase.variance();
    assert!(closed < 1e-2 * open, "open {open:e}, closed {closed:e}");
    // Beyond the loop error, what is left is the mismatch share of the fiber phase.
    let k = topo.wavelengths.mismatch_ratio();
    let scale = run.open_loop_phase.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..run.stabilized_phase.len() {
        let left = run.stabilized_phase.samples[i] - run.error_signal.samples[i];
        let share = run.open_loop_phase.samples[i] * k / (1.0 + k);
        assert!((left - share).abs() < 1e-9 * scale);
    }

    let no_mismatch = RunSettings {
        wavelength_mismatch: false,
        ..settings(3)
    };
    let run = closed_loop_run(&noise, &topo, &loops, &no_mismatch).unwrap();
    for (s, e) in run.stabilized_phase.samples.iter().zip(&run.error_signal.samples) {
        assert!((s - e).abs() < 1e-9 * scale);
    }
}

#[test]
fn rejects_too_fast_fiber_loop() {
    let loops = LoopConfigs {
        fiber: Some(LoopConfig::new(LoopKind::Pi, 2e5, 1e6)),
        qkd_lock: None,
    };
    assert!(closed_loop_run(&NoiseInputs::default(), &small_topology(), &loops, &settings(1)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn error_minus_correction_is_the_disturbance(
        seed in 0u64..500,
        bw in 1e2..9e3f64,
        delay in 0usize..6,
        corner in 0.0..0.5f64,
    ) {
        let fs = 1e5;
        let x = gen_power_law(&NoiseSpec::from_terms(&[(0, 1e-6), (-2, 1e-1)]).unwrap(), fs, 1 << 12, seed).unwrap();
        let mut cfg = LoopConfig::new(LoopKind::Pi, bw, fs);
        cfg.latency_s = delay as f64 / fs;
        cfg.integral_corner = corner;
        if let Ok(run) = run_loop(&x, &cfg) {
            for ((e, c), d) in run.error.samples.iter().zip(&run.correction.samples).zip(&x.samples) {
                prop_assert!((e - c - d).abs() <= 1e-9 * (1.0 + d.abs()));
            }
            let again = run_loop(&x, &cfg).unwrap();
            prop_assert_eq!(again.error.samples, run.error.samples);
        }
    }
}
