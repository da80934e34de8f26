use std::f64::consts::{PI, TAU};

use phaselink::analysis::{
    poisson_goodness_of_fit, qber_integral, qber_small_phase, sigma_curve, sigma_from_psd,
    sigma_time_domain, welch_psd, welch_psd_default, PhaseDistribution, Psd,
};
use phaselink::interference::{intensity, retrieve_phase, wrap};
use phaselink::noise::{gen_power_law, NoiseSpec, PhaseTrace};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_trace_zero_psd() {
    let p = welch_psd(&PhaseTrace::zeros(4096, 1e3).unwrap(), 512, 0.5).unwrap();
    assert!(p.density.iter().all(|&s| s == 0.0));
    assert_eq!(sigma_from_psd(&p, 0.1).unwrap(), 0.0);
}

#[test]
fn unit_sine_carries_half_power() {
    let fs = 1e4;
    let f0 = 1234.5;
    let t = PhaseTrace::new((0..1 << 16).map(|i| (TAU * f0 * i as f64 / fs).sin()).collect(), fs).unwrap();
    let p = welch_psd(&t, 4096, 0.5).unwrap();
    let df = p.resolution();
    let power = p.band_power(f0 - 4.0 * df, f0 + 4.0 * df);
    assert!((power / 0.5 - 1.0).abs() < 0.05, "power {power}");
}

#[test]
fn rectangle_integral() {
    let psd = Psd {
        frequencies: (1..=500).map(|k| k as f64).collect(),
        density: vec![0.01; 500],
        sample_rate: 1000.0,
        segment_len: 1000,
        overlap: 0.5,
        segments: 1,
        window: "hann".into(),
    };
    let s = sigma_from_psd(&psd, 0.1).unwrap();
    assert!((s * s - 0.01 * (500.0 - 10.0)).abs() < 1e-9);
    assert!(sigma_from_psd(&psd, 2.0).is_err());
    assert!(sigma_from_psd(&psd, 1e-3).is_err());
}

#[test]
fn parseval_whole_record() {
    let spec = NoiseSpec::from_terms(&[(0, 1e-4), (-1, 1e-3)]).unwrap();
    for seed in 0..5 {
        let t = gen_power_law(&spec, 1e4, 1 << 16, seed).unwrap();
        let p = welch_psd(&t, t.len(), 0.5).unwrap();
        let s = sigma_from_psd(&p, t.duration()).unwrap();
        let g = t.variance().sqrt();
        assert!((s / g - 1.0).abs() < 0.1, "spectral {s} vs global {g}");
    }
}

#[test]
fn alternating_sequence_deviation() {
    let a = 0.3;
    let t = PhaseTrace::new((0..10_000).map(|i| if i % 2 == 0 { a } else { -a }).collect(), 1e3).unwrap();
    for n in [2usize, 4, 10, 100] {
        let p = sigma_time_domain(&t, n as f64 / 1e3).unwrap();
        let expected = a * (n as f64 / (n as f64 - 1.0)).sqrt();
        assert!((p.sigma - expected).abs() < 1e-12, "n = {n}");
    }
}

#[test]
fn white_noise_estimators_agree() {
    let t = gen_power_law(&NoiseSpec::white_phase(2e-6), 1e5, 1 << 18, 3).unwrap();
    let psd = welch_psd_default(&t).unwrap();
    for t_a in [2e-4, 1e-3, 1e-2, 0.1] {
        let a = sigma_from_psd(&psd, t_a).unwrap();
        let b = sigma_time_domain(&t, t_a).unwrap().sigma;
        assert!((a / b - 1.0).abs() < 0.1, "t_a {t_a}: {a} vs {b}");
    }
}

#[test]
fn qber_gaussian_examples() {
    let q = qber_integral(PhaseDistribution::Gaussian { mean: 0.0, sigma: 0.13 }).unwrap();
    assert!((q.e - 0.004207).abs() < 5e-7);
    let s = qber_small_phase(0.13).unwrap();
    assert!((s.e - 0.004225).abs() < 1e-12);
    assert!((s.e - q.e) / q.e < 0.01);
    assert!((qber_small_phase(0.2).unwrap().e - 0.01).abs() < 1e-15);
    assert_eq!(qber_integral(PhaseDistribution::Samples(&[0.0; 16])).unwrap().e, 0.0);
    assert!(qber_integral(PhaseDistribution::Samples(&[])).is_err());
}

#[test]
fn folded_uniform_plateau() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let phase: Vec<f64> = (0..200_000).map(|_| rng.random::<f64>() * TAU).collect();
    let t = PhaseTrace::new(phase, 1e3).unwrap();
    let r = retrieve_phase(&intensity(&t, 0.0)).unwrap();
    let sd = r.variance().sqrt();
    assert!((sd - PI / 12f64.sqrt()).abs() < 0.005, "folded std {sd}");
}

#[test]
fn poisson_counts_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let counts: Vec<u64> = (0..1000)
        .map(|_| {
            // Knuth's product method, independent of the code under test.
            let l = (-5.09f64).exp();
            let (mut k, mut p) = (0u64, 1.0);
            loop {
                p *= rng.random::<f64>();
                if p <= l {
                    return k;
                }
                k += 1;
            }
        })
        .collect();
    let fit = poisson_goodness_of_fit(&counts).unwrap();
    assert!(fit.p_value > 0.01, "{fit:?}");
    let doubled: Vec<u64> = counts.iter().map(|c| c * 2).collect();
    assert!(poisson_goodness_of_fit(&doubled).unwrap().p_value < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sigma_curve_time_reversal(len in 64usize..3000, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|i| rng.random::<f64>() + 0.01 * i as f64).collect();
        let t = PhaseTrace::new(x, 100.0).unwrap();
        let grid: Vec<f64> = [0.02, 0.05, 0.07, 0.13, 0.31].iter().copied().filter(|&g| g * 100.0 <= len as f64).collect();
        let a = sigma_curve(&t, &grid).unwrap();
        let b = sigma_curve(&t.reversed(), &grid).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!((p.sigma - q.sigma).abs() <= 1e-12 * p.sigma.max(1e-300));
        }
    }

    #[test]
    fn small_phase_bounds_gaussian_integral(sigma in 0.0..1.0f64) {
        let exact = (1.0 - (-sigma * sigma / 2.0).exp()) / 2.0;
        let q = qber_integral(PhaseDistribution::Gaussian { mean: 0.0, sigma }).unwrap();
        prop_assert!((q.e - exact).abs() < 1e-4);
        let s = qber_small_phase(sigma).unwrap();
        prop_assert!(s.e >= q.e - 1e-15);
        if sigma > 1e-3 {
            let gap = (s.e - q.e) / q.e;
            let closed_form_gap = sigma * sigma / 4.0 / exact - 1.0;
            prop_assert!((gap - closed_form_gap).abs() < 1e-3);
            if sigma <= 0.19 {
                prop_assert!(gap < 0.01);
            }
        }
    }

    #[test]
    fn retrieval_is_the_folding_map(phi in -PI..PI) {
        let t = PhaseTrace::new(vec![phi, phi], 1.0).unwrap();
        let r = retrieve_phase(&intensity(&t, 0.0)).unwrap();
        prop_assert!((r.samples[0] - wrap(phi).abs()).abs() < 1e-7);
    }

    #[test]
    fn intensity_is_periodic_and_bounded(phi in -50.0..50.0f64, k in -5i32..5) {
        let t = PhaseTrace::new(vec![phi, phi + TAU * k as f64], 1.0).unwrap();
        let p = intensity(&t, 0.3);
        prop_assert!(p.samples.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.samples[0] - p.samples[1]).abs() < 1e-9);
    }

    #[test]
    fn quadrature_slope(phi in -1e-3..1e-3f64) {
        let h = 1e-7;
        let t = PhaseTrace::new(vec![phi - h, phi + h], 1.0).unwrap();
        let p = intensity(&t, PI / 2.0);
        let slope = (p.samples[1] - p.samples[0]) / (2.0 * h);
        prop_assert!((slope + 0.5).abs() < 1e-6);
    }
}
