//! Charlie–Alice–Bob link topology and the phase observables built from it.
//!
//! Fiber phase noise is expressed at the sensing wavelength. Light at another
//! optical frequency `ν` crossing the same fiber picks up that phase scaled by
//! `ν/ν_S`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, PhaseTrace};

/// Vacuum speed of light used for propagation delays (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Group index of standard single-mode fiber.
pub const REFRACTIVE_INDEX: f64 = 1.468;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanRole {
    /// Charlie → terminal, carries reference and sensing light.
    Service,
    /// Terminal → Charlie, carries QKD and sensing light.
    Qkd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpan {
    pub length_km: f64,
    /// Total loss including connectors and DWDM equipment.
    pub loss_db: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl FiberSpan {
    pub fn new(length_km: f64, loss_db: f64) -> Self {
        FiberSpan {
            length_km,
            loss_db,
            noise: NoiseSpec::default(),
        }
    }

    pub fn validate(&self, label: &str) -> Result<()> {
        if !(self.length_km.is_finite() && self.length_km >= 0.0) {
            return Err(Error::config(
                format!("{label}.length_km"),
                format!("{} must be >= 0", self.length_km),
            ));
        }
        if !(self.loss_db.is_finite() && self.loss_db >= 0.0) {
            return Err(Error::config(
                format!("{label}.loss_db"),
                format!("{} must be >= 0", self.loss_db),
            ));
        }
        self.noise
            .validate()
            .map_err(|e| Error::config(format!("{label}.noise"), e.to_string()))
    }

    /// One-way propagation delay `n·L/c`.
    pub fn delay_s(&self, refractive_index: f64) -> f64 {
        propagation_delay(self.length_km, refractive_index)
    }
}

/// `n·L/c` for a length in km.
pub fn propagation_delay(length_km: f64, refractive_index: f64) -> f64 {
    refractive_index * length_km * 1.0e3 / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavelengthPlan {
    pub reference_hz: f64,
    pub sensing_hz: f64,
    pub alice_hz: f64,
    pub bob_hz: f64,
}

impl WavelengthPlan {
    /// QKD lasers phase-locked to the reference.
    pub fn locked(reference_hz: f64, sensing_hz: f64) -> Self {
        WavelengthPlan {
            reference_hz,
            sensing_hz,
            alice_hz: reference_hz,
            bob_hz: reference_hz,
        }
    }

    /// 194.4 THz reference and 194.25 THz sensing channels of the DWDM grid.
    pub fn dwdm_default() -> Self {
        Self::locked(194.4e12, 194.25e12)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("reference_hz", self.reference_hz),
            ("sensing_hz", self.sensing_hz),
            ("alice_hz", self.alice_hz),
            ("bob_hz", self.bob_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("wavelengths.{name}"), "must be > 0"));
            }
        }
        if self.alice_hz != self.reference_hz || self.bob_hz != self.reference_hz {
            return Err(Error::config(
                "wavelengths",
                "QKD lasers must be locked to the reference frequency",
            ));
        }
        if self.sensing_hz == self.reference_hz {
            return Err(Error::config(
                "wavelengths.sensing_hz",
                "sensing channel must differ from the reference channel",
            ));
        }
        Ok(())
    }

    /// `(ν_R − ν_S)/ν_S`: the fraction of fiber phase left on the QKD
    /// wavelength after a correction that nulls the sensing wavelength.
    pub fn mismatch_ratio(&self) -> f64 {
        (self.reference_hz - self.sensing_hz) / self.sensing_hz
    }
}

impl Default for WavelengthPlan {
    fn default() -> Self {
        Self::dwdm_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPair<T> {
    pub alice: T,
    pub bob: T,
}

impl<T> ArmPair<T> {
    pub fn get(&self, arm: Arm) -> &T {
        match arm {
            Arm::Alice => &self.alice,
            Arm::Bob => &self.bob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpans {
    pub service: FiberSpan,
    pub qkd: FiberSpan,
}

impl ArmSpans {
    pub fn get(&self, role: SpanRole) -> &FiberSpan {
        match role {
            SpanRole::Service => &self.service,
            SpanRole::Qkd => &self.qkd,
        }
    }

    pub fn round_trip_km(&self) -> f64 {
        self.service.length_km + self.qkd.length_km
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkTopology {
    pub alice: ArmSpans,
    pub bob: ArmSpans,
    #[serde(default)]
    pub wavelengths: WavelengthPlan,
    #[serde(default = "default_refractive_index")]
    pub refractive_index: f64,
}

fn default_refractive_index() -> f64 {
    REFRACTIVE_INDEX
}

impl LinkTopology {
    /// Torino–Bardonecchia (Alice, 114 km / 35 dB) and Torino–Santhià
    /// (Bob, 92 km / 30 dB); service fibers are the other fiber of each pair.
    pub fn torino_default() -> Self {
        let arm = |km: f64, db: f64| ArmSpans {
            service: FiberSpan::new(km, db),
            qkd: FiberSpan::new(km, db),
        };
        LinkTopology {
            alice: arm(114.0, 35.0),
            bob: arm(92.0, 30.0),
            wavelengths: WavelengthPlan::dwdm_default(),
            refractive_index: REFRACTIVE_INDEX,
        }
    }

    pub fn arm(&self, arm: Arm) -> &ArmSpans {
        match arm {
            Arm::Alice => &self.alice,
            Arm::Bob => &self.bob,
        }
    }

    /// All four spans with stable labels.
    pub fn spans(&self) -> [(Arm, SpanRole, &FiberSpan); 4] {
        [
            (Arm::Alice, SpanRole::Service, &self.alice.service),
            (Arm::Alice, SpanRole::Qkd, &self.alice.qkd),
            (Arm::Bob, SpanRole::Service, &self.bob.service),
            (Arm::Bob, SpanRole::Qkd, &self.bob.qkd),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (arm, role, span) in self.spans() {
            span.validate(&span_label(arm, role))?;
        }
        self.wavelengths.validate()?;
        if !(self.refractive_index.is_finite() && self.refractive_index >= 1.0) {
            return Err(Error::config("topology.refractive_index", "must be >= 1"));
        }
        Ok(())
    }

    /// `|(service + qkd)_alice − (service + qkd)_bob|` in km.
    pub fn differential_path_km(&self) -> f64 {
        (self.alice.round_trip_km() - self.bob.round_trip_km()).abs()
    }

    /// One-way QKD-span length difference in km.
    pub fn arm_unbalance_km(&self) -> f64 {
        (self.alice.qkd.length_km - self.bob.qkd.length_km).abs()
    }

    pub fn total_qkd_km(&self) -> f64 {
        self.alice.qkd.length_km + self.bob.qkd.length_km
    }

    /// Delay difference seen by a laser interfering with itself after
    /// travelling the two round trips.
    pub fn self_delay_s(&self) -> f64 {
        propagation_delay(self.differential_path_km(), self.refractive_index)
    }

    /// Fiber noise of all spans combined into the Alice − Bob differential
    /// (independent spans add in power).
    pub fn differential_noise_spec(&self) -> NoiseSpec {
        self.spans()
            .iter()
            .fold(NoiseSpec::default(), |acc, (_, _, s)| acc.merged(&s.noise))
    }
}

pub fn span_label(arm: Arm, role: SpanRole) -> String {
    let a = match arm {
        Arm::Alice => "alice",
        Arm::Bob => "bob",
    };
    let r = match role {
        SpanRole::Service => "service",
        SpanRole::Qkd => "qkd",
    };
    format!("{a}.{r}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub alice_km: f64,
    pub alice_db: f64,
    pub bob_km: f64,
    pub bob_db: f64,
    pub total_km: f64,
    pub total_db: f64,
    pub alice_db_per_km: Option<f64>,
    pub bob_db_per_km: Option<f64>,
    pub total_db_per_km: Option<f64>,
}

/// Loss of the quantum channel: the two QKD spans between the terminals.
pub fn loss_budget(topology: &LinkTopology) -> LossBudget {
    let per_km = |db: f64, km: f64| (km > 0.0).then(|| db / km);
    let a = &topology.alice.qkd;
    let b = &topology.bob.qkd;
    let total_km = a.length_km + b.length_km;
    let total_db = a.loss_db + b.loss_db;
    LossBudget {
        alice_km: a.length_km,
        alice_db: a.loss_db,
        bob_km: b.length_km,
        bob_db: b.loss_db,
        total_km,
        total_db,
        alice_db_per_km: per_km(a.loss_db, a.length_km),
        bob_db_per_km: per_km(b.loss_db, b.length_km),
        total_db_per_km: per_km(total_db, total_km),
    }
}

/// Per-arm sensing observables and the loop error built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedPhase {
    pub alice: PhaseTrace,
    pub bob: PhaseTrace,
    /// `alice − bob`
    pub error: PhaseTrace,
}

/// Round-trip sensing phase per arm, `φ_service + φ_qkd`, with the actuator
/// correction entering Alice's arm only.
pub fn sensed_phase(
    service: &ArmPair<PhaseTrace>,
    qkd: &ArmPair<PhaseTrace>,
    correction: &PhaseTrace,
) -> Result<SensedPhase> {
    for t in [&service.bob, &qkd.alice, &qkd.bob, correction] {
        service.alice.ensure_compatible(t)?;
    }
    let mut alice = service.alice.clone();
    alice.add_scaled(&qkd.alice, 1.0)?;
    alice.add_scaled(correction, 1.0)?;
    let mut bob = service.bob.clone();
    bob.add_scaled(&qkd.bob, 1.0)?;
    let mut error = alice.clone();
    error.add_scaled(&bob, -1.0)?;
    Ok(SensedPhase {
        alice: alice.with_provenance("sensed alice arm"),
        bob: bob.with_provenance("sensed bob arm"),
        error: error.with_provenance("sensing error alice-bob"),
    })
}

/// Phase left on the reference/QKD wavelength when a correction exactly
/// cancels the same fiber phase seen at the sensing wavelength.
pub fn residual_after_correction(
    fiber_phase_at_sensing: &PhaseTrace,
    plan: &WavelengthPlan,
) -> Result<PhaseTrace> {
    if !(plan.sensing_hz.is_finite() && plan.sensing_hz > 0.0) {
        return Err(Error::invalid("sensing frequency must be > 0"));
    }
    let k = plan.mismatch_ratio();
    Ok(fiber_phase_at_sensing
        .map(|x| k * x)
        .with_provenance("wavelength-mismatch residual"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSkew {
    pub alice_service_s: f64,
    pub alice_qkd_s: f64,
    pub bob_service_s: f64,
    pub bob_qkd_s: f64,
    /// Arrival-time difference of the QKD pulses at Charlie.
    pub qkd_skew_s: f64,
    /// Round-trip (service + QKD) delay difference between the arms.
    pub round_trip_skew_s: f64,
}

pub fn timing_skew(topology: &LinkTopology) -> TimingSkew {
    let n = topology.refractive_index;
    let d = |s: &FiberSpan| s.delay_s(n);
    let (a_s, a_q) = (d(&topology.alice.service), d(&topology.alice.qkd));
    let (b_s, b_q) = (d(&topology.bob.service), d(&topology.bob.qkd));
    TimingSkew {
        alice_service_s: a_s,
        alice_qkd_s: a_q,
        bob_service_s: b_s,
        bob_qkd_s: b_q,
        qkd_skew_s: (a_q - b_q).abs(),
        round_trip_skew_s: ((a_s + a_q) - (b_s + b_q)).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torino_budget() {
        let b = loss_budget(&LinkTopology::torino_default());
        assert_eq!(b.total_km, 206.0);
        assert_eq!(b.total_db, 65.0);
        assert!((b.alice_db_per_km.unwrap() - 35.0 / 114.0).abs() < 1e-15);
        assert!((b.bob_db_per_km.unwrap() - 0.326).abs() < 1e-3);
        assert!((b.total_db_per_km.unwrap() - 0.316).abs() < 1e-3);
    }

    #[test]
    fn zero_length_spans() {
        let mut t = LinkTopology::torino_default();
        for s in [&mut t.alice.qkd, &mut t.bob.qkd] {
            *s = FiberSpan::new(0.0, 0.0);
        }
        let b = loss_budget(&t);
        assert_eq!(b.total_db, 0.0);
        assert!(b.total_db_per_km.is_none());
    }

    #[test]
    fn single_arm_only() {
        let mut t = LinkTopology::torino_default();
        t.bob.qkd = FiberSpan::new(0.0, 0.0);
        assert_eq!(loss_budget(&t).total_db, 35.0);
    }

    #[test]
    fn budget_symmetric_under_relabel() {
        let t = LinkTopology::torino_default();
        let mut s = t.clone();
        std::mem::swap(&mut s.alice, &mut s.bob);
        let (a, b) = (loss_budget(&t), loss_budget(&s));
        assert_eq!(a.total_db, b.total_db);
        assert_eq!(a.total_km, b.total_km);
        assert_eq!(timing_skew(&t).qkd_skew_s, timing_skew(&s).qkd_skew_s);
    }

    #[test]
    fn residual_examples() {
        let plan = WavelengthPlan::dwdm_default();
        let t = PhaseTrace::new(vec![1000.0, -1000.0], 1.0).unwrap();
        let r = residual_after_correction(&t, &plan).unwrap();
        assert!((r.samples[0] - 0.772_200_772).abs() < 1e-6);
        let same = WavelengthPlan::locked(194.4e12, 194.4e12);
        let z = residual_after_correction(&t, &same).unwrap();
        assert!(z.samples.iter().all(|&x| x == 0.0));
        let flipped = WavelengthPlan::locked(194.25e12, 194.4e12);
        let f = residual_after_correction(&t, &flipped).unwrap();
        assert!(f.samples[0] < 0.0);
    }

    #[test]
    fn span_delays() {
        let t = LinkTopology::torino_default();
        let s = timing_skew(&t);
        assert!((s.alice_qkd_s - 558.2e-6).abs() / 558.2e-6 < 1e-3);
        assert!((s.qkd_skew_s - 107.7e-6).abs() / 107.7e-6 < 1e-3);
        assert!((t.self_delay_s() - 215.4e-6).abs() / 215.4e-6 < 1e-3);
        let mut eq = t.clone();
        eq.bob = eq.alice.clone();
        assert_eq!(timing_skew(&eq).qkd_skew_s, 0.0);
    }

    #[test]
    fn plan_invariants() {
        assert!(WavelengthPlan::dwdm_default().validate().is_ok());
        assert!(WavelengthPlan::locked(1.0, 1.0).validate().is_err());
        let mut p = WavelengthPlan::dwdm_default();
        p.bob_hz += 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sensed_phase_examples() {
        let z = || PhaseTrace::zeros(8, 1.0).unwrap();
        let zero = sensed_phase(
            &ArmPair { alice: z(), bob: z() },
            &ArmPair { alice: z(), bob: z() },
            &z(),
        )
        .unwrap();
        assert!(zero.error.samples.iter().all(|&x| x == 0.0));

        let svc = PhaseTrace::new((0..8).map(|i| i as f64 * 0.3).collect(), 1.0).unwrap();
        let qkd = PhaseTrace::new((0..8).map(|i| (i as f64).sin()).collect(), 1.0).unwrap();
        let mut corr = svc.clone();
        corr.add_scaled(&qkd, 1.0).unwrap();
        let corr = corr.map(|x| -x);
        let s = sensed_phase(
            &ArmPair { alice: svc, bob: z() },
            &ArmPair { alice: qkd, bob: z() },
            &corr,
        )
        .unwrap();
        assert!(s.error.samples.iter().all(|&x| x.abs() < 1e-12));

        let other_rate = PhaseTrace::zeros(8, 2.0).unwrap();
        assert!(sensed_phase(
            &ArmPair { alice: z(), bob: z() },
            &ArmPair { alice: z(), bob: other_rate },
            &z(),
        )
        .is_err());
    }
}
