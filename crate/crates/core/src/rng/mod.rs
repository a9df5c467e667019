//! Simulated entropy source with continuous health tests, and the seeded
//! pseudo-random generators that produce TRNs.

mod health;
mod prng;
mod trivium;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use health::{apt_cutoff, rct_cutoff, AdaptiveProportionTest, HealthTest, RepetitionCountTest, ALPHA_LOG2, APT_WINDOW};
pub use prng::{Prng, PrngProfile};
pub use trivium::Trivium;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RngError {
    #[error("entropy health alarm ({test:?}) at sample {sample}")]
    HealthAlarm { test: HealthTest, sample: u64 },
    #[error("PRNG already seeded in this activation")]
    AlreadySeeded,
    #[error("PRNG used before seeding")]
    Unseeded,
    #[error("invalid entropy-source parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceFault {
    None,
    StuckAt0,
    StuckAt1,
    /// Attacker-forced bias: each bit is 1 with this probability.
    Bias(f64),
}

pub const DEFAULT_CYCLES_PER_BIT: u64 = 20_000;

/// Behavioral model of the ring-oscillator TRNG.
#[derive(Debug, Clone)]
pub struct EntropySourceModel {
    p_one: f64,
    fault: SourceFault,
    cycles_per_bit: u64,
    cycles: u64,
    rng: ChaCha20Rng,
}

impl EntropySourceModel {
    pub fn new(p_one: f64, fault: SourceFault, seed: u64) -> Result<Self, RngError> {
        let check = |p: f64| (0.0..=1.0).contains(&p);
        if !check(p_one) {
            return Err(RngError::InvalidParameter(format!("bias {p_one}")));
        }
        if let SourceFault::Bias(p) = fault {
            if !check(p) {
                return Err(RngError::InvalidParameter(format!("injected bias {p}")));
            }
        }
        Ok(Self { p_one, fault, cycles_per_bit: DEFAULT_CYCLES_PER_BIT, cycles: 0, rng: ChaCha20Rng::seed_from_u64(seed) })
    }

    pub fn unbiased(seed: u64) -> Self {
        Self::new(0.5, SourceFault::None, seed).unwrap()
    }

    pub fn with_cycles_per_bit(mut self, cycles: u64) -> Self {
        self.cycles_per_bit = cycles;
        self
    }

    pub fn set_fault(&mut self, fault: SourceFault) {
        self.fault = fault;
    }

    /// Simulated clock cycles spent sampling so far.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn sample(&mut self) -> bool {
        self.cycles += self.cycles_per_bit;
        match self.fault {
            SourceFault::None => self.rng.gen_bool(self.p_one),
            SourceFault::StuckAt0 => false,
            SourceFault::StuckAt1 => true,
            SourceFault::Bias(p) => self.rng.gen_bool(p),
        }
    }
}

/// Structured alarm record, written as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthEvent {
    pub event: String,
    pub test: HealthTest,
    pub sample: u64,
    pub cutoff: usize,
}

/// Runs both tests on every sample. The first alarm latches: reads fail
/// until [`HealthMonitor::reset`], while the tests keep observing the source.
#[derive(Debug, Clone)]
pub struct HealthMonitor {
    rct: RepetitionCountTest,
    apt: AdaptiveProportionTest,
    samples: u64,
    latched: Option<RngError>,
    events: Vec<HealthEvent>,
}

impl HealthMonitor {
    pub fn new(min_entropy: f64) -> Self {
        Self {
            rct: RepetitionCountTest::new(min_entropy),
            apt: AdaptiveProportionTest::new(APT_WINDOW, min_entropy),
            samples: 0,
            latched: None,
            events: Vec::new(),
        }
    }

    pub fn observe(&mut self, bit: bool) {
        self.samples += 1;
        let fired = [(HealthTest::Rct, self.rct.update(bit), self.rct.cutoff()), (HealthTest::Apt, self.apt.update(bit), self.apt.cutoff())];
        for (test, alarm, cutoff) in fired {
            if alarm {
                if !self.events.iter().any(|e| e.test == test) {
                    self.events.push(HealthEvent { event: "health_alarm".into(), test, sample: self.samples, cutoff });
                }
                self.latched.get_or_insert(RngError::HealthAlarm { test, sample: self.samples });
            }
        }
    }

    pub fn status(&self) -> Result<(), RngError> {
        match &self.latched {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn apt_windows(&self) -> u64 {
        self.apt.windows()
    }

    /// First alarm of each test, in order of occurrence.
    pub fn events(&self) -> &[HealthEvent] {
        &self.events
    }

    pub fn events_jsonl(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
    }

    pub fn reset(&mut self) {
        self.rct.reset();
        self.apt.reset();
        self.latched = None;
        self.events.clear();
    }
}

/// Entropy source plus its health monitor.
#[derive(Debug, Clone)]
pub struct Trng {
    source: EntropySourceModel,
    monitor: HealthMonitor,
}

impl Trng {
    pub fn new(source: EntropySourceModel, min_entropy: f64) -> Self {
        Self { source, monitor: HealthMonitor::new(min_entropy) }
    }

    pub fn source_mut(&mut self) -> &mut EntropySourceModel {
        &mut self.source
    }

    pub fn monitor(&self) -> &HealthMonitor {
        &self.monitor
    }

    pub fn monitor_mut(&mut self) -> &mut HealthMonitor {
        &mut self.monitor
    }

    pub fn next_bit(&mut self) -> Result<bool, RngError> {
        self.monitor.status()?;
        let bit = self.source.sample();
        self.monitor.observe(bit);
        self.monitor.status()?;
        Ok(bit)
    }

    pub fn next_bytes(&mut self, len: usize) -> Result<Vec<u8>, RngError> {
        (0..len)
            .map(|_| (0..8).try_fold(0u8, |acc, j| Ok(acc | (u8::from(self.next_bit()?) << j))))
            .collect()
    }

    pub fn seed128(&mut self) -> Result<[u8; 16], RngError> {
        Ok(self.next_bytes(16)?.try_into().unwrap())
    }
}

/// Convenience wrapper for one TRNG bit.
pub fn trng_next(trng: &mut Trng) -> Result<bool, RngError> {
    trng.next_bit()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stuck_at_one_alarms_at_cutoff() {
        let mut trng = Trng::new(EntropySourceModel::new(0.5, SourceFault::StuckAt1, 1).unwrap(), 1.0);
        for _ in 0..20 {
            trng.next_bit().unwrap();
        }
        assert_eq!(trng.next_bit(), Err(RngError::HealthAlarm { test: HealthTest::Rct, sample: 21 }));
        // latched
        assert!(trng.next_bit().is_err());
        trng.monitor_mut().reset();
        trng.source_mut().set_fault(SourceFault::None);
        assert!(trng.next_bit().is_ok());
    }

    #[test]
    fn events_are_json_lines() {
        let mut m = HealthMonitor::new(1.0);
        for _ in 0..400 {
            m.observe(false);
        }
        let lines = m.events_jsonl();
        assert_eq!(lines.lines().count(), 2);
        assert!(lines.starts_with(r#"{"event":"health_alarm","test":"RCT","sample":21,"cutoff":21}"#));
        assert!(lines.contains(r#""test":"APT","sample":311"#));
    }

    #[test]
    fn bias_is_validated() {
        assert!(EntropySourceModel::new(1.5, SourceFault::None, 0).is_err());
        assert!(EntropySourceModel::new(0.5, SourceFault::Bias(-0.1), 0).is_err());
    }

    #[test]
    fn sampling_costs_cycles() {
        let mut s = EntropySourceModel::unbiased(0);
        s.sample();
        s.sample();
        assert_eq!(s.cycles(), 40_000);
    }
}
