//! Closed-form latency and energy models for the DCC and LCC modes.
//!
//! Cycles are the unit throughout; ratios are rounded up wherever a cycle
//! count must be integral. Energy is in mW x cycles.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seed transferred at LCC initialisation.
pub const LCC_SEED_BYTES: u64 = 16;
/// Crossover message size stated alongside the profile table.
pub const STATED_CROSSOVER_BYTES: u64 = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CostError {
    #[error("bus width {bw} does not divide n = {n}")]
    BusWidth { n: u64, bw: u64 },
    #[error("invalid cost parameter: {0}")]
    Invalid(String),
    #[error("profile file: {0}")]
    Parse(String),
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub profile: String,
    /// AEAD initialisation plus finalisation.
    pub c_fix: u64,
    /// AEAD cycles per byte.
    pub c_byte: u64,
    /// PRNG throughput as `prng_bits` per `prng_cycles`.
    pub prng_bits: u64,
    pub prng_cycles: u64,
    pub bw: u64,
    pub n: u64,
    /// Blocks per TRN epoch.
    pub u: u64,
    /// Power draw in mW.
    pub p_csn: f64,
    pub p_prng: f64,
    pub p_aead: f64,
}

impl CostParams {
    pub fn coma1() -> Self {
        Self {
            profile: "coma1".into(),
            c_fix: 10492,
            c_byte: 72,
            prng_bits: 128,
            prng_cycles: 10,
            bw: 8,
            n: 64,
            u: 63,
            p_csn: 0.11,
            p_prng: 0.431,
            p_aead: 0.704,
        }
    }

    pub fn coma2() -> Self {
        Self {
            profile: "coma2".into(),
            c_fix: 20452,
            c_byte: 17,
            prng_bits: 64,
            prng_cycles: 1,
            bw: 8,
            n: 64,
            u: 63,
            p_csn: 0.11,
            p_prng: 0.144,
            p_aead: 0.251,
        }
    }

    pub fn builtin(name: &str) -> Result<Self, CostError> {
        match name.to_ascii_lowercase().as_str() {
            "coma1" => Ok(Self::coma1()),
            "coma2" => Ok(Self::coma2()),
            _ => Err(CostError::UnknownProfile(name.to_string())),
        }
    }

    pub fn with_n(mut self, n: u64) -> Self {
        self.n = n;
        self
    }

    pub fn with_u(mut self, u: u64) -> Self {
        self.u = u;
        self
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.n < 4 || !self.n.is_power_of_two() {
            return Err(CostError::Invalid(format!("n = {} must be a power of two >= 4", self.n)));
        }
        if self.bw == 0 || self.n % self.bw != 0 {
            return Err(CostError::BusWidth { n: self.n, bw: self.bw });
        }
        if self.prng_bits == 0 || self.prng_cycles == 0 || self.u == 0 {
            return Err(CostError::Invalid("throughput and U must be positive".into()));
        }
        if [self.p_csn, self.p_prng, self.p_aead].iter().any(|p| !(*p >= 0.0)) {
            return Err(CostError::Invalid("power levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn prng_perf(&self) -> Ratio<u64> {
        Ratio::new(self.prng_bits, self.prng_cycles)
    }

    /// TRN width of the near-non-blocking network: `3n(log2 n - 1)`.
    pub fn trn_bits(&self) -> u64 {
        3 * self.n * (u64::from(self.n.trailing_zeros()) - 1)
    }

    pub fn trn_bytes(&self) -> u64 {
        self.trn_bits().div_ceil(8)
    }

    /// Bus cycles to move one n-bit block, plus one for the CSN.
    pub fn cycles_per_block(&self) -> u64 {
        self.n / self.bw + 1
    }

    /// `P_H`: CSN and PRNG both active.
    pub fn p_high(&self) -> f64 {
        self.p_csn + self.p_prng
    }
}

/// Profiles loaded from TOML: a `[[profile]]` array of [`CostParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFile {
    pub profile: Vec<CostParams>,
}

pub fn load_profiles(toml_text: &str) -> Result<Vec<CostParams>, CostError> {
    let file: ProfileFile = toml::from_str(toml_text).map_err(|e| CostError::Parse(e.to_string()))?;
    for p in &file.profile {
        p.validate()?;
    }
    Ok(file.profile)
}

/// `T = C_fix + bytes * C_byte`.
pub fn t_comm_dcc(p: &CostParams, bytes: u64) -> u64 {
    p.c_fix + bytes * p.c_byte
}

/// `ceil(3n(log2 n - 1) / PRNG_perf)`.
pub fn c_prng(p: &CostParams) -> u64 {
    (Ratio::from_integer(p.trn_bits()) / p.prng_perf()).ceil().to_integer()
}

/// `C_fix + 16 C_byte + C_PRNG`.
pub fn lcc_init_cycles(p: &CostParams) -> u64 {
    p.c_fix + LCC_SEED_BYTES * p.c_byte + c_prng(p)
}

/// `(8/n)(n/BW + 1)` cycles per byte on the LCC data path.
pub fn c_byte_lcc(p: &CostParams) -> Result<Ratio<u64>, CostError> {
    if p.bw == 0 || p.n % p.bw != 0 {
        return Err(CostError::BusWidth { n: p.n, bw: p.bw });
    }
    Ok(Ratio::new(8, p.n) * Ratio::from_integer(p.n / p.bw + 1))
}

/// Cycles the link pauses per TRN refresh when the PRNG is slower than U
/// blocks of traffic.
pub fn lcc_stall(p: &CostParams) -> u64 {
    c_prng(p).saturating_sub(p.u * p.cycles_per_block())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochEnergy {
    pub energy: f64,
    pub stalled: bool,
}

/// Energy of one U-block epoch. Normally
/// `C_PRNG P_H + (U(n/BW+1) - C_PRNG) P_L1`; when the PRNG outlasts the
/// traffic the link runs at `P_H` and then waits on the PRNG at `P_L2`.
pub fn e_lcc(p: &CostParams) -> EpochEnergy {
    let cp = c_prng(p) as f64;
    let traffic = (p.u * p.cycles_per_block()) as f64;
    if traffic >= cp {
        EpochEnergy { energy: cp * p.p_high() + (traffic - cp) * p.p_csn, stalled: false }
    } else {
        EpochEnergy { energy: traffic * p.p_high() + (cp - traffic) * p.p_prng, stalled: true }
    }
}

pub fn blocks_for(p: &CostParams, bytes: u64) -> u64 {
    (8 * bytes).div_ceil(p.n)
}

/// TRN epochs needed for `blocks`, the first TRN included.
pub fn epochs_for(p: &CostParams, blocks: u64) -> u64 {
    blocks.div_ceil(p.u).max(1)
}

/// Activation: one TRN drawn, sent sealed, then one sealed DPOK per n-bit
/// segment of the obfuscation key.
pub fn activation_cycles(p: &CostParams, ok_bits: u64) -> u64 {
    let segments = ok_bits.div_ceil(p.n);
    c_prng(p) + t_comm_dcc(p, p.trn_bytes()) + segments * t_comm_dcc(p, p.n / 8)
}

/// One DCC message sent at the start of a TRN epoch: data sealed in chunks
/// of at most U blocks, with a fresh TRN drawn and sealed between chunks.
pub fn dcc_message_cycles(p: &CostParams, bytes: u64) -> u64 {
    let blocks = blocks_for(p, bytes).max(1);
    let full = blocks / p.u;
    let rest = blocks % p.u;
    let mut cycles = full * t_comm_dcc(p, p.u * p.n / 8);
    if rest > 0 {
        cycles += t_comm_dcc(p, rest * p.n / 8);
    }
    let refreshes = epochs_for(p, blocks) - 1;
    cycles + refreshes * (c_prng(p) + t_comm_dcc(p, p.trn_bytes()))
}

/// One LCC message after initialisation, starting at an epoch boundary.
pub fn lcc_message_cycles(p: &CostParams, bytes: u64) -> u64 {
    let blocks = blocks_for(p, bytes);
    let refreshes = epochs_for(p, blocks) - 1;
    blocks * p.cycles_per_block() + refreshes * lcc_stall(p)
}

/// DCC end-to-end for one message, as plotted: the AEAD path only.
pub fn dcc_total_cycles(p: &CostParams, bytes: u64) -> u64 {
    t_comm_dcc(p, bytes)
}

/// LCC end-to-end for one message: initialisation plus the data path.
pub fn lcc_total_cycles(p: &CostParams, bytes: u64) -> u64 {
    lcc_init_cycles(p) + lcc_message_cycles(p, bytes)
}

pub fn dcc_energy(p: &CostParams, bytes: u64) -> f64 {
    dcc_total_cycles(p, bytes) as f64 * (p.p_aead + p.p_csn)
}

pub fn lcc_energy(p: &CostParams, bytes: u64) -> f64 {
    let init = (p.c_fix + LCC_SEED_BYTES * p.c_byte) as f64 * p.p_aead + c_prng(p) as f64 * p.p_prng;
    let blocks = blocks_for(p, bytes);
    let epochs = blocks.div_ceil(p.u);
    init + epochs as f64 * e_lcc(p).energy
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub faster_fixed_profile: String,
    pub faster_streaming_profile: String,
    /// Smallest message size at which the lower per-byte profile wins.
    pub computed_bytes: u64,
    pub stated_bytes: u64,
    pub discrepancy: bool,
}

/// Solves `C_fix,a + b C_byte,a = C_fix,b + b C_byte,b` for the first
/// integer size where the profile with the smaller per-byte cost is
/// strictly faster.
pub fn crossover(a: &CostParams, b: &CostParams) -> Option<CrossoverReport> {
    let (lo_fix, hi_fix) = if a.c_fix <= b.c_fix { (a, b) } else { (b, a) };
    if hi_fix.c_byte >= lo_fix.c_byte {
        return None;
    }
    let bytes = (hi_fix.c_fix - lo_fix.c_fix) / (lo_fix.c_byte - hi_fix.c_byte) + 1;
    Some(CrossoverReport {
        faster_fixed_profile: lo_fix.profile.clone(),
        faster_streaming_profile: hi_fix.profile.clone(),
        computed_bytes: bytes,
        stated_bytes: STATED_CROSSOVER_BYTES,
        discrepancy: bytes != STATED_CROSSOVER_BYTES,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub profile: String,
    pub mode: String,
    pub bytes: u64,
    pub cycles: u64,
    pub energy: f64,
}

/// Powers of two from `min` to `max` bytes, both modes, every profile.
pub fn sweep(profiles: &[CostParams], min: u64, max: u64) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for p in profiles {
        for mode in ["dcc", "lcc"] {
            let mut bytes = min.max(1);
            while bytes <= max {
                let (cycles, energy) = match mode {
                    "dcc" => (dcc_total_cycles(p, bytes), dcc_energy(p, bytes)),
                    _ => (lcc_total_cycles(p, bytes), lcc_energy(p, bytes)),
                };
                rows.push(SweepRow { profile: p.profile.clone(), mode: mode.into(), bytes, cycles, energy });
                bytes *= 2;
            }
        }
    }
    rows
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eq1_anchors() {
        assert_eq!(t_comm_dcc(&CostParams::coma2(), 1024), 37860);
        assert_eq!(t_comm_dcc(&CostParams::coma1(), 0), 10492);
        assert_eq!(t_comm_dcc(&CostParams::coma1(), 1024), 10492 + 72 * 1024);
    }

    #[test]
    fn prng_cycles() {
        assert_eq!(c_prng(&CostParams::coma2()), 15);
        assert_eq!(c_prng(&CostParams::coma1()), 75);
        assert_eq!(c_prng(&CostParams::coma2().with_n(4)), 1);
    }

    #[test]
    fn lcc_init() {
        assert_eq!(lcc_init_cycles(&CostParams::coma2()), 20739);
        assert_eq!(lcc_init_cycles(&CostParams::coma1()), 11719);
        let mut p = CostParams::coma2();
        p.c_byte = 0;
        assert_eq!(lcc_init_cycles(&p), p.c_fix + 15);
    }

    #[test]
    fn lcc_per_byte() {
        assert_eq!(c_byte_lcc(&CostParams::coma2()).unwrap(), Ratio::new(9, 8));
        assert_eq!(c_byte_lcc(&CostParams::coma2().with_n(32)).unwrap(), Ratio::new(5, 4));
        let mut p = CostParams::coma2().with_n(8);
        assert_eq!(c_byte_lcc(&p).unwrap(), Ratio::new(16, 8));
        p.bw = 3;
        assert!(matches!(c_byte_lcc(&p), Err(CostError::BusWidth { .. })));
    }

    #[test]
    fn epoch_energy() {
        let p = CostParams::coma2().with_u(30);
        let e = e_lcc(&p);
        assert!(!e.stalled);
        assert!((e.energy - (15.0 * 0.254 + 255.0 * 0.11)).abs() < 1e-9);
        // boundary: U(n/BW+1) == C_PRNG leaves only the first term
        let mut b = CostParams::coma2().with_u(1);
        b.prng_bits = 960;
        b.prng_cycles = 9;
        assert_eq!(c_prng(&b), 9);
        assert!((e_lcc(&b).energy - 9.0 * b.p_high()).abs() < 1e-12);
        // stall regime
        let s = CostParams::coma1().with_u(2);
        let e = e_lcc(&s);
        assert!(e.stalled);
        assert!((e.energy - (18.0 * s.p_high() + 57.0 * s.p_prng)).abs() < 1e-9);
        assert_eq!(lcc_stall(&s), 57);
    }

    #[test]
    fn crossover_is_182_not_128() {
        let r = crossover(&CostParams::coma1(), &CostParams::coma2()).unwrap();
        assert_eq!(r.computed_bytes, 182);
        assert_eq!(r.faster_fixed_profile, "coma1");
        assert!(r.discrepancy);
        let (a, b) = (CostParams::coma1(), CostParams::coma2());
        for bytes in 0..1000 {
            assert_eq!(t_comm_dcc(&b, bytes) < t_comm_dcc(&a, bytes), bytes >= 182, "{bytes}");
        }
    }

    #[test]
    fn profiles_from_toml() {
        let text = toml::to_string(&ProfileFile { profile: vec![CostParams::coma1(), CostParams::coma2()] }).unwrap();
        let back = load_profiles(&text).unwrap();
        assert_eq!(back[1], CostParams::coma2());
        assert!(load_profiles("[[profile]]\nprofile = 'x'\n").is_err());
    }

    #[test]
    fn sweep_shape_and_monotone() {
        let rows = sweep(&[CostParams::coma1(), CostParams::coma2()], 16, 65536);
        assert_eq!(rows.len(), 2 * 2 * 13);
        for chunk in rows.chunks(13) {
            assert!(chunk.windows(2).all(|w| w[0].cycles < w[1].cycles));
        }
        let csv = sweep_csv(&rows[..1]);
        assert!(csv.starts_with("profile,mode,bytes,cycles,energy\ncoma1,dcc,16,11644,"));
    }

    #[test]
    fn lcc_beats_dcc_past_amortisation() {
        for p in [CostParams::coma1(), CostParams::coma2()] {
            let first = (1..1 << 20).find(|&b| lcc_total_cycles(&p, b) < dcc_total_cycles(&p, b)).unwrap();
            for b in [first, first * 2, first * 10, 1 << 20] {
                assert!(lcc_total_cycles(&p, b) < dcc_total_cycles(&p, b));
            }
        }
    }

    proptest! {
        #[test]
        fn e_lcc_second_term_linear_in_u(u in 1u64..60) {
            let p = CostParams::coma2().with_u(u);
            let q = CostParams::coma2().with_u(2 * u);
            let cp = c_prng(&p) as f64;
            prop_assume!(u * 9 >= 15);
            let second = |x: &CostParams| e_lcc(x).energy - cp * x.p_high();
            prop_assert!((second(&q) - (second(&p) + (u * 9) as f64 * p.p_csn)).abs() < 1e-9);
        }
    }
}
