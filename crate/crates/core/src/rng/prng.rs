use aes::cipher::{KeyIvInit, StreamCipher};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{RngError, Trivium};
use crate::bits::{self, Bits};

type Aes128Ctr = ctr::Ctr128BE<aes::Aes128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrngProfile {
    /// 64 bits per cycle.
    Trivium,
    /// 128 bits per 10 cycles.
    AesCtr,
}

impl PrngProfile {
    /// Throughput in bits per cycle.
    pub fn bits_per_cycle(self) -> Ratio<u64> {
        match self {
            PrngProfile::Trivium => Ratio::new(64, 1),
            PrngProfile::AesCtr => Ratio::new(128, 10),
        }
    }

    /// `ceil(k / throughput)`.
    pub fn cycles_for(self, k: usize) -> u64 {
        (Ratio::from_integer(k as u64) / self.bits_per_cycle()).ceil().to_integer()
    }
}

enum Core {
    Trivium(Box<Trivium>),
    AesCtr(Box<Aes128Ctr>),
}

/// Seeded keystream generator. One seed per activation; a second seed call
/// fails until [`Prng::new_activation`].
pub struct Prng {
    profile: PrngProfile,
    core: Option<Core>,
    cycles: u64,
    produced: u64,
}

impl std::fmt::Debug for Prng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prng")
            .field("profile", &self.profile)
            .field("seeded", &self.core.is_some())
            .field("cycles", &self.cycles)
            .finish()
    }
}

impl Prng {
    pub fn new(profile: PrngProfile) -> Self {
        Self { profile, core: None, cycles: 0, produced: 0 }
    }

    pub fn profile(&self) -> PrngProfile {
        self.profile
    }

    pub fn is_seeded(&self) -> bool {
        self.core.is_some()
    }

    /// Trivium takes the first 10 bytes as key and the last 6, zero-padded,
    /// as IV. AES-CTR uses the seed as key with a zero counter block.
    pub fn seed(&mut self, seed: &[u8; 16]) -> Result<(), RngError> {
        if self.core.is_some() {
            return Err(RngError::AlreadySeeded);
        }
        self.core = Some(match self.profile {
            PrngProfile::Trivium => {
                let key: [u8; 10] = seed[..10].try_into().unwrap();
                let mut iv = [0u8; 10];
                iv[..6].copy_from_slice(&seed[10..]);
                Core::Trivium(Box::new(Trivium::new(&key, &iv)))
            }
            PrngProfile::AesCtr => Core::AesCtr(Box::new(Aes128Ctr::new(seed.into(), &[0u8; 16].into()))),
        });
        Ok(())
    }

    /// Ends the activation: forgets the seed so the next one is accepted.
    pub fn new_activation(&mut self) {
        self.core = None;
    }

    /// Draws `k` bits and charges the cycle counter.
    pub fn next_bits(&mut self, k: usize) -> Result<Bits, RngError> {
        let core = self.core.as_mut().ok_or(RngError::Unseeded)?;
        let mut bytes = vec![0u8; k.div_ceil(8)];
        match core {
            Core::Trivium(t) => t.fill(&mut bytes),
            Core::AesCtr(c) => c.apply_keystream(&mut bytes),
        }
        self.cycles += self.profile.cycles_for(k);
        self.produced += k as u64;
        Ok(bits::from_bytes(&bytes, k))
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn bits_produced(&self) -> u64 {
        self.produced
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_accounting() {
        assert_eq!(PrngProfile::Trivium.cycles_for(960), 15);
        assert_eq!(PrngProfile::AesCtr.cycles_for(960), 75);
        assert_eq!(PrngProfile::Trivium.cycles_for(0), 0);
        assert_eq!(PrngProfile::Trivium.cycles_for(24), 1);
        let mut p = Prng::new(PrngProfile::Trivium);
        p.seed(&[1; 16]).unwrap();
        assert!(p.next_bits(0).unwrap().is_empty());
        assert_eq!(p.cycles(), 0);
        p.next_bits(960).unwrap();
        assert_eq!(p.cycles(), 15);
    }

    #[test]
    fn identical_seeds_identical_streams() {
        for profile in [PrngProfile::Trivium, PrngProfile::AesCtr] {
            let (mut a, mut b) = (Prng::new(profile), Prng::new(profile));
            a.seed(&[7; 16]).unwrap();
            b.seed(&[7; 16]).unwrap();
            assert_eq!(a.next_bits(10_000).unwrap(), b.next_bits(10_000).unwrap());
        }
    }

    #[test]
    fn seed_policy() {
        let mut p = Prng::new(PrngProfile::Trivium);
        assert_eq!(p.next_bits(8), Err(RngError::Unseeded));
        p.seed(&[0; 16]).unwrap();
        assert_eq!(p.seed(&[1; 16]), Err(RngError::AlreadySeeded));
        p.new_activation();
        assert!(p.seed(&[1; 16]).is_ok());
    }

    #[test]
    fn trivium_profile_uses_seed_split() {
        let seed: [u8; 16] = std::array::from_fn(|i| i as u8 + 1);
        let mut p = Prng::new(PrngProfile::Trivium);
        p.seed(&seed).unwrap();
        let mut iv = [0u8; 10];
        iv[..6].copy_from_slice(&seed[10..]);
        let mut expect = vec![0u8; 8];
        Trivium::new(seed[..10].try_into().unwrap(), &iv).fill(&mut expect);
        assert_eq!(bits::to_bytes(&p.next_bits(64).unwrap()), expect);
    }
}
