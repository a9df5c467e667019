//! Arbiter-PUF simulation, key derivation, one-time secure readout and the
//! pseudo-PUF health check.

mod arbiter;
mod readout;

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arbiter::{features, puf_eval, ArbiterPuf, DEFAULT_NOISE, STAGES};
pub use readout::{secure_readout, EaKeyPair, ReadoutCiphertext, ReadoutEntry, ReadoutFuse};

pub const KEY_BITS: usize = 128;
pub const DEFAULT_VOTES: u8 = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PufError {
    #[error("secure readout already used")]
    ReadoutDisabled,
    #[error("readout ciphertext failed its checksum")]
    ReadoutCorrupt,
    #[error("key bit {bit} tied in the majority vote")]
    KeyInstability { bit: usize },
}

/// Expansion challenge for key bit `i`: `base ^ i` through the SplitMix64
/// finalizer, so neighbouring counters land on unrelated parity features.
pub fn expansion_challenge(base: u64, i: usize) -> u64 {
    let mut z = base ^ i as u64;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Majority vote per key bit over `votes` evaluations.
pub fn derive_key_with_votes(puf: &mut ArbiterPuf, base: u64, votes: u8) -> Result<[u8; 16], PufError> {
    let mut key = [0u8; 16];
    for i in 0..KEY_BITS {
        let ones = puf.count_ones(expansion_challenge(base, i), votes);
        if 2 * ones == votes {
            return Err(PufError::KeyInstability { bit: i });
        }
        if 2 * ones > votes {
            key[i / 8] |= 1 << (i % 8);
        }
    }
    Ok(key)
}

pub fn derive_key(puf: &mut ArbiterPuf, base: u64) -> Result<[u8; 16], PufError> {
    derive_key_with_votes(puf, base, DEFAULT_VOTES)
}

/// What the enrollment authority keeps per device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrollmentRecord {
    pub device_id: String,
    pub challenge: String,
    pub sk: String,
    pub sk_encrypted_at_rest: bool,
    pub ea_public_key: String,
}

impl EnrollmentRecord {
    pub fn challenge_value(&self) -> Option<u64> {
        u64::from_str_radix(&self.challenge, 16).ok()
    }

    pub fn sk_bytes(&self) -> Option<[u8; 16]> {
        hex::decode(&self.sk).ok()?.try_into().ok()
    }
}

/// A deterministic stand-in: AES-128 of the challenge, truncated to one bit.
#[derive(Clone)]
pub struct PseudoPuf {
    cipher: Aes128,
}

impl PseudoPuf {
    pub fn new(key: [u8; 16]) -> Self {
        Self { cipher: Aes128::new(&key.into()) }
    }

    pub fn eval(&self, challenge: u64) -> bool {
        let mut block = [0u8; 16];
        block[..8].copy_from_slice(&challenge.to_le_bytes());
        let mut b = block.into();
        self.cipher.encrypt_block(&mut b);
        b[0] & 1 == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PufVerdict {
    Genuine,
    SuspectedPseudoPuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PufHealthReport {
    pub pairs: usize,
    pub flip_agreement: f64,
    pub complement_agreement: f64,
    pub mean_response: f64,
    /// `5 * sqrt(0.25 / pairs)`.
    pub threshold: f64,
    pub degenerate: bool,
    pub verdict: PufVerdict,
}

/// Bit positions flipped by the health check. Flipping bit `i` changes
/// `i + 1` of the 65 parity features, so low positions give the strongest
/// response correlation on a genuine arbiter PUF.
pub const HEALTH_FLIP_POSITIONS: u32 = 8;
const DEGENERATE_BIAS: f64 = 0.45;

/// Queries `oracle` on `pairs` random challenges and their one-bit-flip
/// neighbours (plus complements, reported only).
pub fn puf_health_check<R: Rng, F: FnMut(u64) -> bool>(mut oracle: F, pairs: usize, rng: &mut R) -> PufHealthReport {
    let (mut agree, mut comp_agree, mut ones) = (0usize, 0usize, 0usize);
    for k in 0..pairs {
        let c: u64 = rng.gen();
        let pos = (k as u32) % HEALTH_FLIP_POSITIONS;
        let r = oracle(c);
        let r_flip = oracle(c ^ (1 << pos));
        let r_comp = oracle(!c);
        agree += usize::from(r == r_flip);
        comp_agree += usize::from(r == r_comp);
        ones += usize::from(r) + usize::from(r_flip);
    }
    let n = pairs.max(1) as f64;
    let flip_agreement = agree as f64 / n;
    let mean_response = ones as f64 / (2.0 * n);
    let threshold = 5.0 * (0.25 / n).sqrt();
    let degenerate = (mean_response - 0.5).abs() > DEGENERATE_BIAS;
    let verdict = if !degenerate && (flip_agreement - 0.5).abs() > threshold {
        PufVerdict::Genuine
    } else {
        PufVerdict::SuspectedPseudoPuf
    };
    PufHealthReport {
        pairs,
        flip_agreement,
        complement_agreement: comp_agree as f64 / n,
        mean_response,
        threshold,
        degenerate,
        verdict,
    }
}
