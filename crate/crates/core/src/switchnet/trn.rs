use bitvec::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetworkTopology, SwitchNetError};
use crate::bits::{self, Bits};

/// Bit order of a serialized TRN, stored next to the hex string.
pub const TRN_BIT_ORDER: &str = "lsb0;stage-major,rrb,(swap,invert0,invert1)";

/// Configuration of one 2x2 re-routing block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RrbConfig {
    pub swap: bool,
    pub invert_out0: bool,
    pub invert_out1: bool,
}

/// True random number configuring a CSN/RCSN pair.
///
/// Bit `3 * (stage * n/2 + block) + {0, 1, 2}` holds the block's
/// swap, invert-out0 and invert-out1 bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trn {
    bits: Bits,
}

impl Trn {
    pub fn new(bits: Bits, topology: &NetworkTopology) -> Result<Self, SwitchNetError> {
        if bits.len() != topology.config_bits() {
            return Err(SwitchNetError::TrnLength { expected: topology.config_bits(), actual: bits.len() });
        }
        Ok(Self { bits })
    }

    /// Wraps raw bits without checking them against a topology.
    pub fn from_bits(bits: Bits) -> Self {
        Self { bits }
    }

    pub fn zero(topology: &NetworkTopology) -> Self {
        Self { bits: bits::zeros(topology.config_bits()) }
    }

    pub fn random<R: Rng + ?Sized>(topology: &NetworkTopology, rng: &mut R) -> Self {
        Self { bits: bits::random(rng, topology.config_bits()) }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &BitSlice<u8, Lsb0> {
        &self.bits
    }

    pub fn into_bits(self) -> Bits {
        self.bits
    }

    pub(crate) fn rrb(&self, index: usize) -> RrbConfig {
        let b = &self.bits[3 * index..3 * index + 3];
        RrbConfig { swap: b[0], invert_out0: b[1], invert_out1: b[2] }
    }

    /// Left circular rotation by `k` bits: bit `i` of the result is bit
    /// `(i + k) mod len` of `self`.
    pub fn shifted(&self, k: usize) -> Self {
        let mut bits = self.bits.clone();
        if !bits.is_empty() {
            let len = bits.len();
            bits.rotate_left(k % len);
        }
        Self { bits }
    }

    pub fn to_hex(&self) -> String {
        bits::to_hex(&self.bits)
    }

    pub fn from_hex(s: &str, topology: &NetworkTopology) -> Result<Self, SwitchNetError> {
        let bits = bits::from_hex(s, topology.config_bits()).map_err(|_| SwitchNetError::TrnHex)?;
        Self::new(bits, topology)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        bits::to_bytes(&self.bits)
    }

    pub fn from_bytes(bytes: &[u8], topology: &NetworkTopology) -> Result<Self, SwitchNetError> {
        let len = topology.config_bits();
        if bytes.len() != len.div_ceil(8) {
            return Err(SwitchNetError::TrnLength { expected: len, actual: bytes.len() * 8 });
        }
        Self::new(bits::from_bytes(bytes, len), topology)
    }
}

/// Serialized form: hex string plus declared bit order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrnRecord {
    pub bits: usize,
    pub order: String,
    pub hex: String,
}

impl From<&Trn> for TrnRecord {
    fn from(t: &Trn) -> Self {
        Self { bits: t.len(), order: TRN_BIT_ORDER.to_string(), hex: t.to_hex() }
    }
}

/// Circular left rotation of a TRN; the per-block schedule used by LCC.
pub fn shift_trn(trn: &Trn, k: usize) -> Trn {
    trn.shifted(k)
}
