//! Bit-string helpers shared by every module.
//!
//! Bit `i` of a [`Bits`] value lives in byte `i / 8` at position `i % 8`
//! (least significant bit first). All hex and byte conversions use that order.

use bitvec::prelude::*;
use rand::Rng;

pub type Bits = BitVec<u8, Lsb0>;

pub fn zeros(len: usize) -> Bits {
    bitvec![u8, Lsb0; 0; len]
}

pub fn from_u64(value: u64, len: usize) -> Bits {
    assert!(len <= 64);
    (0..len).map(|i| (value >> i) & 1 == 1).collect()
}

/// Packs up to 64 bits into an integer, bit 0 first.
pub fn to_u64(bits: &BitSlice<u8, Lsb0>) -> u64 {
    assert!(bits.len() <= 64);
    bits.iter()
        .by_vals()
        .enumerate()
        .fold(0, |acc, (i, b)| acc | (u64::from(b) << i))
}

pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Bits {
    let mut bytes = vec![0u8; len.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    from_bytes(&bytes, len)
}

/// Takes the first `len` bits of `bytes`.
pub fn from_bytes(bytes: &[u8], len: usize) -> Bits {
    assert!(len <= bytes.len() * 8, "not enough bytes for {len} bits");
    let mut bits = Bits::from_slice(bytes);
    bits.truncate(len);
    bits
}

/// Returns the packed bytes; trailing pad bits in the last byte are zero.
pub fn to_bytes(bits: &BitSlice<u8, Lsb0>) -> Vec<u8> {
    let mut owned = bits.to_bitvec();
    owned.set_uninitialized(false);
    owned.into_vec()
}

pub fn to_hex(bits: &BitSlice<u8, Lsb0>) -> String {
    hex::encode(to_bytes(bits))
}

pub fn from_hex(s: &str, len: usize) -> Result<Bits, hex::FromHexError> {
    let bytes = hex::decode(s.trim())?;
    if bytes.len() != len.div_ceil(8) {
        return Err(hex::FromHexError::InvalidStringLength);
    }
    Ok(from_bytes(&bytes, len))
}

pub fn hamming_distance(a: &BitSlice<u8, Lsb0>, b: &BitSlice<u8, Lsb0>) -> usize {
    assert_eq!(a.len(), b.len());
    a.iter().by_vals().zip(b.iter().by_vals()).filter(|(x, y)| x != y).count()
}

pub fn xor(a: &BitSlice<u8, Lsb0>, b: &BitSlice<u8, Lsb0>) -> Bits {
    assert_eq!(a.len(), b.len());
    a.iter().by_vals().zip(b.iter().by_vals()).map(|(x, y)| x ^ y).collect()
}
