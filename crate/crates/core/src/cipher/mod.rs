//! Authenticated encryption: ACORN-128 (built in) and AES-128-GCM behind one
//! interface, plus a session wrapper that enforces npub discipline.

mod acorn;
mod session;

use aes_gcm::aead::consts::U16;
use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::aes::Aes128;
use aes_gcm::AesGcm;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use session::{AeadSession, Direction, SessionError};

pub const KEY_BYTES: usize = 16;
pub const NPUB_BYTES: usize = 16;
pub const TAG_BYTES: usize = 16;

type Aes128Gcm16 = AesGcm<Aes128, U16>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AeadAlgorithm {
    Acorn128,
    Aes128Gcm,
}

/// 128-bit secret key. Zeroed on drop.
#[derive(Clone, PartialEq, Eq)]
pub struct AeadKey([u8; KEY_BYTES]);

impl AeadKey {
    pub fn new(bytes: [u8; KEY_BYTES]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Self)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_BYTES] {
        &self.0
    }
}

impl std::fmt::Debug for AeadKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AeadKey(..)")
    }
}

impl Drop for AeadKey {
    fn drop(&mut self) {
        self.0 = [0; KEY_BYTES];
    }
}

/// Public message number: 64-bit session id then 64-bit counter, both
/// little-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Npub {
    pub session_id: u64,
    pub counter: u64,
}

impl Npub {
    pub fn to_bytes(self) -> [u8; NPUB_BYTES] {
        let mut out = [0u8; NPUB_BYTES];
        out[..8].copy_from_slice(&self.session_id.to_le_bytes());
        out[8..].copy_from_slice(&self.counter.to_le_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; NPUB_BYTES]) -> Self {
        Self {
            session_id: u64::from_le_bytes(b[..8].try_into().unwrap()),
            counter: u64::from_le_bytes(b[8..].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub ct: Vec<u8>,
    pub tag: [u8; TAG_BYTES],
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error("tag mismatch")]
    AuthFailure,
}

pub fn aead_encrypt(alg: AeadAlgorithm, key: &AeadKey, npub: &[u8; NPUB_BYTES], ad: &[u8], msg: &[u8]) -> Ciphertext {
    match alg {
        AeadAlgorithm::Acorn128 => {
            let (ct, tag) = acorn::encrypt(&key.0, npub, ad, msg);
            Ciphertext { ct, tag }
        }
        AeadAlgorithm::Aes128Gcm => {
            let cipher = Aes128Gcm16::new(key.0.as_ref().into());
            let mut ct = msg.to_vec();
            let tag = cipher
                .encrypt_in_place_detached(npub.into(), ad, &mut ct)
                .expect("message length within GCM limits");
            Ciphertext { ct, tag: tag.into() }
        }
    }
}

pub fn aead_decrypt(
    alg: AeadAlgorithm,
    key: &AeadKey,
    npub: &[u8; NPUB_BYTES],
    ad: &[u8],
    ct: &[u8],
    tag: &[u8; TAG_BYTES],
) -> Result<Vec<u8>, CipherError> {
    match alg {
        AeadAlgorithm::Acorn128 => {
            let (mut pt, expected) = acorn::decrypt(&key.0, npub, ad, ct);
            if !ct_eq(&expected, tag) {
                pt.iter_mut().for_each(|b| *b = 0);
                return Err(CipherError::AuthFailure);
            }
            Ok(pt)
        }
        AeadAlgorithm::Aes128Gcm => {
            let cipher = Aes128Gcm16::new(key.0.as_ref().into());
            let mut pt = ct.to_vec();
            cipher
                .decrypt_in_place_detached(npub.into(), ad, &mut pt, tag.into())
                .map_err(|_| CipherError::AuthFailure)?;
            Ok(pt)
        }
    }
}

/// Constant-time equality for tags.
fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALGS: [AeadAlgorithm; 2] = [AeadAlgorithm::Acorn128, AeadAlgorithm::Aes128Gcm];

    fn key() -> AeadKey {
        AeadKey::new(*b"0123456789abcdef")
    }

    #[test]
    fn empty_message_has_tag_only() {
        for alg in ALGS {
            let c = aead_encrypt(alg, &key(), &[7; 16], b"", b"");
            assert!(c.ct.is_empty());
            assert_ne!(c.tag, [0; 16]);
        }
    }

    #[test]
    fn wrong_key_fails() {
        for alg in ALGS {
            let c = aead_encrypt(alg, &key(), &[1; 16], b"ad", b"hello");
            let other = AeadKey::new([9; 16]);
            assert_eq!(aead_decrypt(alg, &other, &[1; 16], b"ad", &c.ct, &c.tag), Err(CipherError::AuthFailure));
        }
    }

    #[test]
    fn npub_layout() {
        let n = Npub { session_id: 0x0102, counter: 0x8000_0000_0000_0003 };
        let b = n.to_bytes();
        assert_eq!(&b[..2], &[2, 1]);
        assert_eq!(b[15], 0x80);
        assert_eq!(Npub::from_bytes(&b), n);
    }

    proptest! {
        #[test]
        fn roundtrip(msg in proptest::collection::vec(any::<u8>(), 0..4096), ad in proptest::collection::vec(any::<u8>(), 0..64), npub in any::<[u8; 16]>(), gcm in any::<bool>()) {
            let alg = if gcm { AeadAlgorithm::Aes128Gcm } else { AeadAlgorithm::Acorn128 };
            let c = aead_encrypt(alg, &key(), &npub, &ad, &msg);
            prop_assert_eq!(c.ct.len(), msg.len());
            prop_assert_eq!(aead_decrypt(alg, &key(), &npub, &ad, &c.ct, &c.tag).unwrap(), msg);
        }

        #[test]
        fn single_bit_flip_rejected(msg in proptest::collection::vec(any::<u8>(), 1..128), which in 0usize..4, pos in any::<usize>(), gcm in any::<bool>()) {
            let alg = if gcm { AeadAlgorithm::Aes128Gcm } else { AeadAlgorithm::Acorn128 };
            let mut npub = [3u8; 16];
            let mut ad = vec![5u8; 8];
            let c = aead_encrypt(alg, &key(), &npub, &ad, &msg);
            let (mut ct, mut tag) = (c.ct, c.tag);
            match which {
                0 => { let p = pos % (ct.len() * 8); ct[p / 8] ^= 1 << (p % 8); }
                1 => { let p = pos % 128; tag[p / 8] ^= 1 << (p % 8); }
                2 => { let p = pos % 64; ad[p / 8] ^= 1 << (p % 8); }
                _ => { let p = pos % 128; npub[p / 8] ^= 1 << (p % 8); }
            }
            prop_assert_eq!(aead_decrypt(alg, &key(), &npub, &ad, &ct, &tag), Err(CipherError::AuthFailure));
        }
    }
}
