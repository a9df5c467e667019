//! One-time public-key readout: ephemeral X25519, HKDF-SHA256 and
//! AES-128-GCM. The GCM tag doubles as the checksum that exposes a wrong
//! private key.

use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use x25519_dalek::{PublicKey, StaticSecret};

use super::{ArbiterPuf, PufError};
use crate::cipher::{aead_decrypt, aead_encrypt, AeadAlgorithm, AeadKey};

const INFO: &[u8] = b"coma puf readout v1";

/// The enrollment authority's key pair.
pub struct EaKeyPair {
    secret: StaticSecret,
    public: PublicKey,
}

impl EaKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let secret = StaticSecret::random_from_rng(rng);
        let public = PublicKey::from(&secret);
        Self { secret, public }
    }

    pub fn public(&self) -> [u8; 32] {
        self.public.to_bytes()
    }

    pub fn decrypt(&self, ct: &ReadoutCiphertext) -> Result<Vec<ReadoutEntry>, PufError> {
        let shared = self.secret.diffie_hellman(&PublicKey::from(ct.ephemeral));
        let key = derive(shared.as_bytes(), &ct.ephemeral);
        let (body, tag) = ct.body.split_at(ct.body.len().checked_sub(16).ok_or(PufError::ReadoutCorrupt)?);
        let plain = aead_decrypt(AeadAlgorithm::Aes128Gcm, &key, &[0; 16], &ct.ephemeral, body, tag.try_into().unwrap())
            .map_err(|_| PufError::ReadoutCorrupt)?;
        decode(&plain)
    }
}

impl std::fmt::Debug for EaKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EaKeyPair(public={})", hex::encode(self.public.as_bytes()))
    }
}

fn derive(shared: &[u8; 32], ephemeral: &[u8; 32]) -> AeadKey {
    let mut okm = [0u8; 16];
    Hkdf::<Sha256>::new(Some(ephemeral), shared).expand(INFO, &mut okm).unwrap();
    AeadKey::new(okm)
}

/// One challenge and how many of `votes` evaluations returned 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadoutEntry {
    pub challenge: u64,
    pub votes: u8,
    pub ones: u8,
}

impl ReadoutEntry {
    pub fn response(&self) -> bool {
        2 * self.ones > self.votes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadoutCiphertext {
    pub ephemeral: [u8; 32],
    pub body: Vec<u8>,
}

fn encode(entries: &[ReadoutEntry]) -> Vec<u8> {
    let mut out = (entries.len() as u32).to_le_bytes().to_vec();
    for e in entries {
        out.extend_from_slice(&e.challenge.to_le_bytes());
        out.push(e.votes);
        out.push(e.ones);
    }
    out
}

fn decode(b: &[u8]) -> Result<Vec<ReadoutEntry>, PufError> {
    let n = u32::from_le_bytes(b.get(..4).ok_or(PufError::ReadoutCorrupt)?.try_into().unwrap()) as usize;
    let body = &b[4..];
    if body.len() != n * 10 {
        return Err(PufError::ReadoutCorrupt);
    }
    Ok(body
        .chunks_exact(10)
        .map(|c| ReadoutEntry { challenge: u64::from_le_bytes(c[..8].try_into().unwrap()), votes: c[8], ones: c[9] })
        .collect())
}

/// Readout port on the untrusted chip, blown after first use.
#[derive(Debug, Default)]
pub struct ReadoutFuse {
    blown: bool,
}

impl ReadoutFuse {
    pub fn is_blown(&self) -> bool {
        self.blown
    }
}

pub fn secure_readout<R: RngCore + CryptoRng>(
    puf: &mut ArbiterPuf,
    fuse: &mut ReadoutFuse,
    ea_public: &[u8; 32],
    challenges: &[u64],
    votes: u8,
    rng: &mut R,
) -> Result<ReadoutCiphertext, PufError> {
    if fuse.blown {
        return Err(PufError::ReadoutDisabled);
    }
    fuse.blown = true;
    let entries: Vec<ReadoutEntry> =
        challenges.iter().map(|&c| ReadoutEntry { challenge: c, votes, ones: puf.count_ones(c, votes) }).collect();
    let eph = StaticSecret::random_from_rng(rng);
    let eph_pub = PublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&PublicKey::from(*ea_public));
    let key = derive(shared.as_bytes(), &eph_pub);
    let c = aead_encrypt(AeadAlgorithm::Aes128Gcm, &key, &[0; 16], &eph_pub, &encode(&entries));
    let mut body = c.ct;
    body.extend_from_slice(&c.tag);
    Ok(ReadoutCiphertext { ephemeral: eph_pub, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn roundtrip_and_one_time() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ea = EaKeyPair::generate(&mut rng);
        let mut puf = ArbiterPuf::new(5, 0.0);
        let mut fuse = ReadoutFuse::default();
        let challenges: Vec<u64> = (0..50).map(|i| i * 0x1234_5678_9abc).collect();
        let ct = secure_readout(&mut puf, &mut fuse, &ea.public(), &challenges, 1, &mut rng).unwrap();
        let entries = ea.decrypt(&ct).unwrap();
        for (e, &c) in entries.iter().zip(&challenges) {
            assert_eq!(e.challenge, c);
            assert_eq!(e.response(), puf.eval_noiseless(c));
        }
        assert!(matches!(
            secure_readout(&mut puf, &mut fuse, &ea.public(), &challenges, 1, &mut rng),
            Err(PufError::ReadoutDisabled)
        ));
    }

    #[test]
    fn wrong_private_key_detected() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let ea = EaKeyPair::generate(&mut rng);
        let other = EaKeyPair::generate(&mut rng);
        let mut puf = ArbiterPuf::new(5, 0.0);
        let ct = secure_readout(&mut puf, &mut ReadoutFuse::default(), &ea.public(), &[1, 2, 3], 1, &mut rng).unwrap();
        assert!(matches!(other.decrypt(&ct), Err(PufError::ReadoutCorrupt)));
    }
}
