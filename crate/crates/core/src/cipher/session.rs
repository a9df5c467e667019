use std::collections::HashSet;

use thiserror::Error;

use super::{aead_decrypt, aead_encrypt, AeadAlgorithm, AeadKey, CipherError, Npub, NPUB_BYTES, TAG_BYTES};

const DIRECTION_BIT: u64 = 1 << 63;

/// Which side of the link a session endpoint sends from. The top counter bit
/// carries it, so the two directions never share an npub.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    TrustedToUntrusted,
    UntrustedToTrusted,
}

impl Direction {
    fn bit(self) -> u64 {
        match self {
            Direction::TrustedToUntrusted => 0,
            Direction::UntrustedToTrusted => DIRECTION_BIT,
        }
    }

    fn peer(self) -> Self {
        match self {
            Direction::TrustedToUntrusted => Direction::UntrustedToTrusted,
            Direction::UntrustedToTrusted => Direction::TrustedToUntrusted,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("npub reused under this key")]
    NpubReuse,
    #[error("npub from another session ({0:#x})")]
    WrongSession(u64),
    #[error("stale or replayed npub counter {0}")]
    Replay(u64),
    #[error("sealed payload too short")]
    Truncated,
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

/// One endpoint of an AEAD-protected link.
#[derive(Debug)]
pub struct AeadSession {
    alg: AeadAlgorithm,
    key: AeadKey,
    session_id: u64,
    direction: Direction,
    next_counter: u64,
    used: HashSet<u64>,
    last_received: Option<u64>,
}

impl AeadSession {
    pub fn new(alg: AeadAlgorithm, key: AeadKey, session_id: u64, direction: Direction) -> Self {
        Self { alg, key, session_id, direction, next_counter: 0, used: HashSet::new(), last_received: None }
    }

    pub fn algorithm(&self) -> AeadAlgorithm {
        self.alg
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    /// Encrypts under an explicit counter; a counter already used is refused.
    pub fn seal_with_counter(&mut self, counter: u64, ad: &[u8], msg: &[u8]) -> Result<Vec<u8>, SessionError> {
        let counter = (counter & !DIRECTION_BIT) | self.direction.bit();
        if !self.used.insert(counter) {
            return Err(SessionError::NpubReuse);
        }
        let npub = Npub { session_id: self.session_id, counter }.to_bytes();
        let c = aead_encrypt(self.alg, &self.key, &npub, ad, msg);
        let mut out = Vec::with_capacity(NPUB_BYTES + c.ct.len() + TAG_BYTES);
        out.extend_from_slice(&npub);
        out.extend_from_slice(&c.ct);
        out.extend_from_slice(&c.tag);
        Ok(out)
    }

    /// Encrypts under the next counter value. Output is `npub || ct || tag`.
    pub fn seal(&mut self, ad: &[u8], msg: &[u8]) -> Result<Vec<u8>, SessionError> {
        let counter = self.next_counter;
        self.next_counter += 1;
        self.seal_with_counter(counter, ad, msg)
    }

    /// Verifies and decrypts `npub || ct || tag` from the peer. Counters must
    /// strictly increase.
    pub fn open(&mut self, ad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, SessionError> {
        if sealed.len() < NPUB_BYTES + TAG_BYTES {
            return Err(SessionError::Truncated);
        }
        let npub: [u8; NPUB_BYTES] = sealed[..NPUB_BYTES].try_into().unwrap();
        let tag: [u8; TAG_BYTES] = sealed[sealed.len() - TAG_BYTES..].try_into().unwrap();
        let ct = &sealed[NPUB_BYTES..sealed.len() - TAG_BYTES];
        let pt = aead_decrypt(self.alg, &self.key, &npub, ad, ct, &tag)?;
        let n = Npub::from_bytes(&npub);
        if n.session_id != self.session_id {
            return Err(SessionError::WrongSession(n.session_id));
        }
        if n.counter & DIRECTION_BIT != self.direction.peer().bit() {
            return Err(SessionError::Replay(n.counter));
        }
        let c = n.counter & !DIRECTION_BIT;
        if self.last_received.is_some_and(|last| c <= last) {
            return Err(SessionError::Replay(c));
        }
        self.last_received = Some(c);
        Ok(pt)
    }
}
