//! Trusted/untrusted state machines: enrollment, activation (POK -> DPOK ->
//! unlock) and the DCC and LCC data channels over an in-process link.

mod chips;
mod circuit;
mod frame;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chips::{fabricate, hello_device_id, provision_pair, EnrollmentAuthority, TrustedChip, UntrustedChip};
pub use circuit::{ObfuscatedCircuit, SELF_CHECK_VECTORS};
pub use frame::{Frame, FrameError, FrameType, HEADER_LEN, MAX_FRAME};

use crate::bits::{self, Bits};
use crate::cipher::{AeadAlgorithm, SessionError};
use crate::costmodel::{CostError, CostParams};
use crate::puf::PufError;
use crate::rng::{PrngProfile, RngError};
use crate::switchnet::{NetworkTopology, SwitchNetError, Trn};

/// Most n-bit blocks carried by one data frame.
pub const FRAME_BLOCK_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("authentication failure: {0}")]
    AuthFailure(String),
    #[error("unlock failure: circuit self-check failed")]
    UnlockFailure,
    #[error("TRN epoch mismatch: expected {expected}, got {got}")]
    EpochMismatch { expected: u16, got: u16 },
    #[error("desynchronized: expected block {expected}, got {got}")]
    Desync { expected: u64, got: u64 },
    #[error("expected {expected}, got {got}")]
    UnexpectedFrame { expected: &'static str, got: String },
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("session not activated")]
    NotActivated,
    #[error("device not enrolled")]
    NotEnrolled,
    #[error("TRN epoch budget exhausted")]
    EpochExhausted,
    #[error("unknown device {0:?}")]
    UnknownDevice(String),
    #[error(transparent)]
    Health(#[from] RngError),
    #[error(transparent)]
    Puf(#[from] PufError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

impl From<SessionError> for ProtocolError {
    fn from(e: SessionError) -> Self {
        ProtocolError::AuthFailure(e.to_string())
    }
}

impl From<SwitchNetError> for ProtocolError {
    fn from(e: SwitchNetError) -> Self {
        ProtocolError::Malformed(e.to_string())
    }
}

impl From<CostError> for ProtocolError {
    fn from(e: CostError) -> Self {
        ProtocolError::Config(e.to_string())
    }
}

/// Session parameters. `cost` supplies n, U and the cycle constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub cost: CostParams,
    pub blocking: bool,
    pub alg: AeadAlgorithm,
    pub prng: PrngProfile,
    pub min_entropy: f64,
}

impl ProtocolConfig {
    /// AES-GCM with AES-CTR for the 128-bit/10-cycle generator, ACORN with
    /// Trivium for the 64-bit/cycle one.
    pub fn for_profile(cost: CostParams) -> Result<Self, ProtocolError> {
        cost.validate()?;
        let (alg, prng) = match (cost.prng_bits, cost.prng_cycles) {
            (128, 10) => (AeadAlgorithm::Aes128Gcm, PrngProfile::AesCtr),
            (64, 1) => (AeadAlgorithm::Acorn128, PrngProfile::Trivium),
            (b, c) => return Err(ProtocolError::Config(format!("no PRNG delivers {b} bits per {c} cycles"))),
        };
        let cfg = Self { cost, blocking: false, alg, prng, min_entropy: 1.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn coma2() -> Self {
        Self::for_profile(CostParams::coma2()).expect("builtin profile")
    }

    pub fn coma1() -> Self {
        Self::for_profile(CostParams::coma1()).expect("builtin profile")
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.cost.validate()?;
        if self.cost.u as usize > FRAME_BLOCK_LIMIT {
            return Err(ProtocolError::Config(format!("U = {} exceeds {FRAME_BLOCK_LIMIT}", self.cost.u)));
        }
        if !(self.min_entropy > 0.0 && self.min_entropy <= 1.0) {
            return Err(ProtocolError::Config("min-entropy must be in (0, 1]".into()));
        }
        self.topology().map(|_| ())
    }

    /// LCC never lets a full TRN configure n or more blocks.
    pub fn validate_lcc(&self) -> Result<(), ProtocolError> {
        if self.cost.u >= self.cost.n {
            return Err(ProtocolError::Config(format!("LCC needs U < n (U = {}, n = {})", self.cost.u, self.cost.n)));
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<NetworkTopology, ProtocolError> {
        let n = self.cost.n as usize;
        Ok(if self.blocking { NetworkTopology::omega(n)? } else { NetworkTopology::near_nonblocking(n)? })
    }
}

/// Cycles charged by an endpoint, split by engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleMeter {
    pub aead: u64,
    pub prng: u64,
    pub link: u64,
    pub stall: u64,
}

impl CycleMeter {
    pub fn total(&self) -> u64 {
        self.aead + self.prng + self.link + self.stall
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dir {
    #[serde(rename = "T->U")]
    ToUntrusted,
    #[serde(rename = "U->T")]
    ToTrusted,
}

/// One JSON line of a session transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Frame { seq: usize, dir: Dir, frame_type: String, epoch: u16, hex: String },
    Dal { trn: String, dpoks: Vec<String> },
    Result { success: bool, cycles_spent: u64, expected_cycles: u64, error: Option<String> },
    Channel { mode: String, bytes: u64, cycles: u64, expected_cycles: u64 },
}

impl TranscriptEntry {
    pub fn to_frame(&self) -> Option<Frame> {
        match self {
            TranscriptEntry::Frame { hex, .. } => Frame::decode(&hex::decode(hex).ok()?).ok().map(|(f, _)| f),
            _ => None,
        }
    }
}

pub fn transcript_jsonl(entries: &[TranscriptEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).expect("serializable") + "\n").collect()
}

pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptEntry>, ProtocolError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ProtocolError::Malformed(format!("transcript: {e}"))))
        .collect()
}

/// In-process wire: records every frame and can flip one bit of the n-th.
#[derive(Debug, Default)]
pub struct Link {
    pub transcript: Vec<TranscriptEntry>,
    tamper: Option<usize>,
    seq: usize,
}

impl Link {
    pub fn new() -> Self {
        Self::default()
    }

    /// Corrupts the frame with sequence number `seq` (0 = first frame).
    pub fn with_tamper(seq: usize) -> Self {
        Self { tamper: Some(seq), ..Self::default() }
    }

    pub fn carry(&mut self, dir: Dir, frame: Frame) -> Frame {
        let mut frame = frame;
        if self.tamper == Some(self.seq) {
            if frame.payload.is_empty() {
                frame.epoch ^= 1;
            } else {
                let at = frame.payload.len() / 2;
                frame.payload[at] ^= 0x01;
            }
        }
        self.transcript.push(TranscriptEntry::Frame {
            seq: self.seq,
            dir,
            frame_type: frame.ftype.name().to_string(),
            epoch: frame.epoch,
            hex: hex::encode(frame.encode().expect("frame within limits")),
        });
        self.seq += 1;
        frame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlockResult {
    pub success: bool,
    pub cycles_spent: u64,
}

/// HELLO, TRN_UPDATE, one DPOK per segment, ACK. Cycles are the trusted
/// side's spend for TRN generation and sealing.
pub fn activate(trusted: &mut TrustedChip, untrusted: &mut UntrustedChip) -> Result<UnlockResult, ProtocolError> {
    activate_over(trusted, untrusted, &mut Link::new())
}

pub fn activate_over(
    trusted: &mut TrustedChip,
    untrusted: &mut UntrustedChip,
    link: &mut Link,
) -> Result<UnlockResult, ProtocolError> {
    let before = trusted.meter().total();
    let hello = link.carry(Dir::ToTrusted, untrusted.hello("")?);
    trusted.start_session(&hello)?;
    let mut ack = None;
    for f in trusted.issue_license()? {
        let f = link.carry(Dir::ToUntrusted, f);
        if let Some(a) = untrusted.accept_license(&f)? {
            ack = Some(a);
        }
    }
    let cycles_spent = trusted.meter().total() - before;
    let ack = link.carry(Dir::ToTrusted, ack.ok_or(ProtocolError::UnlockFailure)?);
    trusted.finish(&ack)?;
    Ok(UnlockResult { success: true, cycles_spent })
}

/// DAL record for a transcript: the TRN and the DPOKs it produced.
pub fn dal_entry(trn: &Trn, dal: &[Bits]) -> TranscriptEntry {
    TranscriptEntry::Dal { trn: trn.to_hex(), dpoks: dal.iter().map(|d| bits::to_hex(d)).collect() }
}

/// Pulls the DAL out of a transcript.
pub fn transcript_dal(entries: &[TranscriptEntry], n: usize) -> Option<Vec<Bits>> {
    entries.iter().find_map(|e| match e {
        TranscriptEntry::Dal { dpoks, .. } => dpoks.iter().map(|h| bits::from_hex(h, n).ok()).collect(),
        _ => None,
    })
}

/// Runs a fresh activation, then feeds `dal` to the device under the new TRN.
/// Returns the outcome of the replayed unlock.
pub fn replay_dal(
    trusted: &mut TrustedChip,
    untrusted: &mut UntrustedChip,
    dal: &[Bits],
) -> Result<(), ProtocolError> {
    activate(trusted, untrusted)?;
    let trn = untrusted.current_trn().cloned().ok_or(ProtocolError::NotActivated)?;
    untrusted.unlock_from_dal(&trn, dal)
}

#[cfg(test)]
mod tests;
