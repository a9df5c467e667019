//! Trusted and untrusted endpoint state machines.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{
    CycleMeter, Frame, FrameType, ObfuscatedCircuit, ProtocolConfig, ProtocolError, FRAME_BLOCK_LIMIT,
};
use crate::bits::{self, Bits};
use crate::cipher::{AeadKey, AeadSession, Direction};
use crate::costmodel::t_comm_dcc;
use crate::puf::{self, ArbiterPuf, EaKeyPair, ReadoutCiphertext, ReadoutFuse, DEFAULT_NOISE};
use crate::rng::{EntropySourceModel, Prng, Trng};
use crate::switchnet::{csn_forward, rcsn_backward, NetworkTopology, Trn};

const NONCE_BYTES: usize = 16;
const META_BYTES: usize = 16;

/// Plaintext header of a TRN_UPDATE: zero segments marks an epoch refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TrnMeta {
    session_id: u64,
    ok_bits: u32,
    segments: u16,
    pad_bits: u16,
}

impl TrnMeta {
    fn to_bytes(self) -> [u8; META_BYTES] {
        let mut b = [0u8; META_BYTES];
        b[..8].copy_from_slice(&self.session_id.to_le_bytes());
        b[8..12].copy_from_slice(&self.ok_bits.to_le_bytes());
        b[12..14].copy_from_slice(&self.segments.to_le_bytes());
        b[14..].copy_from_slice(&self.pad_bits.to_le_bytes());
        b
    }

    fn parse(b: &[u8]) -> Result<Self, ProtocolError> {
        if b.len() < META_BYTES {
            return Err(ProtocolError::Malformed("TRN_UPDATE too short".into()));
        }
        Ok(Self {
            session_id: u64::from_le_bytes(b[..8].try_into().unwrap()),
            ok_bits: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            segments: u16::from_le_bytes(b[12..14].try_into().unwrap()),
            pad_bits: u16::from_le_bytes(b[14..16].try_into().unwrap()),
        })
    }
}

fn expect(frame: &Frame, t: FrameType) -> Result<(), ProtocolError> {
    if frame.ftype != t {
        return Err(ProtocolError::UnexpectedFrame { expected: t.name(), got: frame.ftype.name().into() });
    }
    Ok(())
}

fn cat(parts: &[&[u8]]) -> Vec<u8> {
    parts.concat()
}

fn u32_at(b: &[u8], at: usize) -> Result<u32, ProtocolError> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
        .ok_or_else(|| ProtocolError::Malformed("short payload".into()))
}

/// Message being reassembled from data frames.
#[derive(Debug)]
struct Inbound {
    len: usize,
    blocks: Bits,
}

#[derive(Debug)]
struct LccState {
    prng: Prng,
    trn: Trn,
    counter: u64,
}

/// Link state both chips keep once a session exists.
#[derive(Debug)]
pub(crate) struct Channel {
    cfg: ProtocolConfig,
    topology: NetworkTopology,
    session: Option<AeadSession>,
    nonce: [u8; NONCE_BYTES],
    trn: Option<Trn>,
    epoch: u16,
    epoch_blocks: u64,
    dcc_rx: Option<Inbound>,
    lcc: Option<LccState>,
    lcc_rx: Option<Inbound>,
    meter: CycleMeter,
}

impl Channel {
    fn new(cfg: ProtocolConfig) -> Result<Self, ProtocolError> {
        let topology = cfg.topology()?;
        Ok(Self {
            cfg,
            topology,
            session: None,
            nonce: [0; NONCE_BYTES],
            trn: None,
            epoch: 0,
            epoch_blocks: 0,
            dcc_rx: None,
            lcc: None,
            lcc_rx: None,
            meter: CycleMeter::default(),
        })
    }

    fn clear(&mut self) {
        self.session = None;
        self.nonce = [0; NONCE_BYTES];
        self.trn = None;
        self.epoch = 0;
        self.epoch_blocks = 0;
        self.dcc_rx = None;
        self.lcc = None;
        self.lcc_rx = None;
    }

    fn n(&self) -> usize {
        self.topology.n()
    }

    fn session(&mut self) -> Result<&mut AeadSession, ProtocolError> {
        self.session.as_mut().ok_or(ProtocolError::NotActivated)
    }

    /// Seals and charges the AEAD cost of `msg` to the meter.
    fn seal(&mut self, ad: &[u8], msg: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        let sealed = self.session()?.seal(ad, msg)?;
        self.meter.aead += t_comm_dcc(&self.cfg.cost, msg.len() as u64);
        Ok(sealed)
    }

    fn open(&mut self, ad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        Ok(self.session()?.open(ad, sealed)?)
    }

    fn trn_update_frame(&mut self, epoch: u16, meta: TrnMeta, trn: &Trn) -> Result<Frame, ProtocolError> {
        let meta = meta.to_bytes();
        let ad = cat(&[&Frame::header_ad(FrameType::TrnUpdate, epoch), &self.nonce, &meta]);
        let sealed = self.seal(&ad, &trn.to_bytes())?;
        Ok(Frame::new(FrameType::TrnUpdate, epoch, cat(&[&meta, &sealed])))
    }

    fn open_trn_update(&mut self, frame: &Frame) -> Result<(TrnMeta, Trn), ProtocolError> {
        expect(frame, FrameType::TrnUpdate)?;
        let meta = TrnMeta::parse(&frame.payload)?;
        let ad = cat(&[&Frame::header_ad(frame.ftype, frame.epoch), &self.nonce, &frame.payload[..META_BYTES]]);
        let pt = self.open(&ad, &frame.payload[META_BYTES..])?;
        let trn = Trn::from_bytes(&pt, &self.topology).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        Ok((meta, trn))
    }

    fn blocks_of(&self, msg: &[u8]) -> Vec<Bits> {
        let n = self.n();
        let mut all = Bits::from_slice(msg);
        let count = all.len().div_ceil(n).max(1);
        all.resize(count * n, false);
        all.chunks(n).map(|c| c.to_bitvec()).collect()
    }

    fn dcc_data_frame(&mut self, msg_len: usize, offset: usize, chunk: &[Bits]) -> Result<Frame, ProtocolError> {
        let trn = self.trn.clone().ok_or(ProtocolError::NotActivated)?;
        let mut body = Bits::new();
        for block in chunk {
            body.extend_from_bitslice(&csn_forward(&self.topology, &trn, block)?);
        }
        let head = cat(&[&(msg_len as u32).to_le_bytes(), &(offset as u32).to_le_bytes()]);
        let ad = cat(&[&Frame::header_ad(FrameType::DataDcc, self.epoch), &self.nonce, &head]);
        let sealed = self.seal(&ad, &bits::to_bytes(&body))?;
        self.epoch_blocks += chunk.len() as u64;
        Ok(Frame::new(FrameType::DataDcc, self.epoch, cat(&[&head, &sealed])))
    }

    /// Splits `msg` into sealed chunks of at most U blocks, calling `refresh`
    /// whenever the epoch budget is spent.
    fn dcc_send(
        &mut self,
        msg: &[u8],
        mut refresh: impl FnMut(&mut Self) -> Result<Frame, ProtocolError>,
    ) -> Result<Vec<Frame>, ProtocolError> {
        if self.trn.is_none() {
            return Err(ProtocolError::NotActivated);
        }
        let u = self.cfg.cost.u as usize;
        let blocks = self.blocks_of(msg);
        let mut frames = Vec::new();
        let mut at = 0;
        while at < blocks.len() {
            if self.epoch_blocks >= u as u64 {
                frames.push(refresh(self)?);
            }
            let room = (u - self.epoch_blocks as usize).min(FRAME_BLOCK_LIMIT);
            let take = room.min(blocks.len() - at);
            frames.push(self.dcc_data_frame(msg.len(), at, &blocks[at..at + take])?);
            at += take;
        }
        Ok(frames)
    }

    /// Accepts a DCC data frame or an epoch refresh; returns a message once
    /// its last block arrives.
    fn dcc_recv(&mut self, frame: &Frame) -> Result<Option<Vec<u8>>, ProtocolError> {
        match frame.ftype {
            FrameType::TrnUpdate => {
                let expected = self.epoch.wrapping_add(1);
                if frame.epoch != expected {
                    return Err(ProtocolError::EpochMismatch { expected, got: frame.epoch });
                }
                let (meta, trn) = self.open_trn_update(frame)?;
                if meta.segments != 0 {
                    return Err(ProtocolError::Malformed("activation TRN inside a data stream".into()));
                }
                self.trn = Some(trn);
                self.epoch = frame.epoch;
                self.epoch_blocks = 0;
                Ok(None)
            }
            FrameType::DataDcc => {
                if frame.epoch != self.epoch {
                    return Err(ProtocolError::EpochMismatch { expected: self.epoch, got: frame.epoch });
                }
                let msg_len = u32_at(&frame.payload, 0)? as usize;
                let offset = u32_at(&frame.payload, 4)? as usize;
                let ad = cat(&[&Frame::header_ad(frame.ftype, frame.epoch), &self.nonce, &frame.payload[..8]]);
                let pt = self.open(&ad, &frame.payload[8..])?;
                let trn = self.trn.clone().ok_or(ProtocolError::NotActivated)?;
                let n = self.n();
                if pt.len() % (n / 8) != 0 {
                    return Err(ProtocolError::Malformed("partial block".into()));
                }
                let rx = self.dcc_rx.get_or_insert_with(|| Inbound { len: msg_len, blocks: Bits::new() });
                if rx.len != msg_len || rx.blocks.len() != offset * n {
                    return Err(ProtocolError::Desync { expected: (rx.blocks.len() / n) as u64, got: offset as u64 });
                }
                let body = Bits::from_vec(pt);
                for block in body.chunks(n) {
                    rx.blocks.extend_from_bitslice(&rcsn_backward(&self.topology, &trn, block)?);
                }
                self.epoch_blocks += (body.len() / n) as u64;
                Ok(finish_inbound(&mut self.dcc_rx, n))
            }
            other => Err(ProtocolError::UnexpectedFrame { expected: "DATA_DCC", got: other.name().into() }),
        }
    }

    fn lcc_seed(&mut self, seed: &[u8; 16]) -> Result<(), ProtocolError> {
        self.cfg.validate_lcc()?;
        let mut prng = Prng::new(self.cfg.prng);
        prng.seed(seed)?;
        let trn = Trn::new(prng.next_bits(self.topology.config_bits())?, &self.topology)?;
        self.meter.prng += prng.cycles();
        self.lcc = Some(LccState { prng, trn, counter: 0 });
        self.lcc_rx = None;
        Ok(())
    }

    /// Configuration for the next LCC block, refreshing the TRN every U blocks.
    fn lcc_next_trn(&mut self) -> Result<Trn, ProtocolError> {
        let u = self.cfg.cost.u;
        let cpb = self.cfg.cost.cycles_per_block();
        let config_bits = self.topology.config_bits();
        let lcc = self.lcc.as_mut().ok_or(ProtocolError::NotActivated)?;
        let j = lcc.counter % u;
        if lcc.counter > 0 && j == 0 {
            let before = lcc.prng.cycles();
            lcc.trn = Trn::from_bits(lcc.prng.next_bits(config_bits)?);
            // generation overlaps the previous epoch's U blocks
            self.meter.stall += (lcc.prng.cycles() - before).saturating_sub(u * cpb);
        }
        lcc.counter += 1;
        self.meter.link += cpb;
        Ok(lcc.trn.shifted(j as usize))
    }

    fn lcc_send(&mut self, msg: &[u8]) -> Result<Vec<Frame>, ProtocolError> {
        let blocks = self.blocks_of(msg);
        let mut frames = Vec::new();
        for (i, chunk) in blocks.chunks(FRAME_BLOCK_LIMIT).enumerate() {
            let start = self.lcc.as_ref().ok_or(ProtocolError::NotActivated)?.counter;
            let mut body = Bits::new();
            for block in chunk {
                let trn = self.lcc_next_trn()?;
                body.extend_from_bitslice(&csn_forward(&self.topology, &trn, block)?);
            }
            let offset = (i * FRAME_BLOCK_LIMIT) as u32;
            let payload =
                cat(&[&start.to_le_bytes(), &(msg.len() as u32).to_le_bytes(), &offset.to_le_bytes(), &bits::to_bytes(&body)]);
            frames.push(Frame::new(FrameType::DataLcc, (start / self.cfg.cost.u) as u16, payload));
        }
        Ok(frames)
    }

    fn lcc_recv(&mut self, frame: &Frame) -> Result<Option<Vec<u8>>, ProtocolError> {
        expect(frame, FrameType::DataLcc)?;
        let p = &frame.payload;
        if p.len() < 16 {
            return Err(ProtocolError::Malformed("DATA_LCC too short".into()));
        }
        let start = u64::from_le_bytes(p[..8].try_into().unwrap());
        let msg_len = u32_at(p, 8)? as usize;
        let offset = u32_at(p, 12)? as usize;
        let counter = self.lcc.as_ref().ok_or(ProtocolError::NotActivated)?.counter;
        if start != counter {
            return Err(ProtocolError::Desync { expected: counter, got: start });
        }
        let n = self.n();
        if (p.len() - 16) % (n / 8) != 0 {
            return Err(ProtocolError::Malformed("partial block".into()));
        }
        let rx = self.lcc_rx.get_or_insert_with(|| Inbound { len: msg_len, blocks: Bits::new() });
        if rx.len != msg_len || rx.blocks.len() != offset * n {
            return Err(ProtocolError::Desync { expected: counter, got: start });
        }
        let body = Bits::from_slice(&p[16..]);
        for block in body.chunks(n) {
            let trn = self.lcc_next_trn()?;
            let plain = rcsn_backward(&self.topology, &trn, block)?;
            self.lcc_rx.as_mut().unwrap().blocks.extend_from_bitslice(&plain);
        }
        Ok(finish_inbound(&mut self.lcc_rx, n))
    }
}

fn finish_inbound(slot: &mut Option<Inbound>, n: usize) -> Option<Vec<u8>> {
    let rx = slot.as_ref()?;
    let want = (rx.len * 8).div_ceil(n).max(1) * n;
    if rx.blocks.len() < want {
        return None;
    }
    let rx = slot.take().unwrap();
    let mut bytes = bits::to_bytes(&rx.blocks);
    bytes.truncate(rx.len);
    Some(bytes)
}

/// Trusted chip: secure store (OK, SK, challenge), TRNG, PRNG and CSN.
#[derive(Debug)]
pub struct TrustedChip {
    ch: Channel,
    ok: Bits,
    sk: AeadKey,
    challenge: u64,
    trng: Trng,
    prng: Prng,
    activations: u64,
    last_dal: Vec<Bits>,
}

impl TrustedChip {
    pub fn new(cfg: ProtocolConfig, ok: Bits, sk: AeadKey, challenge: u64, trng: Trng) -> Result<Self, ProtocolError> {
        let prng = Prng::new(cfg.prng);
        Ok(Self { ch: Channel::new(cfg)?, ok, sk, challenge, trng, prng, activations: 0, last_dal: Vec::new() })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.ch.cfg
    }

    pub fn meter(&self) -> CycleMeter {
        self.ch.meter
    }

    pub fn trng_mut(&mut self) -> &mut Trng {
        &mut self.trng
    }

    pub fn challenge(&self) -> u64 {
        self.challenge
    }

    pub fn current_trn(&self) -> Option<&Trn> {
        self.ch.trn.as_ref()
    }

    pub fn epoch(&self) -> u16 {
        self.ch.epoch
    }

    pub fn activations(&self) -> u64 {
        self.activations
    }

    pub fn session_id(&self) -> Option<u64> {
        self.ch.session.as_ref().map(|s| s.session_id())
    }

    /// Plaintext DPOKs of the most recent activation (an insider's view).
    pub fn last_dal(&self) -> &[Bits] {
        &self.last_dal
    }

    /// Opens a session for the device's HELLO, with an id drawn from the TRNG.
    pub fn start_session(&mut self, hello: &Frame) -> Result<(), ProtocolError> {
        expect(hello, FrameType::Hello)?;
        let nonce = hello_nonce(hello)?;
        let id = u64::from_le_bytes(self.trng.next_bytes(8)?.try_into().unwrap());
        self.ch.clear();
        self.ch.nonce = nonce;
        self.ch.session = Some(AeadSession::new(self.ch.cfg.alg, self.sk.clone(), id, Direction::TrustedToUntrusted));
        Ok(())
    }

    /// CHALLENGE frame carrying the session id and fresh auxiliary challenges.
    pub fn challenge_frame(&mut self, aux: &[u64]) -> Result<Frame, ProtocolError> {
        let id = self.ch.session()?.session_id();
        let mut payload = cat(&[&id.to_le_bytes(), &[aux.len() as u8]]);
        for c in aux {
            payload.extend_from_slice(&c.to_le_bytes());
        }
        Ok(Frame::new(FrameType::Challenge, 0, payload))
    }

    /// Checks an AUTH frame sealed under SK; returns the device's responses.
    pub fn verify_auth(&mut self, frame: &Frame, aux: &[u64]) -> Result<Vec<bool>, ProtocolError> {
        expect(frame, FrameType::Auth)?;
        let ad = cat(&[&Frame::header_ad(frame.ftype, frame.epoch), &self.ch.nonce]);
        let pt = self.ch.open(&ad, &frame.payload)?;
        if pt.len() != aux.len().div_ceil(8) {
            return Err(ProtocolError::Malformed("AUTH response length".into()));
        }
        Ok(bits::from_bytes(&pt, aux.len()).iter().by_vals().collect())
    }

    /// Draws a fresh TRN and emits TRN_UPDATE followed by one DPOK per segment.
    pub fn issue_license(&mut self) -> Result<Vec<Frame>, ProtocolError> {
        self.ch.session()?;
        self.prng.new_activation();
        let seed = self.trng.seed128()?;
        self.prng.seed(&seed)?;
        let trn = draw_trn(&mut self.ch, &mut self.prng)?;
        let n = self.ch.n();
        let segments = self.ok.len().div_ceil(n);
        let mut padded = self.ok.clone();
        padded.resize(segments * n, false);
        let meta = TrnMeta {
            session_id: self.ch.session()?.session_id(),
            ok_bits: self.ok.len() as u32,
            segments: segments as u16,
            pad_bits: (segments * n - self.ok.len()) as u16,
        };
        self.ch.epoch = 0;
        let mut frames = vec![self.ch.trn_update_frame(0, meta, &trn)?];
        self.last_dal.clear();
        for (i, pok) in padded.chunks(n).enumerate() {
            let dpok = csn_forward(&self.ch.topology, &trn, pok)?;
            let idx = (i as u16).to_le_bytes();
            let ad = cat(&[&Frame::header_ad(FrameType::Dpok, 0), &self.ch.nonce, &idx]);
            let sealed = self.ch.seal(&ad, &bits::to_bytes(&dpok))?;
            frames.push(Frame::new(FrameType::Dpok, 0, cat(&[&idx, &sealed])));
            self.last_dal.push(dpok);
        }
        self.ch.trn = Some(trn);
        self.ch.epoch_blocks = segments as u64;
        Ok(frames)
    }

    /// Verifies the device's ACK and counts the activation.
    pub fn finish(&mut self, ack: &Frame) -> Result<(), ProtocolError> {
        expect(ack, FrameType::Ack)?;
        let ad = cat(&[&Frame::header_ad(ack.ftype, ack.epoch), &self.ch.nonce]);
        let pt = self.ch.open(&ad, &ack.payload)?;
        if pt.first() != Some(&0) {
            return Err(ProtocolError::UnlockFailure);
        }
        self.activations += 1;
        Ok(())
    }

    /// Replaces the DCC TRN and returns the TRN_UPDATE announcing it.
    pub fn refresh_trn(&mut self) -> Result<Frame, ProtocolError> {
        refresh(&mut self.ch, &mut self.prng)
    }

    pub fn dcc_send(&mut self, msg: &[u8]) -> Result<Vec<Frame>, ProtocolError> {
        let prng = &mut self.prng;
        self.ch.dcc_send(msg, |ch| refresh(ch, prng))
    }

    pub fn dcc_recv(&mut self, frame: &Frame) -> Result<Option<Vec<u8>>, ProtocolError> {
        self.ch.dcc_recv(frame)
    }

    /// Seeds both LCC PRNGs: draws a 16-byte seed and sends it sealed.
    pub fn lcc_init(&mut self) -> Result<Frame, ProtocolError> {
        self.ch.cfg.validate_lcc()?;
        let seed = self.trng.seed128()?;
        let ad = cat(&[&Frame::header_ad(FrameType::Seed, 0), &self.ch.nonce]);
        let sealed = self.ch.seal(&ad, &seed)?;
        self.ch.lcc_seed(&seed)?;
        Ok(Frame::new(FrameType::Seed, 0, sealed))
    }

    pub fn lcc_send(&mut self, msg: &[u8]) -> Result<Vec<Frame>, ProtocolError> {
        self.ch.lcc_send(msg)
    }

    pub fn lcc_recv(&mut self, frame: &Frame) -> Result<Option<Vec<u8>>, ProtocolError> {
        self.ch.lcc_recv(frame)
    }
}

fn draw_trn(ch: &mut Channel, prng: &mut Prng) -> Result<Trn, ProtocolError> {
    let before = prng.cycles();
    let trn = Trn::new(prng.next_bits(ch.topology.config_bits())?, &ch.topology)?;
    ch.meter.prng += prng.cycles() - before;
    Ok(trn)
}

fn refresh(ch: &mut Channel, prng: &mut Prng) -> Result<Frame, ProtocolError> {
    let trn = draw_trn(ch, prng)?;
    let epoch = ch.epoch.wrapping_add(1);
    let meta = TrnMeta { session_id: ch.session()?.session_id(), ok_bits: 0, segments: 0, pad_bits: 0 };
    let frame = ch.trn_update_frame(epoch, meta, &trn)?;
    ch.trn = Some(trn);
    ch.epoch = epoch;
    ch.epoch_blocks = 0;
    Ok(frame)
}

fn hello_nonce(hello: &Frame) -> Result<[u8; NONCE_BYTES], ProtocolError> {
    hello
        .payload
        .get(..NONCE_BYTES)
        .map(|s| s.try_into().unwrap())
        .ok_or_else(|| ProtocolError::Malformed("HELLO too short".into()))
}

/// Device id carried after the nonce in a HELLO.
pub fn hello_device_id(hello: &Frame) -> Result<String, ProtocolError> {
    hello_nonce(hello)?;
    String::from_utf8(hello.payload[NONCE_BYTES..].to_vec()).map_err(|_| ProtocolError::Malformed("device id".into()))
}

#[derive(Debug)]
struct Staging {
    meta: TrnMeta,
    trn: Trn,
    dpoks: Vec<Bits>,
}

/// Untrusted chip: PUF, hardwired challenge and the locked circuit. Every
/// key it holds is volatile.
#[derive(Debug)]
pub struct UntrustedChip {
    ch: Channel,
    puf: ArbiterPuf,
    fuse: ReadoutFuse,
    challenge: Option<u64>,
    circuit: ObfuscatedCircuit,
    rng: ChaCha20Rng,
    sk: Option<AeadKey>,
    staging: Option<Staging>,
    captured: Vec<Bits>,
}

impl UntrustedChip {
    pub fn new(cfg: ProtocolConfig, device_seed: u64, circuit: ObfuscatedCircuit) -> Result<Self, ProtocolError> {
        Ok(Self {
            ch: Channel::new(cfg)?,
            puf: ArbiterPuf::new(device_seed, DEFAULT_NOISE),
            fuse: ReadoutFuse::default(),
            challenge: None,
            circuit,
            rng: ChaCha20Rng::seed_from_u64(device_seed ^ 0x5eed),
            sk: None,
            staging: None,
            captured: Vec::new(),
        })
    }

    pub fn meter(&self) -> CycleMeter {
        self.ch.meter
    }

    pub fn circuit(&self) -> &ObfuscatedCircuit {
        &self.circuit
    }

    pub fn puf_mut(&mut self) -> &mut ArbiterPuf {
        &mut self.puf
    }

    pub fn challenge(&self) -> Option<u64> {
        self.challenge
    }

    pub fn current_trn(&self) -> Option<&Trn> {
        self.ch.trn.as_ref()
    }

    pub fn epoch(&self) -> u16 {
        self.ch.epoch
    }

    /// DPOKs received in the last activation.
    pub fn captured_dal(&self) -> &[Bits] {
        &self.captured
    }

    /// One-time encrypted readout of the PUF responses for `challenges`.
    pub fn secure_readout(&mut self, ea_public: &[u8; 32], challenges: &[u64], votes: u8) -> Result<ReadoutCiphertext, ProtocolError> {
        Ok(puf::secure_readout(&mut self.puf, &mut self.fuse, ea_public, challenges, votes, &mut self.rng)?)
    }

    pub fn hardwire(&mut self, challenge: u64) {
        self.challenge = Some(challenge);
    }

    /// Power loss: SK, TRN, session and the circuit key all vanish.
    pub fn reset(&mut self) {
        self.ch.clear();
        self.sk = None;
        self.staging = None;
        self.circuit.clear_key();
    }

    /// Derives SK from the PUF and opens with a HELLO.
    pub fn hello(&mut self, device_id: &str) -> Result<Frame, ProtocolError> {
        let challenge = self.challenge.ok_or(ProtocolError::NotEnrolled)?;
        let sk = puf::derive_key(&mut self.puf, challenge)?;
        self.reset();
        self.sk = Some(AeadKey::new(sk));
        let mut nonce = [0u8; NONCE_BYTES];
        self.rng.fill_bytes(&mut nonce);
        self.ch.nonce = nonce;
        Ok(Frame::new(FrameType::Hello, 0, cat(&[&nonce, device_id.as_bytes()])))
    }

    fn join_session(&mut self, id: u64) -> Result<(), ProtocolError> {
        match &self.ch.session {
            Some(s) if s.session_id() == id => Ok(()),
            Some(s) => Err(ProtocolError::AuthFailure(format!("session {id:#x} != {:#x}", s.session_id()))),
            None => {
                let sk = self.sk.clone().ok_or(ProtocolError::NotActivated)?;
                self.ch.session = Some(AeadSession::new(self.ch.cfg.alg, sk, id, Direction::UntrustedToTrusted));
                Ok(())
            }
        }
    }

    /// Answers a CHALLENGE with PUF responses sealed under SK.
    pub fn answer_challenge(&mut self, frame: &Frame) -> Result<Frame, ProtocolError> {
        expect(frame, FrameType::Challenge)?;
        let p = &frame.payload;
        let count = *p.get(8).ok_or_else(|| ProtocolError::Malformed("CHALLENGE too short".into()))? as usize;
        if p.len() != 9 + 8 * count {
            return Err(ProtocolError::Malformed("CHALLENGE length".into()));
        }
        self.join_session(u64::from_le_bytes(p[..8].try_into().unwrap()))?;
        let responses: Bits = p[9..]
            .chunks(8)
            .map(|c| {
                let c = u64::from_le_bytes(c.try_into().unwrap());
                2 * self.puf.count_ones(c, puf::DEFAULT_VOTES) > puf::DEFAULT_VOTES
            })
            .collect();
        let ad = cat(&[&Frame::header_ad(FrameType::Auth, 0), &self.ch.nonce]);
        let sealed = self.ch.seal(&ad, &bits::to_bytes(&responses))?;
        Ok(Frame::new(FrameType::Auth, 0, sealed))
    }

    /// Consumes activation frames; returns the ACK once the circuit unlocks.
    pub fn accept_license(&mut self, frame: &Frame) -> Result<Option<Frame>, ProtocolError> {
        match frame.ftype {
            FrameType::TrnUpdate => {
                let meta = TrnMeta::parse(&frame.payload)?;
                if meta.segments == 0 || frame.epoch != 0 {
                    return Err(ProtocolError::Malformed("not an activation TRN".into()));
                }
                self.join_session(meta.session_id)?;
                let (meta, trn) = self.ch.open_trn_update(frame)?;
                let n = self.ch.n();
                if meta.ok_bits as usize != self.circuit.key_bits()
                    || meta.segments as usize * n != meta.ok_bits as usize + meta.pad_bits as usize
                {
                    return Err(ProtocolError::Malformed("license shape".into()));
                }
                self.staging = Some(Staging { meta, trn, dpoks: Vec::new() });
                Ok(None)
            }
            FrameType::Dpok => {
                let st = self.staging.as_ref().ok_or(ProtocolError::UnexpectedFrame {
                    expected: "TRN_UPDATE",
                    got: "DPOK".into(),
                })?;
                let p = &frame.payload;
                if p.len() < 2 {
                    return Err(ProtocolError::Malformed("DPOK too short".into()));
                }
                let idx = u16::from_le_bytes([p[0], p[1]]);
                if idx as usize != st.dpoks.len() || frame.epoch != 0 {
                    return Err(ProtocolError::Desync { expected: st.dpoks.len() as u64, got: u64::from(idx) });
                }
                let ad = cat(&[&Frame::header_ad(frame.ftype, frame.epoch), &self.ch.nonce, &p[..2]]);
                let pt = self.ch.open(&ad, &p[2..])?;
                let n = self.ch.n();
                if pt.len() != n / 8 {
                    return Err(ProtocolError::Malformed("DPOK width".into()));
                }
                let st = self.staging.as_mut().unwrap();
                st.dpoks.push(bits::from_bytes(&pt, n));
                if st.dpoks.len() < st.meta.segments as usize {
                    return Ok(None);
                }
                let st = self.staging.take().unwrap();
                self.captured = st.dpoks.clone();
                self.unlock_from_dal(&st.trn, &st.dpoks)?;
                self.ch.trn = Some(st.trn);
                self.ch.epoch = 0;
                self.ch.epoch_blocks = st.meta.segments as u64;
                let ad = cat(&[&Frame::header_ad(FrameType::Ack, 0), &self.ch.nonce]);
                let sealed = self.ch.session()?.seal(&ad, &[0])?;
                Ok(Some(Frame::new(FrameType::Ack, 0, sealed)))
            }
            other => Err(ProtocolError::UnexpectedFrame { expected: "TRN_UPDATE", got: other.name().into() }),
        }
    }

    /// RCSN each DPOK under `trn`, assemble OK' and commit it only if the
    /// circuit passes its self-check.
    pub fn unlock_from_dal(&mut self, trn: &Trn, dal: &[Bits]) -> Result<(), ProtocolError> {
        let mut ok = Bits::new();
        for dpok in dal {
            ok.extend_from_bitslice(&rcsn_backward(&self.ch.topology, trn, dpok)?);
        }
        if ok.len() < self.circuit.key_bits() {
            self.circuit.clear_key();
            return Err(ProtocolError::UnlockFailure);
        }
        ok.truncate(self.circuit.key_bits());
        self.circuit.load_key(ok);
        if !self.circuit.self_check() {
            self.circuit.clear_key();
            return Err(ProtocolError::UnlockFailure);
        }
        Ok(())
    }

    /// Sends within the current epoch; only the trusted side can refresh.
    pub fn dcc_send(&mut self, msg: &[u8]) -> Result<Vec<Frame>, ProtocolError> {
        self.ch.dcc_send(msg, |_| Err(ProtocolError::EpochExhausted))
    }

    pub fn dcc_recv(&mut self, frame: &Frame) -> Result<Option<Vec<u8>>, ProtocolError> {
        self.ch.dcc_recv(frame)
    }

    pub fn lcc_accept(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        expect(frame, FrameType::Seed)?;
        let ad = cat(&[&Frame::header_ad(frame.ftype, frame.epoch), &self.ch.nonce]);
        let pt = self.ch.open(&ad, &frame.payload)?;
        let seed: [u8; 16] = pt.try_into().map_err(|_| ProtocolError::Malformed("seed width".into()))?;
        self.ch.lcc_seed(&seed)
    }

    pub fn lcc_send(&mut self, msg: &[u8]) -> Result<Vec<Frame>, ProtocolError> {
        self.ch.lcc_send(msg)
    }

    pub fn lcc_recv(&mut self, frame: &Frame) -> Result<Option<Vec<u8>>, ProtocolError> {
        self.ch.lcc_recv(frame)
    }
}

/// Holds the readout private key and picks each device's challenge.
pub struct EnrollmentAuthority {
    keys: EaKeyPair,
    rng: ChaCha20Rng,
    candidates: usize,
}

impl EnrollmentAuthority {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self { keys: EaKeyPair::generate(&mut rng), rng, candidates: 8 }
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.keys.public()
    }

    /// Reads out several candidate challenges and keeps the one whose key
    /// bits have the widest vote margin.
    pub fn enroll(&mut self, device: &mut UntrustedChip, device_id: &str) -> Result<puf::EnrollmentRecord, ProtocolError> {
        let bases: Vec<u64> = (0..self.candidates).map(|_| self.rng.gen::<u64>()).collect();
        let list: Vec<u64> =
            bases.iter().flat_map(|&b| (0..puf::KEY_BITS).map(move |i| puf::expansion_challenge(b, i))).collect();
        let ct = device.secure_readout(&self.keys.public(), &list, puf::DEFAULT_VOTES)?;
        let entries = self.keys.decrypt(&ct)?;
        let (best, sk) = entries
            .chunks(puf::KEY_BITS)
            .zip(&bases)
            .map(|(chunk, &base)| {
                let margin = chunk.iter().map(|e| (2 * i32::from(e.ones) - i32::from(e.votes)).abs()).min().unwrap_or(0);
                let mut sk = [0u8; 16];
                for (i, e) in chunk.iter().enumerate() {
                    if e.response() {
                        sk[i / 8] |= 1 << (i % 8);
                    }
                }
                (margin, base, sk)
            })
            .max_by_key(|&(margin, base, _)| (margin, std::cmp::Reverse(base)))
            .map(|(_, base, sk)| (base, sk))
            .expect("at least one candidate");
        device.hardwire(best);
        Ok(puf::EnrollmentRecord {
            device_id: device_id.to_string(),
            challenge: format!("{best:016x}"),
            sk: hex::encode(sk),
            sk_encrypted_at_rest: false,
            ea_public_key: hex::encode(self.keys.public()),
        })
    }
}

/// Design-house circuit plus a fabricated, not yet enrolled device; both
/// derived from `seed`. Returns the device and the correct OK.
pub fn fabricate(cfg: &ProtocolConfig, seed: u64) -> Result<(UntrustedChip, Bits), ProtocolError> {
    let (circuit, ok) = ObfuscatedCircuit::default_payload(seed);
    let device = UntrustedChip::new(cfg.clone(), seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 1, circuit)?;
    Ok((device, ok))
}

/// Fabrication, enrollment and a provisioned trusted chip, all from `seed`.
pub fn provision_pair(cfg: &ProtocolConfig, seed: u64) -> Result<(TrustedChip, UntrustedChip), ProtocolError> {
    let (mut device, ok) = fabricate(cfg, seed)?;
    let mut ea = EnrollmentAuthority::new(seed ^ 0xea);
    let record = ea.enroll(&mut device, &format!("dev-{seed}"))?;
    let sk = AeadKey::new(record.sk_bytes().expect("fresh record"));
    let trng = Trng::new(EntropySourceModel::unbiased(seed ^ 0x7a9), cfg.min_entropy);
    let trusted = TrustedChip::new(cfg.clone(), ok, sk, record.challenge_value().expect("fresh record"), trng)?;
    Ok((trusted, device))
}
