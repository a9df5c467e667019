//! Wire frame shared by the in-process link and TCP transport.
//!
//! ```text
//! length: u32 BE  (= payload length + 3)
//! type:   u8
//! epoch:  u16 BE
//! payload
//! ```
//! Integers inside payloads are little-endian.

use std::io::{Read, Write};

use thiserror::Error;

/// Largest value of the length field.
pub const MAX_FRAME: usize = 64 * 1024;
pub const HEADER_LEN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 1,
    Challenge = 2,
    Auth = 3,
    TrnUpdate = 4,
    Dpok = 5,
    Seed = 6,
    DataDcc = 7,
    DataLcc = 8,
    Ack = 9,
    Error = 255,
}

impl FrameType {
    pub fn from_u8(b: u8) -> Option<Self> {
        use FrameType::*;
        Some(match b {
            1 => Hello,
            2 => Challenge,
            3 => Auth,
            4 => TrnUpdate,
            5 => Dpok,
            6 => Seed,
            7 => DataDcc,
            8 => DataLcc,
            9 => Ack,
            255 => Error,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        use FrameType::*;
        match self {
            Hello => "HELLO",
            Challenge => "CHALLENGE",
            Auth => "AUTH",
            TrnUpdate => "TRN_UPDATE",
            Dpok => "DPOK",
            Seed => "SEED",
            DataDcc => "DATA_DCC",
            DataLcc => "DATA_LCC",
            Ack => "ACK",
            Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub ftype: FrameType,
    pub epoch: u16,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("need {0} more bytes")]
    Incomplete(usize),
    #[error("length field {0} out of range")]
    BadLength(u32),
    #[error("unknown frame type {0}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds the frame limit")]
    TooLarge(usize),
    #[error("i/o: {0}")]
    Io(String),
}

impl Frame {
    pub fn new(ftype: FrameType, epoch: u16, payload: Vec<u8>) -> Self {
        Self { ftype, epoch, payload }
    }

    /// Type and epoch bytes, bound into the AD of sealed payloads.
    pub fn header_ad(ftype: FrameType, epoch: u16) -> [u8; 3] {
        let e = epoch.to_be_bytes();
        [ftype as u8, e[0], e[1]]
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        let len = self.payload.len() + 3;
        if len > MAX_FRAME {
            return Err(FrameError::TooLarge(self.payload.len()));
        }
        let mut out = Vec::with_capacity(4 + len);
        out.extend_from_slice(&(len as u32).to_be_bytes());
        out.extend_from_slice(&Self::header_ad(self.ftype, self.epoch));
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes one frame from the front of `buf`; returns it and the bytes used.
    pub fn decode(buf: &[u8]) -> Result<(Frame, usize), FrameError> {
        if buf.len() < 4 {
            return Err(FrameError::Incomplete(4 - buf.len()));
        }
        let len = u32::from_be_bytes(buf[..4].try_into().unwrap());
        if !(3..=MAX_FRAME as u32).contains(&len) {
            return Err(FrameError::BadLength(len));
        }
        let total = 4 + len as usize;
        if buf.len() < total {
            return Err(FrameError::Incomplete(total - buf.len()));
        }
        let ftype = FrameType::from_u8(buf[4]).ok_or(FrameError::UnknownType(buf[4]))?;
        let epoch = u16::from_be_bytes([buf[5], buf[6]]);
        Ok((Frame { ftype, epoch, payload: buf[HEADER_LEN..total].to_vec() }, total))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FrameError> {
        w.write_all(&self.encode()?).map_err(|e| FrameError::Io(e.to_string()))?;
        w.flush().map_err(|e| FrameError::Io(e.to_string()))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame, FrameError> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len).map_err(|e| FrameError::Io(e.to_string()))?;
        let n = u32::from_be_bytes(len);
        if !(3..=MAX_FRAME as u32).contains(&n) {
            return Err(FrameError::BadLength(n));
        }
        let mut buf = vec![0u8; 4 + n as usize];
        buf[..4].copy_from_slice(&len);
        r.read_exact(&mut buf[4..]).map_err(|e| FrameError::Io(e.to_string()))?;
        Frame::decode(&buf).map(|(f, _)| f)
    }

    pub fn error(code: u8, msg: &str) -> Self {
        let mut payload = vec![code];
        payload.extend_from_slice(msg.as_bytes());
        Frame::new(FrameType::Error, 0, payload)
    }
}
