//! Remote activation over TCP: an authentication server (AS) holding the
//! device registry, and a device client.
//!
//! Per connection: HELLO, CHALLENGE (session id plus auxiliary challenges),
//! AUTH (PUF responses sealed under SK), TRN_UPDATE, DPOK stream, device ACK,
//! server ACK. Failures end with an ERROR frame whose first payload byte is an
//! [`ErrorCode`].

mod registry;
mod server;

use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use registry::{DeviceEntry, Registry};
pub use server::{AuthServer, ServerHandle, ServerOptions, SessionLog};

use crate::protocol::{
    fabricate, Dir, EnrollmentAuthority, Frame, FrameError, FrameType, Link, ProtocolConfig, ProtocolError,
    UnlockResult, UntrustedChip,
};

pub const DEFAULT_PORT: u16 = 7878;
pub const PORT_ENV: &str = "COMA_PORT";
pub const REGISTRY_ENV: &str = "COMA_REGISTRY";
pub const AUX_CHALLENGES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    UnknownDevice = 1,
    AuthFailure = 2,
    Malformed = 3,
    UnlockFailure = 4,
    Internal = 5,
}

impl ErrorCode {
    fn of(e: &ProtocolError) -> Self {
        match e {
            ProtocolError::UnknownDevice(_) => ErrorCode::UnknownDevice,
            ProtocolError::AuthFailure(_) => ErrorCode::AuthFailure,
            ProtocolError::UnlockFailure => ErrorCode::UnlockFailure,
            ProtocolError::Malformed(_) | ProtocolError::Frame(_) | ProtocolError::UnexpectedFrame { .. } => {
                ErrorCode::Malformed
            }
            _ => ErrorCode::Internal,
        }
    }

    /// Error the peer reports in an ERROR frame, mapped back.
    fn into_error(code: u8, msg: String) -> ProtocolError {
        match code {
            1 => ProtocolError::UnknownDevice(msg),
            2 => ProtocolError::AuthFailure(format!("rejected by server: {msg}")),
            4 => ProtocolError::UnlockFailure,
            _ => ProtocolError::Malformed(format!("server error {code}: {msg}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("network: {0}")]
    Network(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("registry: {0}")]
    Registry(String),
}

impl From<io::Error> for RemoteError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => RemoteError::Timeout(e.to_string()),
            _ => RemoteError::Network(e.to_string()),
        }
    }
}

impl From<FrameError> for RemoteError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Io(msg) if msg.contains("timed out") || msg.contains("would block") => RemoteError::Timeout(msg),
            FrameError::Io(msg) => RemoteError::Network(msg),
            other => RemoteError::Protocol(ProtocolError::Frame(other)),
        }
    }
}

/// What a fabricated device needs to run on its own: no secrets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: String,
    pub seed: u64,
    pub challenge: String,
}

impl DeviceSpec {
    pub fn build(&self, cfg: &ProtocolConfig) -> Result<UntrustedChip, RemoteError> {
        let (mut chip, _) = fabricate(cfg, self.seed)?;
        let c = u64::from_str_radix(&self.challenge, 16).map_err(|_| RemoteError::Registry("bad challenge".into()))?;
        chip.hardwire(c);
        Ok(chip)
    }
}

/// Fabricates device `seed`, enrolls it and adds it to `registry`.
pub fn enroll_device(
    cfg: &ProtocolConfig,
    registry: &mut Registry,
    device_id: &str,
    seed: u64,
) -> Result<DeviceSpec, RemoteError> {
    let (mut chip, ok) = fabricate(cfg, seed)?;
    let mut ea = EnrollmentAuthority::new(seed ^ 0xea);
    let record = ea.enroll(&mut chip, device_id)?;
    registry.insert(device_id, DeviceEntry::from_enrollment(&record, &ok))?;
    Ok(DeviceSpec { device_id: device_id.to_string(), seed, challenge: record.challenge })
}

fn send(stream: &mut TcpStream, link: &mut Link, frame: Frame) -> Result<(), RemoteError> {
    link.carry(Dir::ToTrusted, frame.clone());
    Ok(frame.write_to(stream)?)
}

fn recv(stream: &mut TcpStream, link: &mut Link) -> Result<Frame, RemoteError> {
    let frame = Frame::read_from(stream)?;
    link.carry(Dir::ToUntrusted, frame.clone());
    if frame.ftype == FrameType::Error {
        let code = frame.payload.first().copied().unwrap_or(0);
        let msg = String::from_utf8_lossy(frame.payload.get(1..).unwrap_or_default()).into_owned();
        return Err(ErrorCode::into_error(code, msg).into());
    }
    Ok(frame)
}

/// Runs one activation against the AS at `addr`. The circuit key commits only
/// after the whole DPOK stream verifies.
pub fn device_run<A: ToSocketAddrs>(
    device: &mut UntrustedChip,
    device_id: &str,
    addr: A,
    timeout: Duration,
) -> Result<UnlockResult, RemoteError> {
    device_run_recorded(device, device_id, addr, timeout, &mut Link::new())
}

pub fn device_run_recorded<A: ToSocketAddrs>(
    device: &mut UntrustedChip,
    device_id: &str,
    addr: A,
    timeout: Duration,
    link: &mut Link,
) -> Result<UnlockResult, RemoteError> {
    let addr = addr.to_socket_addrs()?.next().ok_or_else(|| RemoteError::Network("no address".into()))?;
    let mut stream = TcpStream::connect_timeout(&addr, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.set_nodelay(true)?;
    let result = run_session(device, device_id, &mut stream, link);
    if result.is_err() {
        device.reset();
    }
    result
}

fn run_session(
    device: &mut UntrustedChip,
    device_id: &str,
    stream: &mut TcpStream,
    link: &mut Link,
) -> Result<UnlockResult, RemoteError> {
    send(stream, link, device.hello(device_id)?)?;
    let challenge = recv(stream, link)?;
    send(stream, link, device.answer_challenge(&challenge)?)?;
    let ack = loop {
        let f = recv(stream, link)?;
        if let Some(ack) = device.accept_license(&f)? {
            break ack;
        }
    };
    send(stream, link, ack)?;
    let done = recv(stream, link)?;
    if done.ftype != FrameType::Ack || done.payload.len() != 16 {
        return Err(ProtocolError::UnexpectedFrame { expected: "ACK", got: done.ftype.name().into() }.into());
    }
    let cycles_spent = u64::from_le_bytes(done.payload[8..16].try_into().unwrap());
    Ok(UnlockResult { success: true, cycles_spent })
}

/// Port from `COMA_PORT`, else the default.
pub fn port_from_env() -> u16 {
    std::env::var(PORT_ENV).ok().and_then(|p| p.parse().ok()).unwrap_or(DEFAULT_PORT)
}

#[cfg(test)]
mod tests;
