//! Chip-activation key management and secure chip-to-chip communication.
//!
//! The crate models a trusted/untrusted chip pair that unlocks an obfuscated
//! circuit with a per-activation license, plus the building blocks that make
//! it work:
//!
//! - [`switchnet`]: the configurable switching network (CSN) and its inverse.
//! - [`cipher`]: ACORN-128 and AES-128-GCM authenticated encryption.
//! - [`rng`]: a simulated entropy source with SP 800-90B health tests and the
//!   Trivium / AES-CTR pseudo-random generators.
//! - [`puf`]: arbiter-PUF simulation, key derivation, secure readout and the
//!   pseudo-PUF health check.
//! - [`protocol`]: the in-process activation, DCC and LCC state machines.
//! - [`remote`]: the same flows over TCP between an authentication server and
//!   a device.
//! - [`attacks`]: oracle-guided SAT key extraction and GF(2) affine recovery.
//! - [`costmodel`]: closed-form latency and energy models.
//! - [`cli`]: the operator commands behind the `coma` binary.

pub mod attacks;
pub mod bits;
pub mod cipher;
pub mod cli;
pub mod costmodel;
pub mod protocol;
pub mod puf;
pub mod remote;
pub mod rng;
pub mod switchnet;

pub use bits::Bits;
