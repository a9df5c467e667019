//! Configurable switching network (CSN) and its exact inverse (RCSN).
//!
//! A network is a sequence of columns; each column applies a fixed wiring
//! permutation and then `n/2` re-routing blocks (RRBs). An RRB either passes
//! its two lines straight or crosses them, then optionally inverts each
//! output. The RCSN walks the same columns backwards, so
//! `rcsn_backward(t, trn, csn_forward(t, trn, x)) == x`.

mod netlist;
mod topology;
mod trn;

use std::collections::HashSet;

use bitvec::prelude::*;
use thiserror::Error;

use crate::bits::Bits;

pub use netlist::{Gate, GateKind, Netlist, NetlistParseError, Signal};
pub use topology::{NetworkKind, NetworkTopology, Stage};
pub use trn::{shift_trn, RrbConfig, Trn, TrnRecord, TRN_BIT_ORDER};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SwitchNetError {
    #[error("network size {n} must be a power of two and at least {min}")]
    InvalidSize { n: usize, min: usize },
    #[error("unsupported network kind {0:?}")]
    UnsupportedKind(NetworkKind),
    #[error("TRN has {actual} bits, topology needs {expected}")]
    TrnLength { expected: usize, actual: usize },
    #[error("data word has {actual} bits, network width is {expected}")]
    WordLength { expected: usize, actual: usize },
    #[error("malformed TRN hex")]
    TrnHex,
    #[error("exhaustive enumeration supports n <= {max}, got {n}")]
    TooLargeToEnumerate { n: usize, max: usize },
}

fn check(topology: &NetworkTopology, trn: &Trn, word: &BitSlice<u8, Lsb0>) -> Result<(), SwitchNetError> {
    if trn.len() != topology.config_bits() {
        return Err(SwitchNetError::TrnLength { expected: topology.config_bits(), actual: trn.len() });
    }
    if word.len() != topology.n() {
        return Err(SwitchNetError::WordLength { expected: topology.n(), actual: word.len() });
    }
    Ok(())
}

/// Forward pass through the CSN.
pub fn csn_forward(topology: &NetworkTopology, trn: &Trn, x: &BitSlice<u8, Lsb0>) -> Result<Bits, SwitchNetError> {
    check(topology, trn, x)?;
    let n = topology.n();
    let mut cur: Vec<bool> = x.iter().by_vals().collect();
    let mut next = vec![false; n];
    for (s, stage) in topology.stages().iter().enumerate() {
        for (i, &w) in stage.wiring.iter().enumerate() {
            next[w] = cur[i];
        }
        for j in 0..n / 2 {
            let cfg = trn.rrb(s * n / 2 + j);
            let (a, b) = (next[2 * j], next[2 * j + 1]);
            let (o0, o1) = if cfg.swap { (b, a) } else { (a, b) };
            next[2 * j] = o0 ^ cfg.invert_out0;
            next[2 * j + 1] = o1 ^ cfg.invert_out1;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur.into_iter().collect())
}

/// Backward pass through the RCSN: the exact inverse of [`csn_forward`]
/// under the same TRN.
pub fn rcsn_backward(topology: &NetworkTopology, trn: &Trn, y: &BitSlice<u8, Lsb0>) -> Result<Bits, SwitchNetError> {
    check(topology, trn, y)?;
    let n = topology.n();
    let mut cur: Vec<bool> = y.iter().by_vals().collect();
    let mut prev = vec![false; n];
    for (s, stage) in topology.stages().iter().enumerate().rev() {
        for j in 0..n / 2 {
            let cfg = trn.rrb(s * n / 2 + j);
            let (o0, o1) = (cur[2 * j] ^ cfg.invert_out0, cur[2 * j + 1] ^ cfg.invert_out1);
            let (a, b) = if cfg.swap { (o1, o0) } else { (o0, o1) };
            cur[2 * j] = a;
            cur[2 * j + 1] = b;
        }
        for (i, &w) in stage.wiring.iter().enumerate() {
            prev[i] = cur[w];
        }
        std::mem::swap(&mut cur, &mut prev);
    }
    Ok(cur.into_iter().collect())
}

/// A configured CSN/RCSN pair.
#[derive(Debug, Clone)]
pub struct Csn {
    topology: NetworkTopology,
    trn: Trn,
}

impl Csn {
    pub fn new(topology: NetworkTopology, trn: Trn) -> Result<Self, SwitchNetError> {
        if trn.len() != topology.config_bits() {
            return Err(SwitchNetError::TrnLength { expected: topology.config_bits(), actual: trn.len() });
        }
        Ok(Self { topology, trn })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn trn(&self) -> &Trn {
        &self.trn
    }

    pub fn set_trn(&mut self, trn: Trn) -> Result<(), SwitchNetError> {
        if trn.len() != self.topology.config_bits() {
            return Err(SwitchNetError::TrnLength { expected: self.topology.config_bits(), actual: trn.len() });
        }
        self.trn = trn;
        Ok(())
    }

    pub fn forward(&self, x: &BitSlice<u8, Lsb0>) -> Result<Bits, SwitchNetError> {
        csn_forward(&self.topology, &self.trn, x)
    }

    pub fn backward(&self, y: &BitSlice<u8, Lsb0>) -> Result<Bits, SwitchNetError> {
        rcsn_backward(&self.topology, &self.trn, y)
    }
}

/// Largest width accepted by [`enumerate_permutations`].
pub const MAX_ENUMERATION_N: usize = 8;

/// Counts the distinct line permutations reachable over every setting of
/// the swap bits (inversion bits held at zero).
pub fn enumerate_permutations(topology: &NetworkTopology) -> Result<usize, SwitchNetError> {
    let n = topology.n();
    if n > MAX_ENUMERATION_N {
        return Err(SwitchNetError::TooLargeToEnumerate { n, max: MAX_ENUMERATION_N });
    }
    let rrbs = topology.rrb_count();
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    let mut cur = vec![0u8; n];
    let mut next = vec![0u8; n];
    for setting in 0u64..(1u64 << rrbs) {
        for (i, c) in cur.iter_mut().enumerate() {
            *c = i as u8;
        }
        for (s, stage) in topology.stages().iter().enumerate() {
            for (i, &w) in stage.wiring.iter().enumerate() {
                next[w] = cur[i];
            }
            for j in 0..n / 2 {
                if (setting >> (s * n / 2 + j)) & 1 == 1 {
                    next.swap(2 * j, 2 * j + 1);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        seen.insert(cur.clone());
    }
    Ok(seen.len())
}
