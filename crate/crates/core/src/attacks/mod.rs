//! Attacks on the CSN: oracle-guided SAT key extraction and GF(2) affine
//! recovery, plus the TRN update period that keeps both out of reach.

mod affine;
mod cnf;
mod sat_attack;
mod solver;

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use affine::{affine_recover, AffineModel, AffineOutcome, MAX_AFFINE_N};
pub use cnf::{encode, Node};
pub use sat_attack::{equivalence_rate, sat_extract_key, sat_extract_key_with, SatAttackResult};
pub use solver::{Cdcl, Lit, SatSolver, SolveResult};

use crate::switchnet::{csn_forward, Netlist, NetworkKind, NetworkTopology, SwitchNetError, Trn};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("timed out after {iterations} iterations ({elapsed:?})")]
    Timeout { iterations: usize, elapsed: Duration },
    #[error("no key is consistent with the oracle responses")]
    NoConsistentKey,
    #[error(transparent)]
    Network(#[from] SwitchNetError),
}

/// Admissible TRN update periods `[P, min(n, sat) - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdatePeriod {
    pub lo: u64,
    pub hi: u64,
}

impl UpdatePeriod {
    pub fn is_feasible(&self) -> bool {
        self.lo <= self.hi
    }

    pub fn advice(&self) -> &'static str {
        if self.is_feasible() {
            "ok"
        } else {
            "infeasible: use a near-non-blocking network or a faster PRNG"
        }
    }
}

/// `sat_iterations = None` means the attack did not finish, so only the
/// block bound `U < n` applies.
pub fn safe_update_period(n: u64, p: u64, sat_iterations: Option<u64>) -> UpdatePeriod {
    let bound = sat_iterations.map_or(n, |s| s.min(n));
    UpdatePeriod { lo: p, hi: bound.saturating_sub(1) }
}

/// Short labels used in sweep tables.
pub fn kind_label(kind: NetworkKind) -> &'static str {
    match kind {
        NetworkKind::Omega => "blk",
        NetworkKind::Log { .. } => "nonblk",
    }
}

pub fn topology_for(label: &str, n: usize) -> Result<NetworkTopology, SwitchNetError> {
    match label {
        "blk" | "omega" => NetworkTopology::omega(n),
        _ => NetworkTopology::near_nonblocking(n),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub kind: String,
    pub iterations: usize,
    pub seconds: f64,
    pub outcome: String,
}

/// Attacks a CSN configured with a TRN drawn from `seed`.
pub fn attack_once(topology: &NetworkTopology, seed: u64, timeout: Duration) -> (SweepRow, Option<SatAttackResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trn = Trn::random(topology, &mut rng);
    let net = Netlist::from_topology(topology);
    let oracle = |x: &crate::Bits| csn_forward(topology, &trn, x).unwrap();
    let res = sat_extract_key(&net, oracle, timeout);
    let base = |iterations, seconds, outcome: &str| SweepRow {
        size: topology.n(),
        kind: kind_label(topology.kind()).into(),
        iterations,
        seconds,
        outcome: outcome.into(),
    };
    match res {
        Ok(r) => {
            let ok = equivalence_rate(&net, &r.key, oracle, 1000, &mut rng) == 1.0;
            (base(r.iterations, r.elapsed.as_secs_f64(), if ok { "ok" } else { "wrong-key" }), Some(r))
        }
        Err(AttackError::Timeout { iterations, elapsed }) => (base(iterations, elapsed.as_secs_f64(), "TO"), None),
        Err(_) => (base(0, 0.0, "error"), None),
    }
}

pub fn sweep(sizes: &[usize], kinds: &[&str], seed: u64, timeout: Duration) -> Result<Vec<SweepRow>, SwitchNetError> {
    let mut rows = Vec::new();
    for &n in sizes {
        for &k in kinds {
            let t = topology_for(k, n)?;
            rows.push(attack_once(&t, seed, timeout).0);
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_period_examples() {
        let p = safe_update_period(64, 15, Some(14));
        assert!(!p.is_feasible());
        assert_eq!(safe_update_period(64, 15, None), UpdatePeriod { lo: 15, hi: 63 });
        assert_eq!(safe_update_period(64, 0, None).lo, 0);
        assert_eq!(safe_update_period(16, 2, Some(25)).hi, 15);
    }

    #[test]
    fn small_attacks_recover_equivalent_keys() {
        for n in [4, 8] {
            for k in ["blk", "nonblk"] {
                let t = topology_for(k, n).unwrap();
                let (row, res) = attack_once(&t, 7, Duration::from_secs(60));
                assert_eq!(row.outcome, "ok", "{n} {k}");
                assert!(res.unwrap().iterations >= 1);
            }
        }
    }

    #[test]
    fn zero_timeout_reports_to() {
        let t = NetworkTopology::omega(8).unwrap();
        let (row, _) = attack_once(&t, 1, Duration::ZERO);
        assert_eq!(row.outcome, "TO");
        assert_eq!(row.iterations, 0);
    }

    #[test]
    fn csv_header() {
        let rows = vec![SweepRow { size: 4, kind: "blk".into(), iterations: 3, seconds: 0.5, outcome: "ok".into() }];
        assert_eq!(sweep_csv(&rows), "size,kind,iterations,seconds,outcome\n4,blk,3,0.5,ok\n");
    }
}
