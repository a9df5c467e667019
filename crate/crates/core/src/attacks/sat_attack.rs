//! Oracle-guided key extraction: repeatedly ask the miter for a
//! distinguishing input, query the oracle, and constrain both key copies.

use std::time::{Duration, Instant};

use super::cnf::{assert_node, encode, xor, Node};
use super::solver::{Cdcl, Lit, SatSolver, SolveResult};
use super::AttackError;
use crate::bits::{self, Bits};
use crate::switchnet::Netlist;

#[derive(Debug, Clone)]
pub struct SatAttackResult {
    pub key: Bits,
    pub iterations: usize,
    pub elapsed: Duration,
    /// Distinguishing inputs in query order.
    pub dips: Vec<Bits>,
}

pub fn sat_extract_key<F>(net: &Netlist, mut oracle: F, timeout: Duration) -> Result<SatAttackResult, AttackError>
where
    F: FnMut(&Bits) -> Bits,
{
    sat_extract_key_with(Cdcl::new(), net, &mut oracle, timeout)
}

pub fn sat_extract_key_with<S, F>(mut s: S, net: &Netlist, oracle: &mut F, timeout: Duration) -> Result<SatAttackResult, AttackError>
where
    S: SatSolver,
    F: FnMut(&Bits) -> Bits,
{
    let start = Instant::now();
    let deadline = start + timeout;
    let k1: Vec<Lit> = (0..net.keys).map(|_| Lit::pos(s.new_var())).collect();
    let k2: Vec<Lit> = (0..net.keys).map(|_| Lit::pos(s.new_var())).collect();
    let x: Vec<Lit> = (0..net.inputs).map(|_| Lit::pos(s.new_var())).collect();
    let xn: Vec<Node> = x.iter().map(|&l| Node::Lit(l)).collect();
    let y1 = encode(&mut s, net, &xn, &k1);
    let y2 = encode(&mut s, net, &xn, &k2);
    let act = Lit::pos(s.new_var());
    let mut miter = vec![!act];
    for (&a, &b) in y1.iter().zip(&y2) {
        match xor(&mut s, a, b) {
            Node::Const(true) => miter.push(act),
            Node::Const(false) => {}
            Node::Lit(d) => miter.push(d),
        }
    }
    s.add_clause(&miter);

    let mut dips = Vec::new();
    loop {
        match s.solve(&[act], Some(deadline)) {
            SolveResult::Unknown => return Err(AttackError::Timeout { iterations: dips.len(), elapsed: start.elapsed() }),
            SolveResult::Unsat => break,
            SolveResult::Sat => {
                let dip: Bits = x.iter().map(|l| s.value(l.var())).collect();
                let y = oracle(&dip);
                let consts: Vec<Node> = dip.iter().by_vals().map(Node::Const).collect();
                for keys in [&k1, &k2] {
                    let out = encode(&mut s, net, &consts, keys);
                    for (o, want) in out.into_iter().zip(y.iter().by_vals()) {
                        assert_node(&mut s, o, want);
                    }
                }
                dips.push(dip);
            }
        }
    }
    match s.solve(&[!act], Some(deadline)) {
        SolveResult::Sat => {
            let key: Bits = k1.iter().map(|l| s.value(l.var())).collect();
            Ok(SatAttackResult { key, iterations: dips.len(), elapsed: start.elapsed(), dips })
        }
        SolveResult::Unknown => Err(AttackError::Timeout { iterations: dips.len(), elapsed: start.elapsed() }),
        SolveResult::Unsat => Err(AttackError::NoConsistentKey),
    }
}

/// Fraction of `trials` random inputs on which `key` reproduces the oracle.
pub fn equivalence_rate<F, R>(net: &Netlist, key: &Bits, mut oracle: F, trials: usize, rng: &mut R) -> f64
where
    F: FnMut(&Bits) -> Bits,
    R: rand::Rng,
{
    let ok = (0..trials)
        .filter(|_| {
            let x = bits::random(rng, net.inputs);
            net.eval(&x, key) == oracle(&x)
        })
        .count();
    ok as f64 / trials as f64
}
