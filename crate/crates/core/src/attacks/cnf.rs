//! Tseitin encoding of a CSN netlist, with constants folded.

use super::solver::{Lit, SatSolver};
use crate::switchnet::{GateKind, Netlist, Signal};

/// A signal in CNF: a literal or a known constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Const(bool),
    Lit(Lit),
}

impl Node {
    fn negate(self) -> Node {
        match self {
            Node::Const(b) => Node::Const(!b),
            Node::Lit(l) => Node::Lit(!l),
        }
    }
}

fn fresh<S: SatSolver>(s: &mut S) -> Lit {
    Lit::pos(s.new_var())
}

pub fn xor<S: SatSolver>(s: &mut S, a: Node, b: Node) -> Node {
    match (a, b) {
        (Node::Const(x), other) | (other, Node::Const(x)) => {
            if x {
                other.negate()
            } else {
                other
            }
        }
        (Node::Lit(a), Node::Lit(b)) => {
            if a == b {
                return Node::Const(false);
            }
            if a == !b {
                return Node::Const(true);
            }
            let o = fresh(s);
            s.add_clause(&[!a, !b, !o]);
            s.add_clause(&[a, b, !o]);
            s.add_clause(&[a, !b, o]);
            s.add_clause(&[!a, b, o]);
            Node::Lit(o)
        }
    }
}

/// `sel ? b : a`.
pub fn mux<S: SatSolver>(s: &mut S, sel: Node, a: Node, b: Node) -> Node {
    match sel {
        Node::Const(false) => a,
        Node::Const(true) => b,
        Node::Lit(sl) => {
            if a == b {
                return a;
            }
            let o = fresh(s);
            let lit = |n: Node, s: &mut S| match n {
                Node::Lit(l) => l,
                Node::Const(c) => {
                    let v = fresh(s);
                    s.add_clause(&[if c { v } else { !v }]);
                    v
                }
            };
            let (al, bl) = (lit(a, s), lit(b, s));
            s.add_clause(&[sl, !al, o]);
            s.add_clause(&[sl, al, !o]);
            s.add_clause(&[!sl, !bl, o]);
            s.add_clause(&[!sl, bl, !o]);
            s.add_clause(&[!al, !bl, o]);
            s.add_clause(&[al, bl, !o]);
            Node::Lit(o)
        }
    }
}

/// Encodes one copy of the netlist over the given input and key nodes and
/// returns its output nodes.
pub fn encode<S: SatSolver>(s: &mut S, net: &Netlist, inputs: &[Node], keys: &[Lit]) -> Vec<Node> {
    let mut gates: Vec<Node> = Vec::with_capacity(net.gates.len());
    let get = |gates: &[Node], sig: Signal| match sig {
        Signal::Input(i) => inputs[i],
        Signal::Key(k) => Node::Lit(keys[k]),
        Signal::Gate(g) => gates[g],
    };
    for gate in &net.gates {
        let f: Vec<Node> = gate.fanin.iter().map(|&sig| get(&gates, sig)).collect();
        let node = match gate.kind {
            GateKind::Mux => mux(s, f[0], f[1], f[2]),
            GateKind::Xor => xor(s, f[0], f[1]),
            GateKind::Buf => f[0],
        };
        gates.push(node);
    }
    net.outputs.iter().map(|&o| get(&gates, o)).collect()
}

/// Forces `node` to `value`; a constant that disagrees makes the formula UNSAT.
pub fn assert_node<S: SatSolver>(s: &mut S, node: Node, value: bool) {
    match node {
        Node::Const(c) if c == value => {}
        Node::Const(_) => s.add_clause(&[]),
        Node::Lit(l) => s.add_clause(&[if value { l } else { !l }]),
    }
}
