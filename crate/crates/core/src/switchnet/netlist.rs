//! Gate-level view of a CSN, the form an attacker works from.
//!
//! Text format, one item per line (`#` starts a comment):
//!
//! ```text
//! CSN omega n=4 keys=12
//! INPUT x0 x1 x2 x3
//! KEY k0 k1 ... k11
//! g0 = MUX(k0, x0, x1)
//! g2 = XOR(g0, k1)
//! y0 = BUF(g2)
//! OUTPUT y0 y1 y2 y3
//! ```
//!
//! `MUX(s, a, b)` yields `a` when `s = 0` and `b` when `s = 1`. Names starting
//! with `k` are key inputs (TRN bits, in TRN order), `x` data inputs, `g`/`y`
//! gates.

use std::fmt::Write as _;

use bitvec::prelude::*;
use thiserror::Error;

use super::NetworkTopology;
use crate::bits::Bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Signal {
    Input(usize),
    Key(usize),
    Gate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Mux,
    Xor,
    Buf,
}

impl GateKind {
    fn name(self) -> &'static str {
        match self {
            GateKind::Mux => "MUX",
            GateKind::Xor => "XOR",
            GateKind::Buf => "BUF",
        }
    }

    fn arity(self) -> usize {
        match self {
            GateKind::Mux => 3,
            GateKind::Xor => 2,
            GateKind::Buf => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub fanin: Vec<Signal>,
}

/// Combinational netlist in topological order (fan-ins always precede the
/// gate that reads them).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub label: String,
    pub inputs: usize,
    pub keys: usize,
    pub gates: Vec<Gate>,
    pub outputs: Vec<Signal>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetlistParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing {0} declaration")]
    Missing(&'static str),
}

impl Netlist {
    /// Two MUXes and two XORs per re-routing block, a BUF per output.
    pub fn from_topology(topology: &NetworkTopology) -> Self {
        let n = topology.n();
        let mut gates = Vec::with_capacity(topology.rrb_count() * 4 + n);
        let mut lines: Vec<Signal> = (0..n).map(Signal::Input).collect();
        let mut wired = lines.clone();
        for (s, stage) in topology.stages().iter().enumerate() {
            for (i, &w) in stage.wiring.iter().enumerate() {
                wired[w] = lines[i];
            }
            for j in 0..n / 2 {
                let rrb = s * n / 2 + j;
                let (swap, inv0, inv1) = (Signal::Key(3 * rrb), Signal::Key(3 * rrb + 1), Signal::Key(3 * rrb + 2));
                let (a, b) = (wired[2 * j], wired[2 * j + 1]);
                let m0 = push(&mut gates, GateKind::Mux, vec![swap, a, b]);
                let m1 = push(&mut gates, GateKind::Mux, vec![swap, b, a]);
                lines[2 * j] = push(&mut gates, GateKind::Xor, vec![m0, inv0]);
                lines[2 * j + 1] = push(&mut gates, GateKind::Xor, vec![m1, inv1]);
            }
        }
        let outputs = lines.iter().map(|&l| push(&mut gates, GateKind::Buf, vec![l])).collect();
        Self {
            label: format!("{} n={}", topology.kind().label(), n),
            inputs: n,
            keys: topology.config_bits(),
            gates,
            outputs,
        }
    }

    pub fn eval(&self, x: &BitSlice<u8, Lsb0>, key: &BitSlice<u8, Lsb0>) -> Bits {
        assert_eq!(x.len(), self.inputs);
        assert_eq!(key.len(), self.keys);
        let mut values = vec![false; self.gates.len()];
        let get = |values: &[bool], s: Signal| match s {
            Signal::Input(i) => x[i],
            Signal::Key(k) => key[k],
            Signal::Gate(g) => values[g],
        };
        for (g, gate) in self.gates.iter().enumerate() {
            let v = match gate.kind {
                GateKind::Mux => {
                    if get(&values, gate.fanin[0]) {
                        get(&values, gate.fanin[2])
                    } else {
                        get(&values, gate.fanin[1])
                    }
                }
                GateKind::Xor => get(&values, gate.fanin[0]) ^ get(&values, gate.fanin[1]),
                GateKind::Buf => get(&values, gate.fanin[0]),
            };
            values[g] = v;
        }
        self.outputs.iter().map(|&s| get(&values, s)).collect()
    }

    fn gate_name(&self, g: usize) -> String {
        if let Some(pos) = self.outputs.iter().position(|&s| s == Signal::Gate(g)) {
            format!("y{pos}")
        } else {
            format!("g{g}")
        }
    }

    fn signal_name(&self, s: Signal) -> String {
        match s {
            Signal::Input(i) => format!("x{i}"),
            Signal::Key(k) => format!("k{k}"),
            Signal::Gate(g) => self.gate_name(g),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "CSN {} keys={}", self.label, self.keys).unwrap();
        let names = |prefix: char, count: usize| (0..count).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "INPUT {}", names('x', self.inputs)).unwrap();
        writeln!(out, "KEY {}", names('k', self.keys)).unwrap();
        for (g, gate) in self.gates.iter().enumerate() {
            let fanin: Vec<String> = gate.fanin.iter().map(|&s| self.signal_name(s)).collect();
            writeln!(out, "{} = {}({})", self.gate_name(g), gate.kind.name(), fanin.join(", ")).unwrap();
        }
        let outs: Vec<String> = self.outputs.iter().map(|&s| self.signal_name(s)).collect();
        writeln!(out, "OUTPUT {}", outs.join(" ")).unwrap();
        out
    }

    pub fn parse(text: &str) -> Result<Self, NetlistParseError> {
        use std::collections::HashMap;

        let mut label = None;
        let mut inputs = None;
        let mut keys = None;
        let mut gates = Vec::new();
        let mut names: HashMap<String, Signal> = HashMap::new();
        let mut outputs = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |msg: &str| NetlistParseError::Syntax { line: line_no, msg: msg.to_string() };
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("CSN ") {
                let rest = rest.trim();
                let cut = rest.rfind(" keys=").ok_or_else(|| err("header lacks keys="))?;
                label = Some(rest[..cut].to_string());
            } else if let Some(rest) = line.strip_prefix("INPUT") {
                let list: Vec<&str> = rest.split_whitespace().collect();
                for (i, name) in list.iter().enumerate() {
                    if *name != format!("x{i}") {
                        return Err(err("inputs must be x0..x(n-1) in order"));
                    }
                    names.insert(name.to_string(), Signal::Input(i));
                }
                inputs = Some(list.len());
            } else if let Some(rest) = line.strip_prefix("KEY") {
                let list: Vec<&str> = rest.split_whitespace().collect();
                for (i, name) in list.iter().enumerate() {
                    if *name != format!("k{i}") {
                        return Err(err("keys must be k0..k(m-1) in order"));
                    }
                    names.insert(name.to_string(), Signal::Key(i));
                }
                keys = Some(list.len());
            } else if let Some(rest) = line.strip_prefix("OUTPUT") {
                let outs = rest
                    .split_whitespace()
                    .map(|name| names.get(name).copied().ok_or_else(|| err("unknown output signal")))
                    .collect::<Result<Vec<_>, _>>()?;
                outputs = Some(outs);
            } else {
                let (lhs, rhs) = line.split_once('=').ok_or_else(|| err("expected `name = TYPE(...)`"))?;
                let name = lhs.trim();
                let rhs = rhs.trim();
                let open = rhs.find('(').ok_or_else(|| err("missing '('"))?;
                let body = rhs[open + 1..].strip_suffix(')').ok_or_else(|| err("missing ')'"))?;
                let kind = match &rhs[..open] {
                    "MUX" => GateKind::Mux,
                    "XOR" => GateKind::Xor,
                    "BUF" => GateKind::Buf,
                    _ => return Err(err("unknown gate type")),
                };
                let fanin = body
                    .split(',')
                    .map(|s| names.get(s.trim()).copied().ok_or_else(|| err("undeclared fan-in")))
                    .collect::<Result<Vec<_>, _>>()?;
                if fanin.len() != kind.arity() {
                    return Err(err("wrong fan-in count"));
                }
                if names.contains_key(name) {
                    return Err(err("duplicate signal name"));
                }
                names.insert(name.to_string(), Signal::Gate(gates.len()));
                gates.push(Gate { kind, fanin });
            }
        }
        Ok(Self {
            label: label.ok_or(NetlistParseError::Missing("CSN"))?,
            inputs: inputs.ok_or(NetlistParseError::Missing("INPUT"))?,
            keys: keys.ok_or(NetlistParseError::Missing("KEY"))?,
            gates,
            outputs: outputs.ok_or(NetlistParseError::Missing("OUTPUT"))?,
        })
    }
}

fn push(gates: &mut Vec<Gate>, kind: GateKind, fanin: Vec<Signal>) -> Signal {
    gates.push(Gate { kind, fanin });
    Signal::Gate(gates.len() - 1)
}
