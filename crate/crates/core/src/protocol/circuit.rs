//! Logic-locked payload circuit: a random combinational netlist with XOR/XNOR
//! key gates, evaluated 64 input vectors at a time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::bits::{self, Bits};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    And,
    Or,
    Xor,
    Nand,
    Nor,
}

#[derive(Debug, Clone, Copy)]
enum Src {
    Input(usize),
    Net(usize),
}

#[derive(Debug, Clone)]
struct Cell {
    op: Op,
    a: Src,
    b: Src,
    /// Key bit XORed onto the output, with its inversion (XNOR) flag.
    key: Option<(usize, bool)>,
}

pub const SELF_CHECK_VECTORS: usize = 64;

/// Reference function plus a volatile key register.
#[derive(Debug, Clone)]
pub struct ObfuscatedCircuit {
    inputs: usize,
    outputs: usize,
    cells: Vec<Cell>,
    key_bits: usize,
    key_register: Option<Bits>,
    check_inputs: Vec<u64>,
    check_outputs: Vec<u64>,
}

impl ObfuscatedCircuit {
    /// Builds a locked circuit and returns it with its correct key.
    pub fn generate(seed: u64, inputs: usize, outputs: usize, gates: usize, key_bits: usize) -> (Self, Bits) {
        assert!(inputs <= 64 && outputs <= 64 && outputs <= gates && key_bits <= gates);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ops = [Op::And, Op::Or, Op::Xor, Op::Nand, Op::Nor];
        let mut cells: Vec<Cell> = (0..gates)
            .map(|g| {
                let pick = |rng: &mut ChaCha20Rng| {
                    // bias towards recent nets so the circuit gets deep
                    let span = inputs + g;
                    let i = span - 1 - rng.gen_range(0..span.min(48));
                    if i < inputs {
                        Src::Input(i)
                    } else {
                        Src::Net(i - inputs)
                    }
                };
                let (a, b) = (pick(&mut rng), pick(&mut rng));
                Cell { op: ops[rng.gen_range(0..ops.len())], a, b, key: None }
            })
            .collect();
        let ok = bits::random(&mut rng, key_bits);
        let mut sites: Vec<usize> = (0..gates).collect();
        for i in 0..key_bits {
            let j = rng.gen_range(i..gates);
            sites.swap(i, j);
        }
        for (k, &site) in sites[..key_bits].iter().enumerate() {
            cells[site].key = Some((k, ok[k]));
        }
        let mut c = Self {
            inputs,
            outputs,
            cells,
            key_bits,
            key_register: None,
            check_inputs: Vec::new(),
            check_outputs: Vec::new(),
        };
        let mask = if inputs == 64 { u64::MAX } else { (1 << inputs) - 1 };
        c.check_inputs = (0..SELF_CHECK_VECTORS).map(|_| rng.gen::<u64>() & mask).collect();
        c.check_outputs = c.check_inputs.iter().map(|&x| c.eval_with(&ok, x)).collect();
        (c, ok)
    }

    /// Default payload: 32 inputs, 32 outputs, 256 gates, 128 key gates.
    pub fn default_payload(seed: u64) -> (Self, Bits) {
        Self::generate(seed, 32, 32, 256, 128)
    }

    pub fn key_bits(&self) -> usize {
        self.key_bits
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// Bit-sliced evaluation: `lanes[i]` carries input `i` for 64 vectors.
    fn eval_lanes(&self, key: &Bits, lanes: &[u64]) -> Vec<u64> {
        let mut nets = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            let get = |s: Src, nets: &[u64]| match s {
                Src::Input(i) => lanes[i],
                Src::Net(n) => nets[n],
            };
            let (a, b) = (get(cell.a, &nets), get(cell.b, &nets));
            let mut v = match cell.op {
                Op::And => a & b,
                Op::Or => a | b,
                Op::Xor => a ^ b,
                Op::Nand => !(a & b),
                Op::Nor => !(a | b),
            };
            if let Some((k, xnor)) = cell.key {
                // XOR gate when the correct bit is 0, XNOR when it is 1
                let flip = key[k] ^ xnor;
                if flip {
                    v = !v;
                }
            }
            nets.push(v);
        }
        nets[nets.len() - self.outputs..].to_vec()
    }

    /// Output word for a single input word under `key`.
    pub fn eval_with(&self, key: &Bits, x: u64) -> u64 {
        let lanes: Vec<u64> = (0..self.inputs).map(|i| if (x >> i) & 1 == 1 { u64::MAX } else { 0 }).collect();
        self.eval_lanes(key, &lanes).iter().enumerate().fold(0, |acc, (j, &v)| acc | ((v & 1) << j))
    }

    /// Evaluates 64 input words at once.
    pub fn eval_batch(&self, key: &Bits, xs: &[u64; 64]) -> [u64; 64] {
        let lanes: Vec<u64> =
            (0..self.inputs).map(|i| xs.iter().enumerate().fold(0u64, |acc, (v, &x)| acc | (((x >> i) & 1) << v))).collect();
        let outs = self.eval_lanes(key, &lanes);
        std::array::from_fn(|v| outs.iter().enumerate().fold(0u64, |acc, (j, &o)| acc | (((o >> v) & 1) << j)))
    }

    pub fn load_key(&mut self, key: Bits) {
        assert_eq!(key.len(), self.key_bits);
        self.key_register = Some(key);
    }

    pub fn clear_key(&mut self) {
        self.key_register = None;
    }

    pub fn key_loaded(&self) -> bool {
        self.key_register.is_some()
    }

    /// Runs the embedded test vectors against the loaded key.
    pub fn self_check(&self) -> bool {
        let Some(key) = &self.key_register else { return false };
        let xs: [u64; 64] = self.check_inputs.clone().try_into().unwrap();
        self.eval_batch(key, &xs).iter().zip(&self.check_outputs).all(|(a, b)| a == b)
    }

    /// Output under the loaded key, or `None` while locked.
    pub fn eval(&self, x: u64) -> Option<u64> {
        self.key_register.as_ref().map(|k| self.eval_with(k, x))
    }
}
