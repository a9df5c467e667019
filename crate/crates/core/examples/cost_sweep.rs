//! DCC vs LCC cycles and energy over message sizes, plus the crossover.
//!
//! cargo run --example cost_sweep > sweep.csv

use coma::costmodel::{c_byte_lcc, crossover, sweep, sweep_csv, CostParams};

fn main() {
    let profiles = [CostParams::coma1(), CostParams::coma2()];
    print!("{}", sweep_csv(&sweep(&profiles, 16, 65536)));
    for p in &profiles {
        eprintln!("{}: LCC {} cycles/byte", p.profile, c_byte_lcc(p).unwrap());
    }
    if let Some(c) = crossover(&profiles[0], &profiles[1]) {
        eprintln!("crossover at {} bytes (commonly quoted: {})", c.computed_bytes, c.stated_bytes);
    }
}
