//! Reproduces the SAT-attack table: iterations and time per size and kind.
//!
//! cargo run --release --example sat_attack -- [max_n] [timeout_secs]

use std::time::Duration;

use coma::attacks::{safe_update_period, sweep, sweep_csv};
use coma::costmodel::{c_prng, CostParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let max_n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let timeout = Duration::from_secs(args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60));
    let sizes: Vec<usize> = (2..=6).map(|k| 1 << k).filter(|&n| n <= max_n).collect();
    let rows = sweep(&sizes, &["blk", "nonblk"], 1, timeout).expect("valid sizes");
    print!("{}", sweep_csv(&rows));

    let p = c_prng(&CostParams::coma2());
    for r in rows.iter().filter(|r| r.size == 64) {
        let sat = (r.outcome == "ok").then_some(r.iterations as u64);
        let u = safe_update_period(64, p, sat);
        println!("# n=64 {}: U in [{}, {}] ({})", r.kind, u.lo, u.hi, u.advice());
    }
}
