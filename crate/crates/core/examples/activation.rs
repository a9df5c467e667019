//! Enroll a device, activate it, then show that tampering and DAL replay
//! both leave the circuit locked.
//!
//! cargo run --example activation -- [coma1|coma2]

use coma::costmodel::{activation_cycles, CostParams};
use coma::protocol::{activate, activate_over, provision_pair, replay_dal, transcript_jsonl, Link, ProtocolConfig};

fn main() {
    let profile = std::env::args().nth(1).unwrap_or_else(|| "coma2".into());
    let cfg = ProtocolConfig::for_profile(CostParams::builtin(&profile).expect("known profile")).unwrap();
    let (mut t, mut u) = provision_pair(&cfg, 42).unwrap();

    println!("locked self-check: {}", u.circuit().self_check());
    let mut link = Link::new();
    let r = activate_over(&mut t, &mut u, &mut link).unwrap();
    print!("{}", transcript_jsonl(&link.transcript));
    println!(
        "unlocked: {}  cycles {} (closed form {})",
        u.circuit().self_check(),
        r.cycles_spent,
        activation_cycles(&cfg.cost, u.circuit().key_bits() as u64)
    );

    for seq in 0..5 {
        u.reset();
        let err = activate_over(&mut t, &mut u, &mut Link::with_tamper(seq)).unwrap_err();
        println!("tamper frame {seq}: {err}");
    }

    u.reset();
    activate(&mut t, &mut u).unwrap();
    let old = u.captured_dal().to_vec();
    u.reset();
    println!("replayed DAL: {}", replay_dal(&mut t, &mut u, &old).unwrap_err());
}
