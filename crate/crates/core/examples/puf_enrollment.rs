//! One-time enrollment: secure readout to the EA, key stability across
//! re-derivations, and distance between devices.

use coma::protocol::{EnrollmentAuthority, ObfuscatedCircuit, ProtocolConfig, UntrustedChip};
use coma::puf::derive_key;

fn main() {
    let cfg = ProtocolConfig::coma2();
    let mut ea = EnrollmentAuthority::new(1);
    let mut keys = Vec::new();
    for seed in 0..8u64 {
        let (circuit, _) = ObfuscatedCircuit::default_payload(seed);
        let mut dev = UntrustedChip::new(cfg.clone(), seed, circuit).unwrap();
        let rec = ea.enroll(&mut dev, &format!("dev{seed}")).unwrap();
        let (base, sk) = (rec.challenge_value().unwrap(), rec.sk_bytes().unwrap());
        let stable = (0..200).filter(|_| derive_key(dev.puf_mut(), base).unwrap() == sk).count();
        let again = ea.enroll(&mut dev, "again").is_err();
        println!("dev{seed}: sk {} stable {stable}/200, second readout refused: {again}", hex::encode(sk));
        keys.push(u128::from_le_bytes(sk));
    }
    let d: Vec<u32> = keys.iter().enumerate().flat_map(|(i, a)| keys[i + 1..].iter().map(move |b| (a ^ b).count_ones())).collect();
    println!("inter-device distance: min {} mean {:.1} max {}", d.iter().min().unwrap(), d.iter().sum::<u32>() as f64 / d.len() as f64, d.iter().max().unwrap());
}
