//! Scrambles random blocks through the CSN and recovers them with the RCSN,
//! on both network kinds and across TRN rotations.
//!
//! cargo run --example csn_roundtrip -- [n]

use coma::bits;
use coma::switchnet::{csn_forward, enumerate_permutations, rcsn_backward, NetworkTopology, Trn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for topo in [NetworkTopology::omega(n).unwrap(), NetworkTopology::near_nonblocking(n).unwrap()] {
        let trn = Trn::random(&topo, &mut rng);
        let mut ok = 0;
        for k in 0..1000 {
            let key = trn.shifted(k % trn.len());
            let x = bits::random(&mut rng, n);
            let y = csn_forward(&topo, &key, &x).unwrap();
            ok += (rcsn_backward(&topo, &key, &y).unwrap() == x) as usize;
        }
        println!("{}: {} stages, {} TRN bits, {ok}/1000 round-trips", topo.kind().label(), topo.stage_count(), topo.config_bits());
        if n <= 8 {
            println!("  distinct permutations: {}", enumerate_permutations(&topo).unwrap());
        }
        let x = bits::random(&mut rng, n);
        println!("  x = {}\n  y = {}", bits::to_hex(&x), bits::to_hex(&csn_forward(&topo, &trn, &x).unwrap()));
    }
}
