//! Chosen-plaintext affine recovery: a fixed TRN falls to n+1 blocks, a
//! rotating one does not.
//!
//! cargo run --example affine_attack -- [n]

use coma::attacks::{affine_recover, AffineOutcome};
use coma::bits::{self, Bits};
use coma::switchnet::{csn_forward, NetworkTopology, Trn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn observe(topo: &NetworkTopology, trn: &Trn, blocks: usize, shift: bool, rng: &mut ChaCha20Rng) -> Vec<(Bits, Bits)> {
    let n = topo.n();
    (0..blocks)
        .map(|i| {
            let x = match i {
                0 => bits::zeros(n),
                i if i <= n => bits::from_u64(1 << (i - 1), n),
                _ => bits::random(rng, n),
            };
            let key = if shift { trn.shifted(i) } else { trn.clone() };
            let y = csn_forward(topo, &key, &x).unwrap();
            (x, y)
        })
        .collect()
}

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let topo = NetworkTopology::near_nonblocking(n).unwrap();
    let trn = Trn::random(&topo, &mut rng);
    for (blocks, shift) in [(n, false), (n + 1, false), (4 * n, true)] {
        let pairs = observe(&topo, &trn, blocks, shift, &mut rng);
        let verdict = match affine_recover(n, &pairs) {
            AffineOutcome::Recovered(m) => {
                let held = (0..1000)
                    .filter(|_| {
                        let x = bits::random(&mut rng, n);
                        m.apply(&x) == csn_forward(&topo, &trn, &x).unwrap()
                    })
                    .count();
                format!("recovered, predicts {held}/1000 fresh blocks")
            }
            AffineOutcome::Underdetermined { rank } => format!("underdetermined (rank {rank})"),
            AffineOutcome::Inconsistent => "inconsistent: no single affine map".into(),
        };
        println!("n={n} blocks={blocks} shift={shift}: {verdict}");
    }
}
