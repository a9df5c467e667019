//! Entropy-source health tests under injected faults, and the PUF check
//! against genuine and keyed-function oracles.

use coma::puf::{puf_health_check, ArbiterPuf, PseudoPuf, DEFAULT_NOISE};
use coma::rng::{EntropySourceModel, SourceFault, Trng};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    for fault in [SourceFault::None, SourceFault::StuckAt0, SourceFault::StuckAt1, SourceFault::Bias(0.9)] {
        let mut src = EntropySourceModel::unbiased(7);
        src.set_fault(fault);
        let mut trng = Trng::new(src, 1.0);
        let mut bits = 0u64;
        while bits < 100_000 && trng.next_bit().is_ok() {
            bits += 1;
        }
        match trng.monitor().events().first() {
            Some(e) => println!("{fault:?}: alarm after {bits} bits: {e:?}"),
            None => println!("{fault:?}: {bits} bits, no alarm"),
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut genuine = ArbiterPuf::new(11, DEFAULT_NOISE);
    let r = puf_health_check(|c| genuine.eval(c), 10_000, &mut rng);
    println!("arbiter PUF: {:?} (flip agreement {:.3})", r.verdict, r.flip_agreement);
    let fake = PseudoPuf::new([5; 16]);
    let r = puf_health_check(|c| fake.eval(c), 10_000, &mut rng);
    println!("pseudo PUF: {:?} (flip agreement {:.3})", r.verdict, r.flip_agreement);
}
