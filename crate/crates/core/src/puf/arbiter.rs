use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub const STAGES: usize = 64;
/// Default per-evaluation jitter, in units of the stage-delay spread.
pub const DEFAULT_NOISE: f64 = 0.05;

/// Arbiter PUF under the additive delay model: the response is the sign of
/// `w . phi(c)` with `phi_i = prod_{j >= i} (1 - 2 c_j)` and a bias term.
#[derive(Debug, Clone)]
pub struct ArbiterPuf {
    weights: [f64; STAGES + 1],
    noise: f64,
    rng: ChaCha20Rng,
}

/// Parity feature vector of a challenge.
pub fn features(challenge: u64) -> [f64; STAGES + 1] {
    let mut phi = [1.0; STAGES + 1];
    let mut acc = 1.0;
    for i in (0..STAGES).rev() {
        if (challenge >> i) & 1 == 1 {
            acc = -acc;
        }
        phi[i] = acc;
    }
    phi
}

impl ArbiterPuf {
    /// Manufactures a device: stage deltas drawn from N(0, 1).
    pub fn new(device_seed: u64, noise: f64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(device_seed);
        let weights = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        Self { weights, noise, rng: ChaCha20Rng::seed_from_u64(device_seed ^ 0x9e37_79b9_7f4a_7c15) }
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn weights(&self) -> &[f64; STAGES + 1] {
        &self.weights
    }

    /// Noise-free delay difference.
    pub fn delay(&self, challenge: u64) -> f64 {
        features(challenge).iter().zip(&self.weights).map(|(p, w)| p * w).sum()
    }

    pub fn eval_noiseless(&self, challenge: u64) -> bool {
        self.delay(challenge) > 0.0
    }

    pub fn eval(&mut self, challenge: u64) -> bool {
        let jitter = if self.noise > 0.0 { Normal::new(0.0, self.noise).unwrap().sample(&mut self.rng) } else { 0.0 };
        self.delay(challenge) + jitter > 0.0
    }

    /// Number of 1 responses over `votes` evaluations.
    pub fn count_ones(&mut self, challenge: u64, votes: u8) -> u8 {
        (0..votes).filter(|_| self.eval(challenge)).count() as u8
    }

    pub fn reseed_noise<R: Rng>(&mut self, rng: &mut R) {
        self.rng = ChaCha20Rng::from_rng(rng).unwrap();
    }
}

pub fn puf_eval(puf: &mut ArbiterPuf, challenge: u64) -> bool {
    puf.eval(challenge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_closed_form() {
        let c = 0b1011u64;
        let phi = features(c);
        for i in 0..STAGES {
            let ones = (i..STAGES).filter(|&j| (c >> j) & 1 == 1).count();
            assert_eq!(phi[i], if ones % 2 == 0 { 1.0 } else { -1.0 });
        }
        assert_eq!(phi[STAGES], 1.0);
    }

    #[test]
    fn noiseless_is_deterministic() {
        let mut p = ArbiterPuf::new(3, 0.0);
        for c in [0u64, 1, 0xdead_beef, u64::MAX] {
            let first = p.eval(c);
            assert!((0..20).all(|_| p.eval(c) == first));
            assert_eq!(first, p.eval_noiseless(c));
        }
    }

    #[test]
    fn inter_device_distance_near_half() {
        // a single pair spreads by about 0.04 (weight-vector correlation),
        // so the tolerance applies to the mean over device pairs
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (pairs, n) = (50, 10_000);
        let mut total = 0.0;
        for d in 0..pairs {
            let (a, b) = (ArbiterPuf::new(2 * d, 0.0), ArbiterPuf::new(2 * d + 1, 0.0));
            let diff = (0..n)
                .filter(|_| {
                    let c: u64 = rng.gen();
                    a.eval_noiseless(c) != b.eval_noiseless(c)
                })
                .count();
            total += diff as f64 / n as f64;
        }
        let rate = total / pairs as f64;
        assert!((rate - 0.5).abs() < 0.03, "{rate}");
    }
}
