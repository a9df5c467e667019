//! Trivium keystream generator on three integer registers.
//!
//! Key and IV use the eSTREAM byte convention: state bit `s_{i+1}` takes bit
//! `79 - i` of the 80-bit value, bits numbered LSB-first within bytes.
//! Keystream bits are packed LSB-first.

const MASK_A: u128 = (1 << 93) - 1;
const MASK_B: u128 = (1 << 84) - 1;
const MASK_C: u128 = (1 << 111) - 1;

#[derive(Clone)]
pub struct Trivium {
    a: u128,
    b: u128,
    c: u128,
}

#[inline]
fn bit(r: u128, i: u32) -> u128 {
    (r >> i) & 1
}

fn load80(bytes: &[u8; 10]) -> u128 {
    (0..80).fold(0u128, |acc, i| {
        let j = 79 - i;
        acc | (u128::from((bytes[j / 8] >> (j % 8)) & 1) << i)
    })
}

impl Trivium {
    pub fn new(key: &[u8; 10], iv: &[u8; 10]) -> Self {
        let mut t = Self { a: load80(key), b: load80(iv), c: 0b111 << 108 };
        for _ in 0..4 * 288 {
            t.next_bit();
        }
        t
    }

    #[inline]
    pub fn next_bit(&mut self) -> bool {
        let (a, b, c) = (self.a, self.b, self.c);
        let mut t1 = bit(a, 65) ^ bit(a, 92);
        let mut t2 = bit(b, 68) ^ bit(b, 83);
        let mut t3 = bit(c, 65) ^ bit(c, 110);
        let z = t1 ^ t2 ^ t3;
        t1 ^= (bit(a, 90) & bit(a, 91)) ^ bit(b, 77);
        t2 ^= (bit(b, 81) & bit(b, 82)) ^ bit(c, 86);
        t3 ^= (bit(c, 108) & bit(c, 109)) ^ bit(a, 68);
        self.a = ((a << 1) | t3) & MASK_A;
        self.b = ((b << 1) | t1) & MASK_B;
        self.c = ((c << 1) | t2) & MASK_C;
        z == 1
    }

    pub fn fill(&mut self, out: &mut [u8]) {
        for byte in out {
            *byte = (0..8).fold(0u8, |acc, j| acc | (u8::from(self.next_bit()) << j));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keystream(key: [u8; 10], iv: [u8; 10], len: usize) -> Vec<u8> {
        let mut out = vec![0; len];
        Trivium::new(&key, &iv).fill(&mut out);
        out
    }

    #[test]
    fn estream_zero_key_zero_iv() {
        assert_eq!(hex::encode_upper(keystream([0; 10], [0; 10], 16)), "FBE0BF265859051B517A2E4E239FC97F");
    }

    #[test]
    fn estream_set1_vector0() {
        let mut key = [0; 10];
        key[0] = 0x80;
        assert_eq!(hex::encode_upper(keystream(key, [0; 10], 8)), "38EB86FF730D7A9C");
    }

    #[test]
    fn matches_reference_crate() {
        let reverse = |b: &[u8; 10]| {
            let mut out = [0u8; 10];
            for i in 0..80 {
                let j = 79 - i;
                out[i / 8] |= ((b[j / 8] >> (j % 8)) & 1) << (i % 8);
            }
            out
        };
        for seed in 0u8..20 {
            let key: [u8; 10] = std::array::from_fn(|i| seed.wrapping_mul(31).wrapping_add(i as u8 * 7));
            let iv: [u8; 10] = std::array::from_fn(|i| seed ^ (i as u8 * 13));
            let reference = trivium::Trivium::new(&reverse(&key), &reverse(&iv), trivium::BitOrder::Lsb, trivium::PackOrder::Lsb)
                .xor_bytes(&[0u8; 64]);
            assert_eq!(keystream(key, iv, 64), reference);
        }
    }
}
