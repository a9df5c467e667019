//! ACORN-128 (v3), bit-serial.
//!
//! The 293-bit state lives in a sliding window: each step writes the new bit
//! past the end and advances the origin, so no per-step shifting happens.

const STATE: usize = 293;
const WINDOW: usize = 4096;

struct State {
    buf: Vec<u8>,
    origin: usize,
}

#[inline]
fn maj(x: u8, y: u8, z: u8) -> u8 {
    (x & y) ^ (x & z) ^ (y & z)
}

#[inline]
fn ch(x: u8, y: u8, z: u8) -> u8 {
    (x & y) ^ ((x ^ 1) & z)
}

impl State {
    fn new() -> Self {
        Self { buf: vec![0; STATE + WINDOW], origin: 0 }
    }

    /// One update; returns the keystream bit and absorbs `m`.
    #[inline]
    fn step(&mut self, m: u8, ca: u8, cb: u8) -> u8 {
        if self.origin == WINDOW {
            self.buf.copy_within(WINDOW..WINDOW + STATE, 0);
            self.origin = 0;
        }
        let s = &mut self.buf[self.origin..self.origin + STATE + 1];
        s[289] ^= s[235] ^ s[230];
        s[230] ^= s[196] ^ s[193];
        s[193] ^= s[160] ^ s[154];
        s[154] ^= s[111] ^ s[107];
        s[107] ^= s[66] ^ s[61];
        s[61] ^= s[23] ^ s[0];
        let ks = s[12] ^ s[154] ^ maj(s[235], s[61], s[193]) ^ ch(s[230], s[111], s[66]);
        let f = s[0] ^ (s[107] ^ 1) ^ maj(s[244], s[23], s[160]) ^ (ca & s[196]) ^ (cb & ks);
        s[STATE] = f ^ m;
        self.origin += 1;
        ks
    }

    fn init(key: &[u8; 16], iv: &[u8; 16]) -> Self {
        let bit = |b: &[u8; 16], i: usize| (b[i / 8] >> (i % 8)) & 1;
        let mut st = Self::new();
        for i in 0..128 {
            st.step(bit(key, i), 1, 1);
        }
        for i in 0..128 {
            st.step(bit(iv, i), 1, 1);
        }
        st.step(bit(key, 0) ^ 1, 1, 1);
        for i in 257..1792 {
            st.step(bit(key, i % 128), 1, 1);
        }
        st
    }

    fn absorb(&mut self, data: &[u8]) {
        for &byte in data {
            for j in 0..8 {
                self.step((byte >> j) & 1, 1, 1);
            }
        }
    }

    fn pad(&mut self, cb: u8) {
        for i in 0..512 {
            self.step(u8::from(i == 0), u8::from(i < 256), cb);
        }
    }

    fn tag(&mut self) -> [u8; 16] {
        for _ in 0..768 - 128 {
            self.step(0, 1, 1);
        }
        let mut tag = [0u8; 16];
        for i in 0..128 {
            tag[i / 8] |= self.step(0, 1, 1) << (i % 8);
        }
        tag
    }
}

pub(crate) fn encrypt(key: &[u8; 16], iv: &[u8; 16], ad: &[u8], msg: &[u8]) -> (Vec<u8>, [u8; 16]) {
    let mut st = State::init(key, iv);
    st.absorb(ad);
    st.pad(1);
    let ct = msg
        .iter()
        .map(|&p| {
            (0..8).fold(0u8, |c, j| {
                let bit = (p >> j) & 1;
                c | ((st.step(bit, 1, 0) ^ bit) << j)
            })
        })
        .collect();
    st.pad(0);
    (ct, st.tag())
}

/// Returns the candidate plaintext and the recomputed tag; the caller compares.
pub(crate) fn decrypt(key: &[u8; 16], iv: &[u8; 16], ad: &[u8], ct: &[u8]) -> (Vec<u8>, [u8; 16]) {
    let mut st = State::init(key, iv);
    st.absorb(ad);
    st.pad(1);
    let pt = ct
        .iter()
        .map(|&c| {
            (0..8).fold(0u8, |p, j| {
                let ks = st.step(0, 1, 0);
                // the plaintext bit is only known after the keystream bit,
                // so fold it into the freshly written state bit
                let bit = ((c >> j) & 1) ^ ks;
                st.fix_last(bit);
                p | (bit << j)
            })
        })
        .collect();
    st.pad(0);
    (pt, st.tag())
}

impl State {
    #[inline]
    fn fix_last(&mut self, m: u8) {
        self.buf[self.origin + STATE - 1] ^= m;
    }
}
