//! Continuous health tests for the entropy source: the repetition count test
//! (RCT) and adaptive proportion test (APT).

use serde::{Deserialize, Serialize};

/// Default false-positive exponent: alpha = 2^-20.
pub const ALPHA_LOG2: f64 = 20.0;
pub const APT_WINDOW: usize = 512;

/// RCT cutoff `1 + ceil(20 / H)`.
pub fn rct_cutoff(min_entropy: f64) -> usize {
    1 + (ALPHA_LOG2 / min_entropy).ceil() as usize
}

/// APT cutoff `1 + CRITBINOM(W, 2^-H, 1 - alpha)`: one more than the
/// smallest count whose binomial upper tail drops to alpha.
pub fn apt_cutoff(window: usize, min_entropy: f64) -> usize {
    let p = (-min_entropy).exp2();
    let alpha = (-ALPHA_LOG2).exp2();
    let ln_pmf = |k: usize| ln_choose(window, k) + k as f64 * p.ln() + (window - k) as f64 * (1.0 - p).ln();
    // CRITBINOM: smallest k with P(X <= k) >= 1 - alpha, i.e. P(X > k) <= alpha
    let mut tail = 0.0;
    for k in (0..=window).rev() {
        let with_k = tail + ln_pmf(k).exp();
        if with_k > alpha {
            return 1 + k;
        }
        tail = with_k;
    }
    1
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HealthTest {
    Rct,
    Apt,
}

#[derive(Debug, Clone)]
pub struct RepetitionCountTest {
    cutoff: usize,
    last: Option<bool>,
    count: usize,
}

impl RepetitionCountTest {
    pub fn new(min_entropy: f64) -> Self {
        Self { cutoff: rct_cutoff(min_entropy), last: None, count: 0 }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Feeds one sample; `true` means the cutoff was reached.
    pub fn update(&mut self, bit: bool) -> bool {
        if self.last == Some(bit) {
            self.count += 1;
        } else {
            self.last = Some(bit);
            self.count = 1;
        }
        self.count >= self.cutoff
    }

    pub fn reset(&mut self) {
        self.last = None;
        self.count = 0;
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveProportionTest {
    window: usize,
    cutoff: usize,
    reference: bool,
    seen: usize,
    count: usize,
    windows: u64,
}

impl AdaptiveProportionTest {
    pub fn new(window: usize, min_entropy: f64) -> Self {
        Self { window, cutoff: apt_cutoff(window, min_entropy), reference: false, seen: 0, count: 0, windows: 0 }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Windows started so far, the current one included.
    pub fn windows(&self) -> u64 {
        self.windows
    }

    pub fn update(&mut self, bit: bool) -> bool {
        if self.seen == 0 {
            self.reference = bit;
            self.count = 1;
            self.windows += 1;
        } else if bit == self.reference {
            self.count += 1;
        }
        self.seen += 1;
        let alarm = self.count >= self.cutoff;
        if self.seen == self.window {
            self.seen = 0;
        }
        alarm
    }

    pub fn reset(&mut self) {
        self.seen = 0;
        self.count = 0;
        self.windows = 0;
    }
}
