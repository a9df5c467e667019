use serde::{Deserialize, Serialize};

use super::SwitchNetError;

/// Which family of logarithmic network a topology belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetworkKind {
    /// Blocking Omega network: `log2 n` shuffle-exchange stages.
    Omega,
    /// `LOG(n, m, p)`: an Omega network followed by `m` mirrored stages,
    /// `p` vertical copies (only `p = 1` is built).
    Log { extra_stages: usize, copies: usize },
}

impl NetworkKind {
    pub fn label(&self) -> String {
        match self {
            NetworkKind::Omega => "omega".to_string(),
            NetworkKind::Log { extra_stages, copies } => format!("log-m{extra_stages}-p{copies}"),
        }
    }
}

/// One column of the network: a wiring permutation followed by `n/2`
/// re-routing blocks. Block `j` takes lines `2j` and `2j + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    /// Line `i` of the previous column lands on position `wiring[i]`.
    pub wiring: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkTopology {
    n: usize,
    kind: NetworkKind,
    stages: Vec<Stage>,
}

fn log2_checked(n: usize, min: usize) -> Result<usize, SwitchNetError> {
    if n < min || !n.is_power_of_two() {
        return Err(SwitchNetError::InvalidSize { n, min });
    }
    Ok(n.trailing_zeros() as usize)
}

/// Perfect shuffle: rotate the `bits`-wide line index left by one.
pub(crate) fn shuffle(i: usize, bits: usize) -> usize {
    let n = 1usize << bits;
    ((i << 1) | (i >> (bits - 1))) & (n - 1)
}

/// Inverse perfect shuffle: rotate right by one.
pub(crate) fn unshuffle(i: usize, bits: usize) -> usize {
    (i >> 1) | ((i & 1) << (bits - 1))
}

impl NetworkTopology {
    /// Omega network with perfect-shuffle wiring ahead of every column.
    pub fn omega(n: usize) -> Result<Self, SwitchNetError> {
        let k = log2_checked(n, 4)?;
        let stages = (0..k)
            .map(|_| Stage { wiring: (0..n).map(|i| shuffle(i, k)).collect() })
            .collect();
        Ok(Self { n, kind: NetworkKind::Omega, stages })
    }

    /// `LOG(n, log2 n - 2, 1)`: the Omega network followed by its mirror
    /// image (inverse-shuffle columns), stopping one column short of a
    /// rearrangeable Benes-equivalent network.
    pub fn near_nonblocking(n: usize) -> Result<Self, SwitchNetError> {
        let k = log2_checked(n, 4)?;
        let extra = k - 2;
        let mut stages: Vec<Stage> = (0..k)
            .map(|_| Stage { wiring: (0..n).map(|i| shuffle(i, k)).collect() })
            .collect();
        stages.extend(
            (0..extra).map(|_| Stage { wiring: (0..n).map(|i| unshuffle(i, k)).collect() }),
        );
        Ok(Self { n, kind: NetworkKind::Log { extra_stages: extra, copies: 1 }, stages })
    }

    pub fn build(kind: NetworkKind, n: usize) -> Result<Self, SwitchNetError> {
        match kind {
            NetworkKind::Omega => Self::omega(n),
            NetworkKind::Log { copies, .. } => {
                let t = Self::near_nonblocking(n)?;
                if copies != 1 || kind != t.kind {
                    return Err(SwitchNetError::UnsupportedKind(kind));
                }
                Ok(t)
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn rrb_count(&self) -> usize {
        self.stages.len() * self.n / 2
    }

    /// Number of TRN bits: three per re-routing block.
    pub fn config_bits(&self) -> usize {
        3 * self.rrb_count()
    }

    /// Same wiring, ignoring the kind label.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.n == other.n && self.stages == other.stages
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_sizes() {
        let t = NetworkTopology::omega(8).unwrap();
        assert_eq!((t.stage_count(), t.rrb_count()), (3, 12));
        let t = NetworkTopology::omega(4).unwrap();
        assert_eq!((t.stage_count(), t.rrb_count()), (2, 4));
        assert!(matches!(NetworkTopology::omega(3), Err(SwitchNetError::InvalidSize { .. })));
        assert!(NetworkTopology::omega(2).is_err());
        assert!(NetworkTopology::omega(0).is_err());
    }

    #[test]
    fn near_nonblocking_sizes() {
        let t = NetworkTopology::near_nonblocking(8).unwrap();
        assert_eq!((t.stage_count(), t.rrb_count(), t.config_bits()), (4, 16, 48));
        let t = NetworkTopology::near_nonblocking(64).unwrap();
        assert_eq!((t.stage_count(), t.rrb_count(), t.config_bits()), (10, 320, 960));
        let t4 = NetworkTopology::near_nonblocking(4).unwrap();
        assert!(t4.same_structure(&NetworkTopology::omega(4).unwrap()));
        assert!(NetworkTopology::near_nonblocking(12).is_err());
    }

    #[test]
    fn config_bits_formula() {
        for k in 2..=9 {
            let n = 1usize << k;
            let t = NetworkTopology::near_nonblocking(n).unwrap();
            assert_eq!(t.config_bits(), 3 * n * (k - 1));
            assert_eq!(t.stage_count(), 2 * k - 2);
        }
    }

    #[test]
    fn wirings_are_permutations() {
        for n in [4, 8, 16, 64, 256] {
            for t in [NetworkTopology::omega(n).unwrap(), NetworkTopology::near_nonblocking(n).unwrap()] {
                for s in t.stages() {
                    let mut seen = vec![false; n];
                    for &w in &s.wiring {
                        assert!(!seen[w]);
                        seen[w] = true;
                    }
                }
            }
        }
    }

    #[test]
    fn shuffle_inverse() {
        for i in 0..64 {
            assert_eq!(unshuffle(shuffle(i, 6), 6), i);
        }
    }
}
