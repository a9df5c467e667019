//! Recovery of `y = A x + b` over GF(2) from plaintext/ciphertext pairs.

use crate::bits::{self, Bits};

pub const MAX_AFFINE_N: usize = 64;

/// `y_j = parity(rows[j] & x) ^ b_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineModel {
    pub n: usize,
    pub rows: Vec<u64>,
    pub b: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AffineOutcome {
    Recovered(AffineModel),
    /// The pairs fit some affine map but do not pin it down.
    Underdetermined { rank: usize },
    /// No single affine map fits every pair.
    Inconsistent,
}

impl AffineModel {
    pub fn apply(&self, x: &Bits) -> Bits {
        let xv = bits::to_u64(x);
        let y = self.rows.iter().enumerate().fold(0u64, |acc, (j, r)| acc | (u64::from((r & xv).count_ones() & 1 == 1) << j));
        bits::from_u64(y ^ self.b, self.n)
    }

    /// Solves `A x = y + b`; `None` when A is singular.
    pub fn invert(&self, y: &Bits) -> Option<Bits> {
        let mut rows: Vec<(u64, bool)> =
            self.rows.iter().enumerate().map(|(j, &r)| (r, ((bits::to_u64(y) ^ self.b) >> j) & 1 == 1)).collect();
        let n = self.n;
        for col in 0..n {
            let piv = (col..n).find(|&r| (rows[r].0 >> col) & 1 == 1)?;
            rows.swap(col, piv);
            let (pr, pv) = rows[col];
            for (r, row) in rows.iter_mut().enumerate() {
                if r != col && (row.0 >> col) & 1 == 1 {
                    row.0 ^= pr;
                    row.1 ^= pv;
                }
            }
        }
        Some(rows.iter().map(|&(_, v)| v).collect())
    }
}

fn shortcut(n: usize, pairs: &[(Bits, Bits)]) -> Option<AffineModel> {
    let find = |target: u64| pairs.iter().find(|(x, _)| bits::to_u64(x) == target).map(|(_, y)| bits::to_u64(y));
    let b = find(0)?;
    let mut rows = vec![0u64; n];
    for i in 0..n {
        let col = find(1 << i)? ^ b;
        for (j, row) in rows.iter_mut().enumerate() {
            *row |= ((col >> j) & 1) << i;
        }
    }
    Some(AffineModel { n, rows, b })
}

/// Chosen-plaintext shortcut when `0` and every unit vector were queried,
/// otherwise Gaussian elimination on `[x | 1]` against all outputs at once.
pub fn affine_recover(n: usize, pairs: &[(Bits, Bits)]) -> AffineOutcome {
    assert!(n <= MAX_AFFINE_N);
    let model = shortcut(n, pairs).map(Ok).unwrap_or_else(|| eliminate(n, pairs));
    match model {
        Ok(m) => {
            if pairs.iter().all(|(x, y)| &m.apply(x) == y) {
                AffineOutcome::Recovered(m)
            } else {
                AffineOutcome::Inconsistent
            }
        }
        Err(outcome) => outcome,
    }
}

fn eliminate(n: usize, pairs: &[(Bits, Bits)]) -> Result<AffineModel, AffineOutcome> {
    // unknown column n is the constant term
    let mut rows: Vec<(u128, u64)> =
        pairs.iter().map(|(x, y)| (u128::from(bits::to_u64(x)) | (1u128 << n), bits::to_u64(y))).collect();
    let width = n + 1;
    let mut rank = 0;
    let mut pivots = Vec::new();
    for col in 0..width {
        let Some(p) = (rank..rows.len()).find(|&r| (rows[r].0 >> col) & 1 == 1) else { continue };
        rows.swap(rank, p);
        let (pr, py) = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && (row.0 >> col) & 1 == 1 {
                row.0 ^= pr;
                row.1 ^= py;
            }
        }
        pivots.push(col);
        rank += 1;
    }
    if rows[rank..].iter().any(|&(_, y)| y != 0) {
        return Err(AffineOutcome::Inconsistent);
    }
    if rank < width {
        return Err(AffineOutcome::Underdetermined { rank });
    }
    // fully reduced: row k holds unknown `pivots[k] == k` for every output bit
    let mut a = vec![0u64; n];
    let mut b = 0u64;
    for (k, &col) in pivots.iter().enumerate() {
        let y = rows[k].1;
        if col == n {
            b = y;
        } else {
            for (j, row) in a.iter_mut().enumerate() {
                *row |= ((y >> j) & 1) << col;
            }
        }
    }
    Ok(AffineModel { n, rows: a, b })
}
