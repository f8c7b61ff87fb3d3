use crate::error::{MeshError, Result};
use crate::matrix::{TransferMatrix, C64};

/// Largest matrix accepted by [`permanent`].
pub const PERMANENT_CAP: usize = 12;

fn check(m: &TransferMatrix, cap: usize) -> Result<usize> {
    if !m.is_square() || m.rows() == 0 {
        return Err(MeshError::Domain(format!(
            "permanent needs a non-empty square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() > cap {
        return Err(MeshError::Size {
            what: "permanent".into(),
            got: m.rows(),
            limit: cap,
        });
    }
    Ok(m.rows())
}

/// Ryser's formula with Gray-code subset order, `O(2ⁿ·n)`.
pub fn permanent(m: &TransferMatrix) -> Result<C64> {
    let n = check(m, PERMANENT_CAP)?;
    let mut row_sums = vec![C64::new(0.0, 0.0); n];
    let mut total = C64::new(0.0, 0.0);
    let mut gray = 0usize;
    for k in 1..(1usize << n) {
        let next = k ^ (k >> 1);
        let col = (gray ^ next).trailing_zeros() as usize;
        let added = next & (1 << col) != 0;
        for (i, s) in row_sums.iter_mut().enumerate() {
            if added {
                *s += m.get(i, col);
            } else {
                *s -= m.get(i, col);
            }
        }
        gray = next;
        let prod: C64 = row_sums.iter().product();
        if next.count_ones() % 2 == 1 {
            total -= prod;
        } else {
            total += prod;
        }
    }
    Ok(if n % 2 == 1 { -total } else { total })
}

/// Sum over all permutations, `O(n!·n)`. Reference implementation for small `n`.
pub fn permanent_naive(m: &TransferMatrix) -> Result<C64> {
    let n = check(m, 9)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = C64::new(0.0, 0.0);
    loop {
        total += perm.iter().enumerate().map(|(i, &j)| m.get(i, j)).product::<C64>();
        // Next permutation in lexicographic order.
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).expect("successor exists");
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    Ok(total)
}
