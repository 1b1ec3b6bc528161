//! Locally consistent 3-coloring of adjacent-distinct symbol strings.
//!
//! The construction is the classic deterministic coin-tossing reduction: each
//! position repeatedly replaces its color by (2 * lowest-differing-bit-index
//! vs. the left neighbor + that bit), until six colors remain; three sweeps
//! then eliminate colors 6, 5, 4, two parallel rewrites put a 1 into every
//! window of three, and fixed endpoint patches pin the first and last
//! symbols. Each position's color depends only on a window of radius at most
//! `locality` around it.

use crate::params::Params;
use crate::symbol::{ord, SymbolId};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CvlError {
    #[error("input is empty")]
    Empty,
    #[error("adjacent equal symbols at position {0}")]
    AdjacentEqual(usize),
}

/// Number of coin-tossing iterations needed to bring colors below 6, as a
/// function of the alphabet size only (so every call agrees on it).
fn reduction_rounds(gamma_size: u128) -> u32 {
    let mut max = gamma_size.saturating_sub(1);
    let mut rounds = 0;
    while max > 5 {
        let bits = 128 - max.leading_zeros();
        max = 2 * (bits as u128 - 1) + 1;
        rounds += 1;
    }
    rounds
}

/// Color an adjacent-distinct string over the working alphabet with colors
/// {1,2,3} such that no two neighbors are equal, every three consecutive
/// positions contain a 1, and (for length > 1) the string starts with 1 and
/// ends with 2 or 3. A single symbol is colored 3.
pub fn cvl_color(params: &Params, x: &[SymbolId]) -> Result<Vec<u8>, CvlError> {
    let ords: Vec<u128> = x.iter().map(|&s| ord(params, s)).collect();
    cvl_color_ords(params.gamma_size, &ords)
}

pub fn cvl_color_ords(gamma_size: u128, x: &[u128]) -> Result<Vec<u8>, CvlError> {
    let n = x.len();
    if n == 0 {
        return Err(CvlError::Empty);
    }
    for i in 1..n {
        if x[i] == x[i - 1] {
            return Err(CvlError::AdjacentEqual(i + 1));
        }
    }
    match n {
        1 => return Ok(vec![3]),
        2 => return Ok(vec![1, 2]),
        3 => return Ok(vec![1, 2, 3]),
        4 => return Ok(vec![1, 2, 1, 2]),
        _ => {}
    }

    // Deterministic coin tossing down to colors {0..5}.
    let mut colors: Vec<u128> = x.to_vec();
    for _ in 0..reduction_rounds(gamma_size) {
        let mut next = Vec::with_capacity(n);
        next.push(2 * 0 + (colors[0] & 1));
        for i in 1..n {
            let j = (colors[i] ^ colors[i - 1]).trailing_zeros() as u128;
            next.push(2 * j + ((colors[i] >> j) & 1));
        }
        colors = next;
    }
    let mut c: Vec<u8> = colors.iter().map(|&v| v as u8).collect();
    debug_assert!(c.iter().all(|&v| v <= 5));

    // Eliminate colors 5, 4, 3: each such position takes the smallest color
    // in {0,1,2} not used by a neighbor. Neighbors never share the
    // eliminated color, so reading the pre-pass array is race-free.
    for elim in [5u8, 4, 3] {
        let prev = c.clone();
        for i in 0..n {
            if prev[i] == elim {
                let left = if i > 0 { Some(prev[i - 1]) } else { None };
                let right = if i + 1 < n { Some(prev[i + 1]) } else { None };
                c[i] = (0..3u8)
                    .find(|v| Some(*v) != left && Some(*v) != right)
                    .expect("two neighbors cannot block three colors");
            }
        }
    }
    for v in c.iter_mut() {
        *v += 1;
    }

    // Put a 1 in every window of three: first all 232 -> 212, then all
    // 323 -> 313, each in parallel.
    for (a, b) in [(2u8, 3u8), (3, 2)] {
        let prev = c.clone();
        for i in 1..n - 1 {
            if prev[i - 1] == a && prev[i] == b && prev[i + 1] == a {
                c[i] = 1;
            }
        }
    }

    // Endpoint patches (length > 4 here). The prefix cases are exhaustive:
    // after the rewrites above, any string not already starting with 1 must
    // start with one of the three listed patterns.
    let is23 = |v: u8| v == 2 || v == 3;
    if is23(c[0]) {
        if is23(c[1]) && c[2] == 1 {
            c[0] = 1;
            c[1] = 2;
            c[2] = 1;
        } else if c[1] == 1 && is23(c[2]) && is23(c[3]) {
            c[0] = 1;
            c[1] = 2;
            c[2] = 1;
            c[3] = 2;
        } else if c[1] == 1 && is23(c[2]) && c[3] == 1 {
            c[0] = 1;
            c[1] = 2;
            c[2] = 3;
            c[3] = 1;
        } else {
            unreachable!("unmatched prefix pattern {:?}", &c[..4]);
        }
    }
    if c[n - 1] == 1 {
        if c[n - 3] == 1 && is23(c[n - 2]) {
            c[n - 3] = 1;
            c[n - 2] = 2;
            c[n - 1] = 3;
        } else if c[n - 4] == 1 && is23(c[n - 3]) && is23(c[n - 2]) {
            c[n - 4] = 1;
            c[n - 3] = 2;
            c[n - 2] = 1;
            c[n - 1] = 2;
        } else {
            unreachable!("unmatched suffix pattern {:?}", &c[n - 4..]);
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn check_properties(c: &[u8]) {
        let n = c.len();
        assert!(c.iter().all(|&v| (1..=3).contains(&v)));
        for i in 1..n {
            assert_ne!(c[i], c[i - 1], "adjacent equal colors at {i}");
        }
        for i in 0..n.saturating_sub(2) {
            assert!(
                c[i] == 1 || c[i + 1] == 1 || c[i + 2] == 1,
                "no 1 in window at {i}: {:?}",
                &c[i..i + 3]
            );
        }
        if n == 1 {
            assert_eq!(c[0], 3);
        } else {
            assert_eq!(c[0], 1, "must start with 1: {:?}", &c[..4.min(n)]);
            assert!(c[n - 1] == 2 || c[n - 1] == 3, "must end with 2 or 3");
        }
    }

    fn random_adjacent_distinct(rng: &mut ChaCha20Rng, len: usize, gamma: u128) -> Vec<u128> {
        let mut v = Vec::with_capacity(len);
        let mut last = None;
        for _ in 0..len {
            loop {
                let s = rng.gen::<u128>() % gamma;
                if Some(s) != last {
                    v.push(s);
                    last = Some(s);
                    break;
                }
            }
        }
        v
    }

    #[test]
    fn short_tables() {
        let p = Params::desk(64, 2, 16).unwrap();
        let g = p.gamma_size;
        assert_eq!(cvl_color_ords(g, &[7]).unwrap(), vec![3]);
        assert_eq!(cvl_color_ords(g, &[7, 9]).unwrap(), vec![1, 2]);
        assert_eq!(cvl_color_ords(g, &[7, 9, 7]).unwrap(), vec![1, 2, 3]);
        assert_eq!(cvl_color_ords(g, &[7, 9, 7, 9]).unwrap(), vec![1, 2, 1, 2]);
    }

    #[test]
    fn rejects_adjacent_equal() {
        let p = Params::desk(64, 2, 16).unwrap();
        assert_eq!(
            cvl_color_ords(p.gamma_size, &[1, 1]),
            Err(CvlError::AdjacentEqual(2))
        );
    }

    #[test]
    fn fuzz_all_properties() {
        let p = Params::desk(1024, 4, 256).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        for trial in 0..10_000 {
            let len = 1 + (trial % 2000);
            let x = random_adjacent_distinct(&mut rng, len, p.gamma_size);
            let c = cvl_color_ords(p.gamma_size, &x).unwrap();
            assert_eq!(c.len(), x.len());
            check_properties(&c);
        }
    }

    #[test]
    fn locality() {
        // Two strings agreeing on positions i-R..i+R get the same color at i.
        let p = Params::desk(1024, 4, 256).unwrap();
        let r = p.locality as usize;
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..300 {
            let len = 2 * r + 1 + rng.gen_range(0..200);
            let x = random_adjacent_distinct(&mut rng, len, p.gamma_size);
            let i = rng.gen_range(r..len - r);
            // Rebuild a second string equal on the window around i.
            let mut y = random_adjacent_distinct(&mut rng, len, p.gamma_size);
            for j in i - r..=i + r {
                y[j] = x[j];
            }
            // Patch up adjacent-equal violations at the window borders.
            if i >= r + 1 && y[i - r - 1] == y[i - r] {
                y[i - r - 1] = y[i - r - 1] ^ 1;
                if i >= r + 2 && y[i - r - 2] == y[i - r - 1] {
                    y[i - r - 2] = (y[i - r - 2] + 2) % p.gamma_size;
                }
            }
            if i + r + 1 < len && y[i + r + 1] == y[i + r] {
                y[i + r + 1] ^= 1;
                if i + r + 2 < len && y[i + r + 2] == y[i + r + 1] {
                    y[i + r + 2] = (y[i + r + 2] + 2) % p.gamma_size;
                }
            }
            let cx = cvl_color_ords(p.gamma_size, &x).unwrap();
            let cy = cvl_color_ords(p.gamma_size, &y).unwrap();
            assert_eq!(cx[i], cy[i], "colors disagree at {i} (len {len})");
        }
    }
}
