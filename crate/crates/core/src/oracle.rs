//! Brute-force reference implementations used by the test suites: exact and
//! banded edit distance, edit-script generators, and a level-by-level replay
//! of the decomposition that exposes every intermediate block.
//!
//! Nothing here is called by the production pipeline; the pipeline is
//! checked against these routines, so they share only the core types and
//! the randomness bundle.

use crate::decomposition;
use crate::hashing::RandomnessBundle;
use crate::params::Params;
use crate::symbol::SymbolString;
use rand::Rng;

/// Exact edit distance by the classic quadratic dynamic program.
/// Guarded to inputs of length at most 10^4.
pub fn edit_distance_dp<T: Eq>(x: &[T], y: &[T]) -> usize {
    assert!(x.len() <= 10_000 && y.len() <= 10_000, "dp oracle size guard");
    let (m, n) = (x.len(), y.len());
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0usize; n + 1];
    for i in 1..=m {
        cur[0] = i;
        for j in 1..=n {
            let sub = prev[j - 1] + usize::from(x[i - 1] != y[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// Exact edit distance when it is at most `cutoff`, `None` otherwise, in
/// O((|x|+|y|) * cutoff) time.
pub fn banded_edit_distance<T: Eq>(x: &[T], y: &[T], cutoff: usize) -> Option<usize> {
    let (m, n) = (x.len(), y.len());
    if m.abs_diff(n) > cutoff {
        return None;
    }
    let w = cutoff;
    let inf = usize::MAX / 2;
    let width = 2 * w + 1;
    // Row i keeps columns i-w ..= i+w, clamped to 0..=n.
    let mut prev = vec![inf; width];
    let mut cur = vec![inf; width];
    for (o, p) in prev.iter_mut().enumerate().take(width) {
        let j = o as isize - w as isize;
        if (0..=n as isize).contains(&j) {
            *p = j as usize;
        }
    }
    for i in 1..=m {
        for v in cur.iter_mut() {
            *v = inf;
        }
        for o in 0..width {
            let j = i as isize + o as isize - w as isize;
            if j < 0 || j > n as isize {
                continue;
            }
            let j = j as usize;
            let mut best = inf;
            if j == 0 {
                best = i;
            } else {
                // prev row holds column range (i-1)-w ..= (i-1)+w.
                let shift = |col: isize, row: usize| -> Option<usize> {
                    let off = col - row as isize + w as isize;
                    if (0..width as isize).contains(&off) {
                        Some(off as usize)
                    } else {
                        None
                    }
                };
                if let Some(po) = shift(j as isize - 1, i - 1) {
                    let sub = prev[po] + usize::from(x[i - 1] != y[j - 1]);
                    best = best.min(sub);
                }
                if let Some(po) = shift(j as isize, i - 1) {
                    best = best.min(prev[po] + 1);
                }
                if o > 0 {
                    best = best.min(cur[o - 1] + 1);
                }
            }
            cur[o] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let off = n as isize - m as isize + w as isize;
    if !(0..width as isize).contains(&off) {
        return None;
    }
    let d = prev[off as usize];
    if d <= cutoff {
        Some(d)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Insert,
    Delete,
    Substitute,
}

/// One applied edit: position is the 0-based index in the string at the time
/// the edit was applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditStep {
    pub pos: usize,
    pub op: EditOp,
    pub symbol: u32,
}

/// Apply `k` random edits to `x`; the result is at edit distance at most `k`
/// from `x` by construction.
pub fn random_edits(x: &[u32], k: usize, sigma: u32, rng: &mut impl Rng) -> (Vec<u32>, Vec<EditStep>) {
    let mut y = x.to_vec();
    let mut script = Vec::with_capacity(k);
    for _ in 0..k {
        let op = match rng.gen_range(0..3) {
            0 if !y.is_empty() => EditOp::Delete,
            1 if !y.is_empty() => EditOp::Substitute,
            _ => EditOp::Insert,
        };
        match op {
            EditOp::Insert => {
                let pos = rng.gen_range(0..=y.len());
                let symbol = rng.gen_range(0..sigma);
                y.insert(pos, symbol);
                script.push(EditStep { pos, op, symbol });
            }
            EditOp::Delete => {
                let pos = rng.gen_range(0..y.len());
                let symbol = y.remove(pos);
                script.push(EditStep { pos, op, symbol });
            }
            EditOp::Substitute => {
                let pos = rng.gen_range(0..y.len());
                let symbol = rng.gen_range(0..sigma);
                y[pos] = symbol;
                script.push(EditStep { pos, op, symbol });
            }
        }
    }
    (y, script)
}

/// Full replay of the decomposition, keeping every intermediate string.
/// Level 0 of `blocks` holds the output of the initial split; level l holds
/// the blocks after l compress+split rounds. `compressed[l]` holds the
/// compression of each level-l block that was still longer than two symbols
/// (`None` for blocks passed through).
#[derive(Debug)]
pub struct DecomposeTrace {
    pub blocks: Vec<Vec<SymbolString>>,
    pub compressed: Vec<Vec<Option<SymbolString>>>,
}

impl DecomposeTrace {
    /// Blocks at the final level, i.e. one entry per output grammar.
    pub fn terminal_blocks(&self) -> &[SymbolString] {
        self.blocks.last().unwrap()
    }
}

/// Replays the pipeline level by level, independently of the recursive
/// driver: at each level every block longer than two symbols is compressed
/// and split, shorter blocks pass through.
pub fn decompose_trace(
    x: &[u32],
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<DecomposeTrace, decomposition::DecomposeError> {
    let mut blocks: Vec<Vec<SymbolString>> = Vec::new();
    let mut compressed: Vec<Vec<Option<SymbolString>>> = Vec::new();
    let x = SymbolString::from_input(x);
    blocks.push(decomposition::split(&x, 0, params, bundle));
    for level in 1..=params.level_count {
        let prev = blocks.last().unwrap();
        if prev.iter().all(|b| b.len() <= 2) {
            break;
        }
        let mut comp_row = Vec::with_capacity(prev.len());
        let mut next_row = Vec::new();
        for b in prev {
            if b.len() <= 2 {
                comp_row.push(None);
                next_row.push(b.clone());
            } else {
                let a = decomposition::compress(b, level as u8, params, bundle)?;
                comp_row.push(Some(a.clone()));
                next_row.extend(decomposition::split(&a, level, params, bundle));
            }
        }
        compressed.push(comp_row);
        blocks.push(next_row);
    }
    Ok(DecomposeTrace { blocks, compressed })
}

/// Direct mismatch scan for equal-length slices.
pub fn mismatch_scan(x: &[u64], y: &[u64]) -> Vec<(usize, u64, u64)> {
    assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y.iter())
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, (a, b))| (i + 1, *a, *b))
        .collect()
}

/// Random input string over the given alphabet.
pub fn random_string(rng: &mut impl Rng, len: usize, sigma: u32) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(0..sigma)).collect()
}

/// Random string with long runs mixed in, to exercise run-length paths.
pub fn run_heavy_string(rng: &mut impl Rng, len: usize, sigma: u32) -> Vec<u32> {
    let mut v = Vec::with_capacity(len);
    while v.len() < len {
        if rng.gen_bool(0.5) {
            let run = rng.gen_range(2..=32.min(len - v.len()).max(2));
            let c = rng.gen_range(0..sigma);
            for _ in 0..run.min(len - v.len()) {
                v.push(c);
            }
        } else {
            v.push(rng.gen_range(0..sigma));
        }
    }
    v
}
