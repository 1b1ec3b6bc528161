//! Incremental decomposition update: append one symbol to a string known
//! only through its trailing grammars and reproduce exactly the grammars a
//! from-scratch decomposition of the extended string would emit.
//!
//! The machinery keeps, per level, a bounded suffix of the intermediate
//! string (`Z_l`, at most ~2T symbols) plus a parallel depth string `F_l`
//! recording at which level each kept symbol starts a block. Appending a
//! symbol partially decompresses the suffixes top-down, splices the new
//! symbol in at level zero, and recompresses bottom-up, reusing the stored
//! compressed symbols for everything outside the affected tail.

use crate::decomposition::{compress_with_grammar, split, AppliedRules, DecomposeError};
use crate::grammar::Grammar;
use crate::hashing::{split_is_zero, RandomnessBundle};
use crate::params::Params;
use crate::symbol::{SymbolId, SymbolString};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UpdateError {
    #[error("no rule for compression symbol {0:?}")]
    MissingRule(SymbolId),
    #[error("conflicting rules for {0:?} across grammars")]
    RuleConflict(SymbolId),
    #[error("prefix of length {0} not reachable by decompression")]
    PrefixUnreachable(u64),
    #[error("appended symbol {0} outside the declared alphabet")]
    SymbolOutOfRange(u32),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
}

/// Union of grammar rules with conflict detection; the overlay accumulates
/// rules introduced by the recompression.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    map: HashMap<SymbolId, (SymbolId, SymbolId)>,
}

impl RuleSet {
    pub fn from_grammars<'a>(
        grammars: impl Iterator<Item = &'a Grammar>,
    ) -> Result<Self, UpdateError> {
        let mut rs = RuleSet::default();
        for g in grammars {
            for (lhs, rhs) in &g.rules {
                rs.insert(*lhs, *rhs)?;
            }
        }
        Ok(rs)
    }

    pub fn insert(&mut self, lhs: SymbolId, rhs: (SymbolId, SymbolId)) -> Result<(), UpdateError> {
        if let Some(prev) = self.map.insert(lhs, rhs) {
            if prev != rhs {
                return Err(UpdateError::RuleConflict(lhs));
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, applied: &AppliedRules) -> Result<(), UpdateError> {
        for (lhs, rhs) in &applied.pairs {
            self.insert(*lhs, *rhs)?;
        }
        Ok(())
    }

    pub fn get(&self, lhs: &SymbolId) -> Option<(SymbolId, SymbolId)> {
        self.map.get(lhs).copied()
    }

    /// Rules reachable from a start string, as a canonical map.
    pub fn reachable_from(
        &self,
        start: &SymbolString,
    ) -> Result<BTreeMap<SymbolId, (SymbolId, SymbolId)>, UpdateError> {
        let mut keep = BTreeMap::new();
        let mut stack: Vec<SymbolId> = start.iter().copied().collect();
        while let Some(s) = stack.pop() {
            let probe = match s {
                SymbolId::Repeat(base, _) => SymbolId::from(base),
                other => other,
            };
            if let SymbolId::Comp(..) = probe {
                if keep.contains_key(&probe) {
                    continue;
                }
                let (a, b) = self.get(&probe).ok_or(UpdateError::MissingRule(probe))?;
                keep.insert(probe, (a, b));
                stack.push(a);
                stack.push(b);
            }
        }
        Ok(keep)
    }
}

/// Expand `c` if it is a level-`level` symbol, truncating repeats to at most
/// `t` copies; other symbols pass through.
pub fn decompress_symbol(
    c: SymbolId,
    rules: &RuleSet,
    level: u32,
    t: u64,
) -> Result<Vec<SymbolId>, UpdateError> {
    debug_assert!(t >= 2);
    if c.level() == level {
        match c {
            SymbolId::Comp(..) => {
                let (a, b) = rules.get(&c).ok_or(UpdateError::MissingRule(c))?;
                Ok(vec![a, b])
            }
            SymbolId::Repeat(base, r) => {
                let n = t.min(r as u64) as usize;
                Ok(vec![SymbolId::from(base); n])
            }
            SymbolId::Input(_) => Ok(vec![c]),
        }
    } else {
        Ok(vec![c])
    }
}

/// Length of the level-`level` expansion of `c`: 2 for a compression symbol
/// of this level, the count for a repeat of this level, 1 otherwise.
pub fn decompress_symbol_length(c: SymbolId, level: u32) -> u64 {
    if c.level() == level {
        match c {
            SymbolId::Comp(..) => 2,
            SymbolId::Repeat(_, r) => r as u64,
            SymbolId::Input(_) => 1,
        }
    } else {
        1
    }
}

/// Expand every level-`level` symbol of `z` one level down.
pub fn decompress_string(
    z: &SymbolString,
    rules: &RuleSet,
    level: u32,
) -> Result<SymbolString, UpdateError> {
    let mut out = SymbolString::new();
    for &c in z.iter() {
        for s in decompress_symbol(c, rules, level, u64::MAX)? {
            out.push(s);
        }
    }
    Ok(out)
}

/// Smallest index j such that the level-`level` decompression of `z[1..=j]`
/// has length at least `p`.
pub fn find_compressed_prefix(z: &SymbolString, p: u64, level: u32) -> Result<usize, UpdateError> {
    let mut q = 0u64;
    let mut j = 0usize;
    while q < p {
        j += 1;
        if j > z.len() {
            return Err(UpdateError::PrefixUnreachable(p));
        }
        q += decompress_symbol_length(z.get(j), level);
    }
    Ok(j)
}

/// The lowest level at which this grammar's block boundary is created: the
/// smallest l with a zero split hash on the first two symbols of the
/// grammar's level-l form, or level_count + 1 when no pair ever fires (in
/// particular for single-symbol evaluations).
pub fn splitting_depth(
    g: &Grammar,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<u32, UpdateError> {
    boundary_depth(g, None, bundle, params)
}

/// [`splitting_depth`] with the following grammar supplied. When the block
/// is a single symbol at the level where its boundary was created, the pair
/// that fired spans into the next block, so the depth is only recoverable
/// with the successor's leading symbol in hand.
pub fn boundary_depth(
    g: &Grammar,
    next: Option<&Grammar>,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<u32, UpdateError> {
    let rules = RuleSet::from_grammars(std::iter::once(g).chain(next))?;
    let mut v: Vec<SymbolId> = g.start.iter().take(2).copied().collect();
    let mut w: Option<SymbolId> = next.map(|n| n.start.get(1));
    let mut d = params.level_count + 1;
    for level in (0..=params.level_count).rev() {
        let second = if v.len() >= 2 { Some(v[1]) } else { w };
        if let Some(s2) = second {
            if split_is_zero(params, bundle.split_hash(level), v[0], s2) {
                d = level;
            }
        }
        let mut u = decompress_symbol(v[0], &rules, level, 2)?;
        if v.len() >= 2 {
            u.extend(decompress_symbol(v[1], &rules, level, 2)?);
        }
        u.truncate(2);
        v = u;
        if let Some(ws) = w {
            w = Some(decompress_symbol(ws, &rules, level, 2)?[0]);
        }
    }
    Ok(d)
}

/// Filler depth marking "no block starts here".
fn no_boundary(params: &Params) -> u32 {
    params.level_count + 1
}

/// Expand a suffix of `z` one level down until at least `suffix_locality`
/// symbols are uncovered (or `z` is exhausted). Returns the expansion, its
/// depth string, the count `u` of unexpanded symbols, and the truncation
/// count `r` when the expansion stopped inside a repeat (then `z[u]` is that
/// repeat symbol and the expansion starts with `r` copies of its base).
pub fn partially_decompress(
    z: &SymbolString,
    f: &[u32],
    level: u32,
    rules: &RuleSet,
    params: &Params,
) -> Result<(SymbolString, Vec<u32>, usize, u32), UpdateError> {
    debug_assert_eq!(z.len(), f.len());
    let t = params.suffix_locality;
    let filler = no_boundary(params);
    let mut zp: Vec<SymbolId> = Vec::new();
    let mut fp: Vec<u32> = Vec::new();
    for u in (1..=z.len()).rev() {
        let sym = z.get(u);
        match sym {
            SymbolId::Repeat(base, r) if sym.level() == level => {
                let base_sym = SymbolId::from(base);
                if zp.len() as u64 + r as u64 <= t + 3 {
                    for _ in 0..r {
                        zp.push(base_sym);
                    }
                    for _ in 0..r - 1 {
                        fp.push(filler);
                    }
                    fp.push(f[u - 1]);
                } else {
                    let rp = (t - zp.len() as u64 + 1) as u32;
                    debug_assert!(rp >= 2 && rp < r);
                    for _ in 0..rp {
                        zp.push(base_sym);
                        fp.push(filler);
                    }
                    zp.reverse();
                    fp.reverse();
                    return Ok((SymbolString::from_vec(zp), fp, u, rp));
                }
            }
            SymbolId::Comp(..) if sym.level() == level => {
                let (a, b) = rules.get(&sym).ok_or(UpdateError::MissingRule(sym))?;
                zp.push(b);
                zp.push(a);
                fp.push(filler);
                fp.push(f[u - 1]);
            }
            _ => {
                zp.push(sym);
                fp.push(f[u - 1]);
            }
        }
        if zp.len() as u64 >= t {
            zp.reverse();
            fp.reverse();
            return Ok((SymbolString::from_vec(zp), fp, u - 1, 0));
        }
    }
    zp.reverse();
    fp.reverse();
    Ok((SymbolString::from_vec(zp), fp, 0, 0))
}

/// Recombine the first updated block with its unexpanded remainder in `z`
/// and split it at this level. Returns the resulting blocks, new rules, and
/// the count of `z`-symbols left for the caller to separate.
#[allow(clippy::too_many_arguments)]
fn recompress_first_block(
    b0: &SymbolString,
    z: &SymbolString,
    f: &[u32],
    u: usize,
    r: u32,
    level: u32,
    params: &Params,
    bundle: &RandomnessBundle,
) -> Result<(Vec<SymbolString>, AppliedRules, usize), UpdateError> {
    let mut u = u;
    if r != 0 {
        u -= 1;
    }
    let mut up = u + 1;
    while up > 1 && f[up - 1] >= level {
        up -= 1;
    }
    let (glued, rules) = if r != 0 {
        // The block begins with the truncated expansion of the repeat at
        // z[u+1]; merge the surviving copies back into one repeat symbol.
        let rep = z.get(u + 1);
        let (base, orig_count) = match rep {
            SymbolId::Repeat(base, c) => (SymbolId::from(base), c),
            other => panic!("truncation must point at a repeat, got {other:?}"),
        };
        let mut lead = 0usize;
        while lead < b0.len() && b0.get(lead + 1) == base {
            lead += 1;
        }
        let (tail, mut rules) = if lead == b0.len() {
            (SymbolString::new(), AppliedRules::default())
        } else {
            compress_with_grammar(&b0.slice(lead + 1, b0.len()), level as u8, params, bundle)?
        };
        let merged_count = orig_count - r + lead as u32;
        debug_assert!(merged_count >= 2);
        let merged = SymbolId::repeat_of(base, merged_count);
        rules.repeats.insert(merged);
        let mut glued = z.slice(up, u);
        glued.push(merged);
        glued.extend(&tail);
        (glued, rules)
    } else {
        let zsub = z.slice(up, z.len());
        cross_over_block(b0, &zsub, u + 1 - up, level, params, bundle)?
    };
    Ok((split(&glued, level, params, bundle), rules, up - 1))
}

/// Combine a block compressed up to level-1 with its remainder `z[1..=u]`
/// that is already compressed at this level. The first min(3(R+1), |b|)
/// symbols of `b` are guaranteed unmodified, which makes one of three
/// recombination strategies applicable.
fn cross_over_block(
    b: &SymbolString,
    z: &SymbolString,
    u: usize,
    level: u32,
    params: &Params,
    bundle: &RandomnessBundle,
) -> Result<(SymbolString, AppliedRules), UpdateError> {
    let r_loc = params.locality as usize;
    let mut i = 1usize;
    while i < b.len() && i < 3 * (r_loc + 1) && b.get(i) != b.get(i + 1) {
        i += 1;
    }
    if i < b.len() && b.get(i) == b.get(i + 1) {
        // A repeated symbol in the unmodified prefix: runs decouple the
        // compression, so everything before it reuses the stored symbols.
        let (comp, rules) =
            compress_with_grammar(&b.slice(i, b.len()), level as u8, params, bundle)?;
        let j = find_compressed_prefix(&z.slice(u + 1, z.len()), i as u64 - 1, level)?;
        debug_assert_eq!(
            (0..j)
                .map(|o| decompress_symbol_length(z.get(u + 1 + o), level))
                .sum::<u64>(),
            i as u64 - 1,
            "reused prefix must end on a symbol boundary"
        );
        let glued = z.slice(1, u + j).concat(&comp);
        Ok((glued, rules))
    } else if b.len() <= 2 * r_loc + 20 {
        // Short block entirely inside the unmodified zone: reuse verbatim.
        let j = find_compressed_prefix(&z.slice(u + 1, z.len()), b.len() as u64, level)?;
        debug_assert_eq!(
            (0..j)
                .map(|o| decompress_symbol_length(z.get(u + 1 + o), level))
                .sum::<u64>(),
            b.len() as u64
        );
        Ok((z.slice(1, u + j), AppliedRules::default()))
    } else {
        // No repeat nearby: recompress the block and splice at a pairing
        // boundary deep enough that both sides agree.
        let (comp, rules) = compress_with_grammar(b, level as u8, params, bundle)?;
        let cut = r_loc as u64 + 10;
        let p = find_compressed_prefix(&comp, cut, level)?;
        let j = find_compressed_prefix(&z.slice(u + 1, z.len()), cut, level)?;
        debug_assert_eq!(
            (0..j - 1)
                .map(|o| decompress_symbol_length(z.get(u + 1 + o), level))
                .sum::<u64>(),
            (1..p)
                .map(|o| decompress_symbol_length(comp.get(o), level))
                .sum::<u64>(),
            "splice points must cover the same expansion length"
        );
        let glued = z.slice(1, u + j - 1).concat(&comp.slice(p, comp.len()));
        Ok((glued, rules))
    }
}

/// One level of recompression: blocks after the first are compressed and
/// split independently; the first block is recombined with its remainder in
/// `z`; the untouched head of `z` is separated along recorded boundaries.
#[allow(clippy::too_many_arguments)]
fn recompress(
    blocks: &[SymbolString],
    z: &SymbolString,
    f: &[u32],
    u: usize,
    r: u32,
    z_prev_len: usize,
    level: u32,
    params: &Params,
    bundle: &RandomnessBundle,
) -> Result<(Vec<SymbolString>, AppliedRules), UpdateError> {
    let mut rules = AppliedRules::default();
    let mut out: Vec<SymbolString> = Vec::new();
    // The first block is a fragment needing recombination only when the view
    // edge falls inside a stored block; when a recorded boundary sits exactly
    // at the seam, the first block is complete and follows the normal rules.
    let u_eff = if r != 0 { u - 1 } else { u };
    let seam_is_boundary = r == 0 && f.get(u_eff).is_some_and(|&d| d < level);
    let (u_prime, start_i) = if (z_prev_len as u64) < params.suffix_locality {
        // The whole level is in view; nothing precedes the first block.
        debug_assert_eq!(u, 0);
        (0usize, 0usize)
    } else if seam_is_boundary {
        (u_eff, 0usize)
    } else {
        let (first, first_rules, up) =
            recompress_first_block(&blocks[0], z, f, u, r, level, params, bundle)?;
        out.extend(first);
        rules.merge(first_rules);
        (up, 1usize)
    };
    for b in &blocks[start_i..] {
        if b.len() <= 2 {
            out.push(b.clone());
        } else {
            let (c, applied) = compress_with_grammar(b, level as u8, params, bundle)?;
            rules.merge(applied);
            out.extend(split(&c, level, params, bundle));
        }
    }
    // Separate the remaining stored symbols along block boundaries created
    // at or below this level.
    let mut head: Vec<SymbolString> = Vec::new();
    let mut hi = u_prime;
    while hi > 0 {
        let mut lo = hi;
        while lo > 1 && f[lo - 1] > level {
            lo -= 1;
        }
        head.push(z.slice(lo, hi));
        hi = lo - 1;
    }
    head.reverse();
    head.extend(out);
    Ok((head, rules))
}

/// Update the trailing grammars of a decomposition for one appended symbol.
///
/// `ag` must be the last min(s, T+1) grammars of the decomposition of some
/// string x under the same bundle; the returned sequence replaces them in
/// the decomposition of x·a, leaving all earlier grammars untouched.
pub fn update_active_grammars(
    ag: &[Grammar],
    a: u32,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<Vec<Grammar>, UpdateError> {
    update_active_grammars_inner(ag, a, bundle, params, None)
}

/// Like [`update_active_grammars`], also reporting the per-level block lists
/// for diagnostics.
#[doc(hidden)]
pub fn update_active_grammars_traced(
    ag: &[Grammar],
    a: u32,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<(Vec<Grammar>, Vec<Vec<SymbolString>>), UpdateError> {
    let mut levels = Vec::new();
    let out = update_active_grammars_inner(ag, a, bundle, params, Some(&mut levels))?;
    Ok((out, levels))
}

fn update_active_grammars_inner(
    ag: &[Grammar],
    a: u32,
    bundle: &RandomnessBundle,
    params: &Params,
    mut trace_sink: Option<&mut Vec<Vec<SymbolString>>>,
) -> Result<Vec<Grammar>, UpdateError> {
    if a as u64 >= params.sigma_size {
        return Err(UpdateError::SymbolOutOfRange(a));
    }
    let levels = params.level_count as usize;
    let filler = no_boundary(params);
    let mut rules = RuleSet::from_grammars(ag.iter())?;

    // Level-L suffix string and its depth string.
    let mut z_l = SymbolString::new();
    let mut f_l: Vec<u32> = Vec::new();
    for (i, g) in ag.iter().enumerate() {
        debug_assert!(!g.start.is_empty());
        let depth = if i == 0 {
            0
        } else {
            boundary_depth(g, ag.get(i + 1), bundle, params)?
        };
        f_l.push(depth);
        for _ in 1..g.start.len() {
            f_l.push(filler);
        }
        z_l.extend(&g.start);
    }

    // Top-down partial decompression.
    let mut zs: Vec<SymbolString> = vec![SymbolString::new(); levels + 1];
    let mut fs: Vec<Vec<u32>> = vec![Vec::new(); levels + 1];
    let mut us: Vec<usize> = vec![0; levels + 1];
    let mut rs: Vec<u32> = vec![0; levels + 1];
    zs[levels] = z_l;
    fs[levels] = f_l;
    for level in (1..=levels).rev() {
        let (z, f, u, r) =
            partially_decompress(&zs[level], &fs[level], level as u32, &rules, params)?;
        zs[level - 1] = z;
        fs[level - 1] = f;
        us[level] = u;
        rs[level] = r;
    }

    // Splice in the new symbol and recompress bottom-up.
    let mut z0 = zs[0].clone();
    z0.push(SymbolId::Input(a));
    let mut blocks = split(&z0, 0, params, bundle);
    if let Some(sink) = trace_sink.as_deref_mut() {
        sink.push(blocks.clone());
    }
    for level in 1..=levels {
        let z_prev_len = if level == 1 {
            z0.len()
        } else {
            zs[level - 1].len()
        };
        let (next, applied) = recompress(
            &blocks,
            &zs[level],
            &fs[level],
            us[level],
            rs[level],
            z_prev_len,
            level as u32,
            params,
            bundle,
        )?;
        rules.merge(&applied)?;
        blocks = next;
        if let Some(sink) = trace_sink.as_deref_mut() {
            sink.push(blocks.clone());
        }
    }

    let mut out = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let g_rules = rules.reachable_from(b)?;
        out.push(Grammar::new(b.clone(), g_rules));
    }
    debug_assert!(
        out.len() as u64 <= 4 * params.suffix_locality * params.level_count as u64,
        "output grammar count exceeds the 4TL bound"
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::decompose;
    use crate::hashing::bundle_generate;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Desk parameters as derived: the suffix window exceeds any test
    /// string, so whole-view paths dominate.
    fn desk_setup(seed: u64) -> (Params, RandomnessBundle) {
        let p = Params::desk(1024, 2, 8).unwrap();
        let b = bundle_generate(&p, seed);
        (p, b)
    }

    /// Same derivation but with the suffix window forced small, so the
    /// partial-view machinery (truncation, crossover, first-block merge)
    /// actually runs on bench-sized strings. The window must stay above the
    /// real per-level churn, which empirically sits far below this value.
    fn tight_setup(seed: u64) -> (Params, RandomnessBundle) {
        let mut p = Params::desk(1024, 2, 8).unwrap();
        p.suffix_locality = 160;
        // More frequent splits so multiple grammars exist at these lengths.
        p.split_inverse = 60;
        let b = bundle_generate(&p, seed);
        (p, b)
    }

    fn check_tail_replacement(
        x: &[u32],
        a: u32,
        p: &Params,
        b: &RandomnessBundle,
    ) -> Result<(), String> {
        let before = decompose(x, b, p).map_err(|e| e.to_string())?;
        let mut xa = x.to_vec();
        xa.push(a);
        let expected = decompose(&xa, b, p).map_err(|e| e.to_string())?;
        let window = (p.suffix_locality + 1) as usize;
        let keep = before.len().saturating_sub(window);
        let ag = &before[keep..];
        let updated = update_active_grammars(ag, a, b, p).map_err(|e| e.to_string())?;
        let mut rebuilt: Vec<Grammar> = before[..keep].to_vec();
        rebuilt.extend(updated);
        if rebuilt != expected {
            return Err(format!(
                "tail replacement mismatch: |x|={} rebuilt {} grammars vs expected {}",
                x.len(),
                rebuilt.len(),
                expected.len()
            ));
        }
        Ok(())
    }

    #[test]
    fn empty_base_case() {
        let (p, b) = desk_setup(1);
        let out = update_active_grammars(&[], 3, &b, &p).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].eval().unwrap(), vec![3]);
    }

    #[test]
    fn exhaustive_small_strings() {
        // Every string over a two-letter alphabet up to length 9, extended
        // by each letter: byte-for-byte equality with the from-scratch run.
        let (p, b) = desk_setup(2);
        for len in 0..=9usize {
            for mask in 0..(1u32 << len) {
                let x: Vec<u32> = (0..len).map(|i| (mask >> i) & 1).collect();
                for a in 0..2u32 {
                    check_tail_replacement(&x, a, &p, &b).unwrap();
                }
            }
        }
    }

    #[test]
    fn random_strings_whole_view() {
        let (p, b) = desk_setup(3);
        let mut rng = ChaCha20Rng::seed_from_u64(40);
        for trial in 0..150 {
            let len = rng.gen_range(0..=512);
            let x = if trial % 3 == 0 {
                oracle::run_heavy_string(&mut rng, len, 8)
            } else {
                oracle::random_string(&mut rng, len, 8)
            };
            let a = rng.gen_range(0..8);
            check_tail_replacement(&x, a, &p, &b).unwrap();
        }
    }

    #[test]
    fn long_runs_whole_view() {
        let (p, b) = desk_setup(4);
        let x = vec![5u32; 100];
        check_tail_replacement(&x, 5, &p, &b).unwrap();
        check_tail_replacement(&x, 2, &p, &b).unwrap();
    }

    #[test]
    fn random_strings_partial_view() {
        // Strings much longer than the forced window: the crossover and
        // trailing-separation paths are exercised on nearly every append.
        for seed in 0..6 {
            let (p, b) = tight_setup(100 + seed);
            let mut rng = ChaCha20Rng::seed_from_u64(50 + seed);
            for _ in 0..25 {
                let len = rng.gen_range(300..=900);
                let x = if rng.gen_bool(0.4) {
                    oracle::run_heavy_string(&mut rng, len, 8)
                } else {
                    oracle::random_string(&mut rng, len, 8)
                };
                let a = rng.gen_range(0..8);
                check_tail_replacement(&x, a, &p, &b).unwrap();
            }
        }
    }

    #[test]
    fn long_runs_partial_view() {
        // Runs longer than the window force repeat truncation and the
        // first-block merge branch.
        for seed in 0..4 {
            let (p, b) = tight_setup(200 + seed);
            let mut rng = ChaCha20Rng::seed_from_u64(60 + seed);
            for _ in 0..10 {
                let mut x = oracle::random_string(&mut rng, 200, 8);
                let c = rng.gen_range(0..8);
                x.extend(std::iter::repeat(c).take(rng.gen_range(300..500)));
                if rng.gen_bool(0.5) {
                    let tail_len = rng.gen_range(0..50);
                    x.extend(oracle::random_string(&mut rng, tail_len, 8));
                }
                let a = if rng.gen_bool(0.5) { c } else { rng.gen_range(0..8) };
                check_tail_replacement(&x, a, &p, &b).unwrap();
            }
        }
    }

    #[test]
    fn suffix_stability_under_appends() {
        // Appending more symbols never changes grammars before the last
        // window of the current list.
        let (p, b) = tight_setup(300);
        let mut rng = ChaCha20Rng::seed_from_u64(70);
        for _ in 0..10 {
            let len = rng.gen_range(400..800);
            let x = oracle::random_string(&mut rng, len, 8);
            let zlen = rng.gen_range(1..200);
            let z = oracle::random_string(&mut rng, zlen, 8);
            let gx = decompose(&x, &b, &p).unwrap();
            let mut xz = x.clone();
            xz.extend(&z);
            let gxz = decompose(&xz, &b, &p).unwrap();
            let t = p.suffix_locality as usize;
            let stable = gx.len().saturating_sub(t);
            for i in 0..stable {
                assert_eq!(gx[i], gxz[i], "grammar {i} changed under extension");
            }
        }
    }

    #[test]
    fn output_bound_holds() {
        let (p, b) = tight_setup(400);
        let mut rng = ChaCha20Rng::seed_from_u64(80);
        let x = oracle::random_string(&mut rng, 700, 8);
        let gs = decompose(&x, &b, &p).unwrap();
        let window = (p.suffix_locality + 1) as usize;
        let keep = gs.len().saturating_sub(window);
        let out = update_active_grammars(&gs[keep..], 3, &b, &p).unwrap();
        assert!(out.len() as u64 <= 4 * p.suffix_locality * p.level_count as u64);
    }

    #[test]
    fn helper_functions() {
        let rules = RuleSet::default();
        // Pass-through for symbols of other levels.
        let s = SymbolId::Input(3);
        assert_eq!(decompress_symbol(s, &rules, 2, 5).unwrap(), vec![s]);
        // Repeat truncation.
        let rep = SymbolId::repeat_of(SymbolId::Input(1), 7);
        assert_eq!(
            decompress_symbol(rep, &rules, 1, 3).unwrap(),
            vec![SymbolId::Input(1); 3]
        );
        assert_eq!(decompress_symbol_length(rep, 1), 7);
        assert_eq!(decompress_symbol_length(rep, 2), 1);

        let z = SymbolString::from_input(&[1, 2, 3]);
        assert_eq!(find_compressed_prefix(&z, 0, 1).unwrap(), 0);
        assert_eq!(find_compressed_prefix(&z, 3, 1).unwrap(), 3);
        assert!(find_compressed_prefix(&z, 4, 1).is_err());
    }

    #[test]
    fn decompress_string_inverts_compression() {
        let (p, b) = desk_setup(6);
        let mut rng = ChaCha20Rng::seed_from_u64(90);
        for _ in 0..200 {
            let len = rng.gen_range(2..=80);
            let codes = oracle::run_heavy_string(&mut rng, len, 8);
            let s = SymbolString::from_input(&codes);
            let (c, applied) = compress_with_grammar(&s, 1, &p, &b).unwrap();
            let mut rules = RuleSet::default();
            rules.merge(&applied).unwrap();
            assert_eq!(decompress_string(&c, &rules, 1).unwrap(), s);
        }
    }

    #[test]
    fn splitting_depth_agrees_with_split_hashes() {
        let (p, b) = tight_setup(500);
        let mut rng = ChaCha20Rng::seed_from_u64(95);
        for _ in 0..10 {
            let len = rng.gen_range(300..700);
            let x = oracle::random_string(&mut rng, len, 8);
            let gs = decompose(&x, &b, &p).unwrap();
            for (i, g) in gs.iter().enumerate().skip(1) {
                let d = splitting_depth(g, &b, &p).unwrap();
                assert!(d <= p.level_count + 1, "grammar {i} depth {d}");
                if g.eval_size().unwrap() == 1 {
                    // No pair exists at any level of a single-symbol block.
                    assert_eq!(d, p.level_count + 1);
                }
            }
        }
    }

    #[test]
    fn partial_decompress_branches() {
        let (mut p, _) = desk_setup(7);
        p.suffix_locality = 8;
        let rules = RuleSet::default();
        // All inputs, shorter than the window: nothing to expand.
        let z = SymbolString::from_input(&[1, 2, 3]);
        let f = vec![0, 9, 9];
        let (zp, fp, u, r) = partially_decompress(&z, &f, 1, &rules, &p).unwrap();
        assert_eq!(zp, z);
        assert_eq!(fp, f);
        assert_eq!((u, r), (0, 0));

        // A repeat long past the window is truncated.
        let rep = SymbolId::repeat_of(SymbolId::Input(4), 40);
        let z = SymbolString::from_vec(vec![rep]);
        let f = vec![0];
        let (zp, fp, u, r) = partially_decompress(&z, &f, 1, &rules, &p).unwrap();
        assert_eq!(u, 1);
        assert_eq!(r as u64, p.suffix_locality + 1);
        assert_eq!(zp.len() as u64, p.suffix_locality + 1);
        assert!(zp.iter().all(|&s| s == SymbolId::Input(4)));
        assert!(fp.iter().all(|&d| d == p.level_count + 1));
    }
}
