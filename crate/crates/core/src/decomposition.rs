//! The block decomposition: each round collapses maximal runs, compresses
//! pairs selected by the locally consistent coloring, and splits the result
//! at hash-selected boundaries. Blocks that shrink to at most two symbols are
//! emitted as grammars assembled from the per-level rule dictionaries.

use crate::cvl::{self, CvlError};
use crate::grammar::Grammar;
use crate::hashing::{compress_pair, split_is_zero, RandomnessBundle};
use crate::params::Params;
use crate::symbol::{SymbolId, SymbolString};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("input longer than the parameter bound n")]
    InputTooLong,
    #[error("input symbol {0} outside the declared alphabet")]
    InputSymbolOutOfRange(u32),
    #[error("block of length {0} too short to compress")]
    BlockTooShort(usize),
    #[error("coloring failed: {0}")]
    Coloring(#[from] CvlError),
    #[error("compression hash collision at level {level}: two pairs map to {value}")]
    HashCollision { level: u8, value: u64 },
    #[error("dictionary of a split block exceeded the bound {bound}")]
    SizeOverflow { bound: u64 },
    #[error("recursion passed the level bound with an uncompressed block")]
    DepthExceeded,
}

/// Per-level rule dictionary `{ C_l(ab) -> ab }`, with collision detection:
/// the hash must be one-to-one on the pairs inserted at this level.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialGrammar {
    rules: BTreeMap<SymbolId, (SymbolId, SymbolId)>,
}

impl PartialGrammar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        lhs: SymbolId,
        rhs: (SymbolId, SymbolId),
    ) -> Result<(), DecomposeError> {
        if let Some(prev) = self.rules.get(&lhs) {
            if *prev != rhs {
                let value = match lhs {
                    SymbolId::Comp(_, v) => v,
                    _ => 0,
                };
                let level = match lhs {
                    SymbolId::Comp(l, _) => l,
                    _ => 0,
                };
                return Err(DecomposeError::HashCollision { level, value });
            }
            return Ok(());
        }
        self.rules.insert(lhs, rhs);
        Ok(())
    }

    pub fn get(&self, lhs: &SymbolId) -> Option<&(SymbolId, SymbolId)> {
        self.rules.get(lhs)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SymbolId, &(SymbolId, SymbolId))> {
        self.rules.iter()
    }
}

/// Pair and repeat rules actually applied by one compression call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppliedRules {
    pub pairs: BTreeMap<SymbolId, (SymbolId, SymbolId)>,
    pub repeats: BTreeSet<SymbolId>,
}

impl AppliedRules {
    pub fn merge(&mut self, other: AppliedRules) {
        self.pairs.extend(other.pairs);
        self.repeats.extend(other.repeats);
    }
}

enum Segment {
    /// Maximal run of `count >= 2` equal symbols.
    Run { sym: SymbolId, count: u32 },
    /// Adjacent-distinct stretch (1-based positions into the source block).
    Stretch { from: usize, to: usize },
}

fn segments(b: &SymbolString) -> Vec<Segment> {
    let mut out = Vec::new();
    let n = b.len();
    let mut i = 1;
    while i <= n {
        let mut j = i;
        while j < n && b.get(j + 1) == b.get(i) {
            j += 1;
        }
        if j > i {
            out.push(Segment::Run {
                sym: b.get(i),
                count: (j - i + 1) as u32,
            });
            i = j + 1;
        } else {
            // Extend the stretch until the next run begins.
            let start = i;
            let mut end = i;
            while end < n && b.get(end + 1) != b.get(end) {
                // Stop before a run: position end+1 starts a run if it equals
                // position end+2.
                if end + 2 <= n && b.get(end + 1) == b.get(end + 2) {
                    break;
                }
                end += 1;
            }
            out.push(Segment::Stretch { from: start, to: end });
            i = end + 1;
        }
    }
    out
}

/// One compression round: maximal runs collapse to repeat symbols, and within
/// each remaining stretch the coloring pairs up neighbors, mapping pairs
/// through the level hash. Shrinks every block of length >= 2 to at most
/// floor(2|B|/3) + 1 symbols, and always strictly.
pub fn compress(
    b: &SymbolString,
    level: u8,
    params: &Params,
    bundle: &RandomnessBundle,
) -> Result<SymbolString, DecomposeError> {
    if b.len() < 2 {
        return Err(DecomposeError::BlockTooShort(b.len()));
    }
    compress_inner(b, level, params, bundle, None)
}

/// Compression that also reports the rules it applied. Blocks of length at
/// most one pass through unchanged with no rules.
pub fn compress_with_grammar(
    b: &SymbolString,
    level: u8,
    params: &Params,
    bundle: &RandomnessBundle,
) -> Result<(SymbolString, AppliedRules), DecomposeError> {
    if b.len() <= 1 {
        return Ok((b.clone(), AppliedRules::default()));
    }
    let mut applied = AppliedRules::default();
    let out = compress_inner(b, level, params, bundle, Some(&mut applied))?;
    Ok((out, applied))
}

fn compress_inner(
    b: &SymbolString,
    level: u8,
    params: &Params,
    bundle: &RandomnessBundle,
    mut applied: Option<&mut AppliedRules>,
) -> Result<SymbolString, DecomposeError> {
    let chash = bundle.compression_hash(level);
    let mut out = SymbolString::new();
    for seg in segments(b) {
        match seg {
            Segment::Run { sym, count } => {
                let rep = SymbolId::repeat_of(sym, count);
                if let Some(a) = applied.as_deref_mut() {
                    a.repeats.insert(rep);
                }
                out.push(rep);
            }
            Segment::Stretch { from, to } => {
                let len = to - from + 1;
                if len == 1 {
                    out.push(b.get(from));
                    continue;
                }
                let stretch: Vec<SymbolId> = (from..=to).map(|i| b.get(i)).collect();
                let colors = cvl::cvl_color(params, &stretch)?;
                let mut i = 0usize;
                while i < len {
                    debug_assert_eq!(colors[i], 1, "pairing must start on color 1");
                    if i + 1 < len {
                        let (x, y) = (stretch[i], stretch[i + 1]);
                        let c = compress_pair(params, chash, x, y);
                        if let Some(a) = applied.as_deref_mut() {
                            a.pairs.insert(c, (x, y));
                        }
                        out.push(c);
                        i += 2;
                        if i < len && colors[i] != 1 {
                            out.push(stretch[i]);
                            i += 1;
                        }
                    } else {
                        // A stretch never ends on color 1.
                        out.push(stretch[i]);
                        i += 1;
                    }
                }
            }
        }
    }
    debug_assert!(out.len() <= 2 * b.len() / 3 + 1);
    debug_assert!(out.len() < b.len());
    Ok(out)
}

/// Split a block at every interior position whose pair hashes to zero. The
/// concatenation of the output equals the input; no split occurs at the
/// first or last position.
pub fn split(
    b: &SymbolString,
    level: u32,
    params: &Params,
    bundle: &RandomnessBundle,
) -> Vec<SymbolString> {
    if b.len() < 2 {
        return vec![b.clone()];
    }
    let h = bundle.split_hash(level);
    let mut cuts = vec![1usize];
    for i in 2..b.len() {
        if split_is_zero(params, h, b.get(i), b.get(i + 1)) {
            cuts.push(i);
        }
    }
    cuts.push(b.len() + 1);
    cuts.windows(2).map(|w| b.slice(w[0], w[1] - 1)).collect()
}

/// Adjacent-pair dictionary of a block.
pub fn dict(b: &SymbolString) -> BTreeSet<(SymbolId, SymbolId)> {
    let mut d = BTreeSet::new();
    for i in 1..b.len() {
        d.insert((b.get(i), b.get(i + 1)));
    }
    d
}

/// Recursive driver: compress and split until blocks have at most two
/// symbols, then assemble one grammar per terminal block, in left-to-right
/// order.
pub fn process(
    b: &SymbolString,
    partials: &mut Vec<PartialGrammar>,
    level: u32,
    params: &Params,
    bundle: &RandomnessBundle,
    sink: &mut impl FnMut(Grammar),
) -> Result<(), DecomposeError> {
    debug_assert_eq!(partials.len() as u32, level - 1);
    if b.len() <= 2 {
        sink(assemble_grammar(b, partials));
        return Ok(());
    }
    if level > params.level_count {
        return Err(DecomposeError::DepthExceeded);
    }
    let a = compress(b, level as u8, params, bundle)?;
    let blocks = split(&a, level, params, bundle);
    let bound = params.dict_bound();
    for blk in &blocks {
        if dict(blk).len() as u64 > bound {
            return Err(DecomposeError::SizeOverflow { bound });
        }
    }
    let mut d = PartialGrammar::new();
    let chash = bundle.compression_hash(level as u8);
    for (x, y) in dict(b) {
        d.insert(compress_pair(params, chash, x, y), (x, y))?;
    }
    partials.push(d);
    for blk in &blocks {
        process(blk, partials, level + 1, params, bundle, sink)?;
    }
    partials.pop();
    Ok(())
}

/// Assemble the grammar for a terminal block: the start rule plus every rule
/// reachable from the block's symbols, scanning dictionaries from the
/// deepest level down.
pub fn assemble_grammar(b: &SymbolString, partials: &[PartialGrammar]) -> Grammar {
    let mut needed: BTreeSet<SymbolId> = BTreeSet::new();
    let note = |s: SymbolId, set: &mut BTreeSet<SymbolId>| {
        let probe = match s {
            SymbolId::Repeat(base, _) => SymbolId::from(base),
            other => other,
        };
        if matches!(probe, SymbolId::Comp(..)) {
            set.insert(probe);
        }
    };
    for s in b.iter() {
        note(*s, &mut needed);
    }
    let mut rules = BTreeMap::new();
    for j in (1..=partials.len()).rev() {
        let d = &partials[j - 1];
        for c in needed.clone() {
            if let Some(&(x, y)) = d.get(&c) {
                if rules.insert(c, (x, y)).is_none() {
                    note(x, &mut needed);
                    note(y, &mut needed);
                }
            }
        }
    }
    Grammar::new(b.clone(), rules)
}

/// Decompose an input string into grammars whose evaluations concatenate
/// back to it. Fails loudly on dictionary-size breaches and detected
/// compression-hash collisions.
pub fn decompose(
    x: &[u32],
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<Vec<Grammar>, DecomposeError> {
    if x.len() as u64 > params.n {
        return Err(DecomposeError::InputTooLong);
    }
    if let Some(&c) = x.iter().find(|&&c| c as u64 >= params.sigma_size) {
        return Err(DecomposeError::InputSymbolOutOfRange(c));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let s = SymbolString::from_input(x);
    let mut out = Vec::new();
    let mut partials = Vec::new();
    for b in split(&s, 0, params, bundle) {
        process(&b, &mut partials, 1, params, bundle, &mut |g| out.push(g))?;
        debug_assert!(partials.is_empty());
    }
    for g in &out {
        if g.size() > params.max_grammar_size {
            return Err(DecomposeError::SizeOverflow {
                bound: params.max_grammar_size,
            });
        }
    }
    Ok(out)
}
