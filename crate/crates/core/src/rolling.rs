//! Rolling edit-distance sketch: append symbols on the right, remove them on
//! the left, compare two sketches built from the same randomness.
//!
//! Each side (insertions, deletions) keeps the trailing grammars of its
//! decomposition: a ring of the last 4T committed grammars plus at most T
//! active grammars still subject to change. Once a grammar is 2T commits
//! deep it is encoded (fingerprinted together with its 4T+1 neighbors) and
//! folded into a k-mismatch Hamming sketch; deletions fold matching windows
//! out from the front. A comparison reconstructs both live strings from the
//! buffers plus the Hamming mismatch information and runs a cutoff edit
//! distance.

use crate::active_update::{update_active_grammars, UpdateError};
use crate::encoding::{decode_bits_only, enc_with_context};
use crate::grammar::{combine, grammar_pair_ed, Grammar};
use crate::hamming::{HamCompare, HamError, HamSketch};
use crate::hashing::RandomnessBundle;
use crate::params::Params;
use crate::symbol::{SymbolId, SymbolString};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

pub use crate::ed_sketch::EdOutcome;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RollingError {
    #[error("appended symbol {0} outside the declared alphabet")]
    SymbolOutOfRange(u32),
    #[error("remove without a matching earlier append")]
    RemoveBeyondHistory,
    #[error("sketches were built with different randomness bundles")]
    BundleMismatch,
    #[error("sketch copy counts differ")]
    CopyCountMismatch,
    #[error(transparent)]
    Ham(#[from] HamError),
}

/// One side of the sketch: the trailing grammars of a growing decomposition.
#[derive(Debug, Clone, PartialEq, Eq)]
struct SideState {
    committed: VecDeque<Grammar>,
    committed_count: u64,
    committed_eval_total: u64,
    active: Vec<Grammar>,
}

impl SideState {
    fn new() -> Self {
        SideState {
            committed: VecDeque::new(),
            committed_count: 0,
            committed_eval_total: 0,
            active: Vec::new(),
        }
    }

    fn ring_first_index(&self) -> u64 {
        self.committed_count - self.committed.len() as u64 + 1
    }

    fn committed_by_index(&self, idx: u64) -> Option<&Grammar> {
        if idx == 0 || idx > self.committed_count {
            return None;
        }
        let first = self.ring_first_index();
        if idx < first {
            return None;
        }
        self.committed.get((idx - first) as usize)
    }

}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RollingSketch {
    bundle_digest: u64,
    ins: SideState,
    del: SideState,
    ham: HamSketch,
    /// Windows folded in so far; window w holds grammar w of the insertion
    /// sequence.
    ham_back: u64,
    /// Windows folded out from the front; grammars 1..=ham_front are gone.
    ham_front: u64,
    /// Total evaluation length of the grammars removed from the front.
    evicted_front_eval: u64,
    appended_total: u64,
    removed_total: u64,
    failed: bool,
}

impl RollingSketch {
    pub fn new(params: &Params, bundle: &RandomnessBundle) -> Result<Self, RollingError> {
        let cap = rolling_capacity(params);
        Ok(RollingSketch {
            bundle_digest: bundle.digest,
            ins: SideState::new(),
            del: SideState::new(),
            ham: HamSketch::new(params, cap, bundle)?,
            ham_back: 0,
            ham_front: 0,
            evicted_front_eval: 0,
            appended_total: 0,
            removed_total: 0,
            failed: false,
        })
    }

    /// Like [`RollingSketch::new`] with an explicit mismatch capacity, for
    /// small-scale exercises where the derived capacity is needlessly large.
    pub fn with_capacity(
        params: &Params,
        bundle: &RandomnessBundle,
        cap: u64,
    ) -> Result<Self, RollingError> {
        let mut sk = RollingSketch::new(params, bundle)?;
        sk.ham = HamSketch::new(params, cap, bundle)?;
        Ok(sk)
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn appended(&self) -> u64 {
        self.appended_total
    }

    pub fn removed(&self) -> u64 {
        self.removed_total
    }

    /// (insertion commits, deletion commits); advances only on commit events.
    pub fn committed_counts(&self) -> (u64, u64) {
        (self.ins.committed_count, self.del.committed_count)
    }

    /// Committed rings (insertion side, deletion side), oldest first.
    pub fn rings(&self) -> (Vec<&Grammar>, Vec<&Grammar>) {
        (
            self.ins.committed.iter().collect(),
            self.del.committed.iter().collect(),
        )
    }

    pub fn append(
        &mut self,
        a: u32,
        bundle: &RandomnessBundle,
        params: &Params,
    ) -> Result<(), RollingError> {
        if a as u64 >= params.sigma_size {
            return Err(RollingError::SymbolOutOfRange(a));
        }
        self.appended_total += 1;
        if self.failed {
            return Ok(());
        }
        if let Err(e) = self.append_inner(a, bundle, params, true) {
            let _ = e;
            self.failed = true;
        }
        Ok(())
    }

    pub fn remove(
        &mut self,
        a: u32,
        bundle: &RandomnessBundle,
        params: &Params,
    ) -> Result<(), RollingError> {
        if a as u64 >= params.sigma_size {
            return Err(RollingError::SymbolOutOfRange(a));
        }
        if self.removed_total >= self.appended_total {
            return Err(RollingError::RemoveBeyondHistory);
        }
        self.removed_total += 1;
        if self.failed {
            return Ok(());
        }
        if let Err(e) = self.append_inner(a, bundle, params, false) {
            let _ = e;
            self.failed = true;
        }
        Ok(())
    }

    /// Shared update driver: extend one side's decomposition by a symbol,
    /// committing overflow grammars oldest-first.
    fn append_inner(
        &mut self,
        a: u32,
        bundle: &RandomnessBundle,
        params: &Params,
        insertion: bool,
    ) -> Result<(), UpdateError> {
        let t_window = params.suffix_locality;
        let side = if insertion { &self.ins } else { &self.del };
        let t = side.active.len() as u64;
        let ctx_take = (t_window + 1 - t).min(side.committed_count) as usize;
        let mut input: Vec<Grammar> = Vec::with_capacity(ctx_take + t as usize);
        let ring_len = side.committed.len();
        debug_assert!(ctx_take <= ring_len || side.committed_count == ring_len as u64);
        for g in side.committed.iter().skip(ring_len - ctx_take.min(ring_len)) {
            input.push(g.clone());
        }
        input.extend(side.active.iter().cloned());
        let updated = update_active_grammars(&input, a, bundle, params)?;
        debug_assert!(updated.len() >= ctx_take, "stable context grammars vanished");
        debug_assert!(
            updated[..ctx_take.min(updated.len())]
                .iter()
                .zip(input.iter())
                .all(|(u, i)| u == i),
            "committed grammars must never change"
        );
        let mut new_active: Vec<Grammar> = updated[ctx_take.min(updated.len())..].to_vec();
        let overflow = new_active.len().saturating_sub(t_window as usize);
        if insertion {
            for g in new_active.drain(..overflow) {
                self.commit_insertion(g, bundle, params)?;
            }
            self.ins.active = new_active;
        } else {
            for g in new_active.drain(..overflow) {
                self.commit_deletion(g, bundle, params)?;
            }
            self.del.active = new_active;
        }
        Ok(())
    }

    fn commit_insertion(
        &mut self,
        g: Grammar,
        bundle: &RandomnessBundle,
        params: &Params,
    ) -> Result<(), UpdateError> {
        let t_window = params.suffix_locality;
        self.ins.committed_eval_total += g.eval_size().unwrap_or(0);
        self.ins.committed.push_back(g);
        self.ins.committed_count += 1;
        let s = self.ins.committed_count;
        // The grammar 2T commits deep is frozen for good; fold it in, keyed
        // by its 4T+1-grammar neighborhood.
        if s > 2 * t_window {
            let idx = s - 2 * t_window;
            let first = self.ins.ring_first_index();
            let ctx: Vec<&Grammar> = (first.max(idx.saturating_sub(2 * t_window))..=s)
                .filter_map(|i| self.ins.committed_by_index(i))
                .collect();
            let target = self
                .ins
                .committed_by_index(idx)
                .expect("window grammar must still be in the ring");
            let e = enc_with_context(target, &ctx, bundle, params);
            for &v in &e.0 {
                if self.ham.append(v).is_err() {
                    return Err(UpdateError::PrefixUnreachable(0));
                }
            }
            self.ham_back += 1;
            debug_assert_eq!(self.ham_back, idx);
        }
        while self.ins.committed.len() as u64 > 4 * t_window {
            self.ins.committed.pop_front();
        }
        Ok(())
    }

    fn commit_deletion(
        &mut self,
        g: Grammar,
        bundle: &RandomnessBundle,
        params: &Params,
    ) -> Result<(), UpdateError> {
        let t_window = params.suffix_locality;
        self.del.committed_eval_total += g.eval_size().unwrap_or(0);
        self.del.committed.push_back(g);
        self.del.committed_count += 1;
        let r = self.del.committed_count;
        // The matching window was folded in by the insertion side; fold it
        // back out using the deletion side's copy of the same grammars.
        if r > 2 * t_window {
            let idx = r - 2 * t_window;
            let first = self.del.ring_first_index();
            let ctx: Vec<&Grammar> = (first.max(idx.saturating_sub(2 * t_window))..=r)
                .filter_map(|i| self.del.committed_by_index(i))
                .collect();
            let target = self
                .del
                .committed_by_index(idx)
                .expect("window grammar must still be in the ring");
            let eval = target.eval_size().unwrap_or(0);
            let e = enc_with_context(target, &ctx, bundle, params);
            for &v in &e.0 {
                if self.ham.remove_front(v).is_err() {
                    return Err(UpdateError::PrefixUnreachable(0));
                }
            }
            self.ham_front += 1;
            self.evicted_front_eval += eval;
            debug_assert_eq!(self.ham_front, idx);
        }
        while self.del.committed.len() as u64 > 4 * t_window {
            self.del.committed.pop_front();
        }
        Ok(())
    }

    fn live_grammar_span(&self) -> u64 {
        self.ins.committed_count + self.ins.active.len() as u64
    }

    pub fn serialize_words(&self) -> Vec<u64> {
        let mut w = Vec::new();
        w.push(self.bundle_digest);
        w.push(self.failed as u64);
        w.push(self.appended_total);
        w.push(self.removed_total);
        w.push(self.ham_back);
        w.push(self.ham_front);
        w.push(self.evicted_front_eval);
        for side in [&self.ins, &self.del] {
            w.push(side.committed_count);
            w.push(side.committed_eval_total);
            w.push(side.committed.len() as u64);
            for g in &side.committed {
                grammar_words(g, &mut w);
            }
            w.push(side.active.len() as u64);
            for g in &side.active {
                grammar_words(g, &mut w);
            }
        }
        let ham = self.ham.payload_words();
        w.push(ham.len() as u64);
        w.extend(ham);
        w
    }

    pub fn deserialize_words(
        words: &[u64],
        params: &Params,
        bundle: &RandomnessBundle,
    ) -> Option<RollingSketch> {
        let mut cur = 0usize;
        let take = |cur: &mut usize| -> Option<u64> {
            let v = words.get(*cur).copied();
            *cur += 1;
            v
        };
        let bundle_digest = take(&mut cur)?;
        let failed = take(&mut cur)? != 0;
        let appended_total = take(&mut cur)?;
        let removed_total = take(&mut cur)?;
        let ham_back = take(&mut cur)?;
        let ham_front = take(&mut cur)?;
        let evicted_front_eval = take(&mut cur)?;
        let mut sides = Vec::new();
        for _ in 0..2 {
            let committed_count = take(&mut cur)?;
            let committed_eval_total = take(&mut cur)?;
            let ring_len = take(&mut cur)? as usize;
            let mut committed = VecDeque::with_capacity(ring_len);
            for _ in 0..ring_len {
                committed.push_back(grammar_from_words(words, &mut cur, params)?);
            }
            let active_len = take(&mut cur)? as usize;
            let mut active = Vec::with_capacity(active_len);
            for _ in 0..active_len {
                active.push(grammar_from_words(words, &mut cur, params)?);
            }
            sides.push(SideState {
                committed,
                committed_count,
                committed_eval_total,
                active,
            });
        }
        let ham_len = take(&mut cur)? as usize;
        let ham_words = words.get(cur..cur + ham_len)?;
        cur += ham_len;
        if cur != words.len() {
            return None;
        }
        let ham = HamSketch::from_payload_words(ham_words, params, bundle)?;
        let del = sides.pop()?;
        let ins = sides.pop()?;
        Some(RollingSketch {
            bundle_digest,
            ins,
            del,
            ham,
            ham_back,
            ham_front,
            evicted_front_eval,
            appended_total,
            removed_total,
            failed,
        })
    }
}

/// Mismatch capacity of the rolling Hamming sketch: (4T+1)(k+2) windows.
pub fn rolling_capacity(params: &Params) -> u64 {
    (4 * params.suffix_locality + 1)
        .saturating_mul(params.k + 2)
        .saturating_mul(params.enc_len)
}

fn grammar_words(g: &Grammar, w: &mut Vec<u64>) {
    // Ordinals fit 128 bits; store as pairs of words.
    let push_sym = |w: &mut Vec<u64>, o: u128| {
        w.push(o as u64);
        w.push((o >> 64) as u64);
    };
    w.push(g.start.len() as u64);
    w.push(g.rules.len() as u64);
    // The ordinal encoding needs the parameter context only on decode; keep
    // raw component encoding instead so serialization stays context-free.
    let _ = push_sym;
    for s in g.start.iter() {
        sym_words(*s, w);
    }
    for (lhs, (a, b)) in &g.rules {
        sym_words(*lhs, w);
        sym_words(*a, w);
        sym_words(*b, w);
    }
}

fn sym_words(s: SymbolId, w: &mut Vec<u64>) {
    match s {
        SymbolId::Input(c) => {
            w.push(0);
            w.push(c as u64);
            w.push(0);
        }
        SymbolId::Comp(l, v) => {
            w.push(1);
            w.push(l as u64);
            w.push(v);
        }
        SymbolId::Repeat(base, count) => {
            let (tag, x, y) = match base {
                crate::symbol::BaseSymbol::Input(c) => (2u64, c as u64, 0u64),
                crate::symbol::BaseSymbol::Comp(l, v) => (3, l as u64, v),
            };
            w.push(tag | ((count as u64) << 32));
            w.push(x);
            w.push(y);
        }
    }
}

fn sym_from_words(words: &[u64], cur: &mut usize) -> Option<SymbolId> {
    let tagword = *words.get(*cur)?;
    let x = *words.get(*cur + 1)?;
    let y = *words.get(*cur + 2)?;
    *cur += 3;
    let tag = tagword & 0xffff_ffff;
    let count = (tagword >> 32) as u32;
    Some(match tag {
        0 => SymbolId::Input(x as u32),
        1 => SymbolId::Comp(x as u8, y),
        2 => SymbolId::Repeat(crate::symbol::BaseSymbol::Input(x as u32), count),
        3 => SymbolId::Repeat(crate::symbol::BaseSymbol::Comp(x as u8, y), count),
        _ => return None,
    })
}

fn grammar_from_words(words: &[u64], cur: &mut usize, _params: &Params) -> Option<Grammar> {
    let start_len = *words.get(*cur)? as usize;
    let rule_len = *words.get(*cur + 1)? as usize;
    *cur += 2;
    let mut start = SymbolString::new();
    for _ in 0..start_len {
        start.push(sym_from_words(words, cur)?);
    }
    let mut rules = BTreeMap::new();
    for _ in 0..rule_len {
        let lhs = sym_from_words(words, cur)?;
        let a = sym_from_words(words, cur)?;
        let b = sym_from_words(words, cur)?;
        rules.insert(lhs, (a, b));
    }
    Some(Grammar::new(start, rules))
}

/// Compare two rolling sketches built from the same bundle: the exact edit
/// distance of the two live strings when it is at most k, infinity
/// otherwise.
pub fn rolling_compare(
    x: &RollingSketch,
    y: &RollingSketch,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<EdOutcome, RollingError> {
    if x.bundle_digest != y.bundle_digest || x.bundle_digest != bundle.digest {
        return Err(RollingError::BundleMismatch);
    }
    if x.failed || y.failed {
        return Ok(EdOutcome::Infinite);
    }
    let dx = x.live_grammar_span() - x.del.committed_count;
    let dy = y.live_grammar_span() - y.del.committed_count;
    let (big, small) = if dx >= dy { (x, y) } else { (y, x) };
    let (dbig, dsmall) = (dx.max(dy), dx.min(dy));
    if dbig - dsmall >= 2 * params.suffix_locality {
        return Ok(EdOutcome::Infinite);
    }
    if dbig < 10 * params.suffix_locality {
        compare_via_full_recovery(big, small, bundle, params)
    } else {
        compare_via_alignment(big, small, bundle, params)
    }
}

/// Everything within reach: recover all sketched windows against an all-ones
/// dummy, reconstruct both live strings as single grammars, and run the
/// cutoff edit distance.
fn compare_via_full_recovery(
    x: &RollingSketch,
    y: &RollingSketch,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<EdOutcome, RollingError> {
    let gx = match reconstruct_live(x, bundle, params) {
        Some(g) => g,
        None => return Ok(EdOutcome::Infinite),
    };
    let gy = match reconstruct_live(y, bundle, params) {
        Some(g) => g,
        None => return Ok(EdOutcome::Infinite),
    };
    match grammar_pair_ed(&gx, &gy, params.k as usize, 1 << 28) {
        Ok(Some(d)) => Ok(EdOutcome::Distance(d as u64)),
        Ok(None) | Err(_) => Ok(EdOutcome::Infinite),
    }
}

/// Recover every sketched window of one sketch by comparing against the
/// all-ones dummy of the same shape.
fn recover_all_windows(
    sk: &RollingSketch,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Option<BTreeMap<u64, Grammar>> {
    let mut out = BTreeMap::new();
    if sk.ham.len() == 0 {
        return Some(out);
    }
    let dummy = HamSketch::of_known(
        &vec![1u64; sk.ham.len() as usize],
        sk.ham.offset(),
        params,
        sk.ham.capacity(),
        bundle,
    )
    .ok()?;
    let mis = match HamSketch::compare(&sk.ham, &dummy).ok()? {
        HamCompare::TooMany => return None,
        HamCompare::Mismatches(m) => m,
    };
    let m = params.enc_len;
    let mut windows: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for w in sk.ham_front + 1..=sk.ham_back {
        windows.insert(w, vec![1u64; m as usize]);
    }
    for mm in &mis {
        debug_assert_eq!(mm.y, 1);
        let w = sk.ham_front + 1 + (mm.pos - 1) / m;
        let off = ((mm.pos - 1) % m) as usize;
        windows.get_mut(&w)?[off] = mm.x;
    }
    for (w, syms) in windows {
        // Context-fingerprinted windows decode against the shared range; the
        // fingerprint itself is vouched for by the Hamming verification.
        let (g, _h) = decode_bits_only(&syms, bundle.kr.range, params)?;
        out.insert(w, g);
    }
    Some(out)
}

/// Rebuild the live string of one sketch as a single grammar, using the
/// committed ring and active list, and recovering sketched windows only for
/// indices the ring no longer holds.
fn reconstruct_live(
    sk: &RollingSketch,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Option<Grammar> {
    let s = sk.ins.committed_count;
    let t = sk.ins.active.len() as u64;
    if s == 0 && t == 0 {
        return (sk.removed_total == 0).then(|| Grammar::literal(&[]));
    }
    let ring_first = if s == 0 { 1 } else { sk.ins.ring_first_index() };
    let need_recovery = sk.ham.len() > 0 && ring_first > sk.ham_front + 1;
    let recovered = if need_recovery {
        recover_all_windows(sk, bundle, params)?
    } else {
        BTreeMap::new()
    };
    let lookup = |idx: u64| -> Option<&Grammar> {
        if idx > s {
            sk.ins.active.get((idx - s - 1) as usize)
        } else {
            sk.ins.committed_by_index(idx).or_else(|| recovered.get(&idx))
        }
    };
    // Anchor the cumulative evaluation length at the earliest index some
    // source still covers.
    let removed = sk.removed_total;
    let (first_known, mut cum) = if ring_first <= sk.ham_front + 1 || sk.ham.len() == 0 {
        let ring_evals: u64 = sk
            .ins
            .committed
            .iter()
            .map(|g| g.eval_size().unwrap_or(0))
            .sum();
        (ring_first, sk.ins.committed_eval_total - ring_evals)
    } else {
        (sk.ham_front + 1, sk.evicted_front_eval)
    };
    if cum > removed {
        // The live string starts before any grammar still in reach.
        return None;
    }
    let mut pieces: Vec<Grammar> = Vec::new();
    let mut idx = first_known;
    let mut started = false;
    while idx <= s + t {
        let g = lookup(idx)?;
        let size = g.eval_size().ok()?;
        if !started {
            if cum + size > removed {
                let cut = removed - cum;
                let shortened = g.suffix(cut + 1).ok()?;
                pieces.push(shortened);
                started = true;
            } else {
                cum += size;
            }
        } else {
            pieces.push(g.clone());
        }
        idx += 1;
    }
    if !started {
        // Entire history removed: live string is empty.
        debug_assert_eq!(cum, removed);
        return Some(Grammar::literal(&[]));
    }
    let refs: Vec<&Grammar> = pieces.iter().collect();
    combine(&refs).ok()
}

/// Far apart: align the two Hamming sketches by padding with ones, recover
/// the differing windows, and combine their pair distances with the boundary
/// contribution at the deletion edge.
///
/// Window pairing is right-anchored: x's grammar j pairs with y's grammar
/// j - shift where shift is the difference of the total grammar counts. The
/// deletion edges differ by delta = d_x - d_y windows, which drives the
/// boundary accounting.
fn compare_via_alignment(
    x: &RollingSketch,
    y: &RollingSketch,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<EdOutcome, RollingError> {
    let m = params.enc_len;
    let t_window = params.suffix_locality;
    let dx = x.live_grammar_span() - x.del.committed_count;
    let dy = y.live_grammar_span() - y.del.committed_count;
    debug_assert!(dx >= dy);
    let delta = dx - dy;
    let shift = x.live_grammar_span() as i128 - y.live_grammar_span() as i128;

    // Common canvas in x's window indexing; it may extend below zero when
    // y's windows sit earlier, so everything is rebased before sketch
    // arithmetic.
    let fx = x.ham_front as i128;
    let bx = x.ham_back as i128;
    let fy = y.ham_front as i128 + shift;
    let by = y.ham_back as i128 + shift;
    let front = fx.min(fy);
    let back = bx.max(by);
    if back < front {
        return Ok(EdOutcome::Infinite);
    }
    let cap = x.ham.capacity();
    let canvas = |ham: &HamSketch, f: i128, b: i128| -> Result<HamSketch, HamError> {
        // Move the core so that window f lands right after canvas position
        // (f - front) * m, then pad both ends with ones.
        let mut core = ham.clone();
        let target_off = (f - front) as u64 * m;
        let delta_off = target_off as i128 - core.offset() as i128;
        core.shift(delta_off as i64)?;
        let lead = HamSketch::of_known(
            &vec![1u64; ((f - front) as u64 * m) as usize],
            0,
            params,
            cap,
            bundle,
        )?;
        let with_lead = HamSketch::concat_disjoint(&lead, &core)?;
        let tail = HamSketch::of_known(
            &vec![1u64; ((back - b) as u64 * m) as usize],
            (b - front) as u64 * m,
            params,
            cap,
            bundle,
        )?;
        HamSketch::concat_disjoint(&with_lead, &tail)
    };
    let xc = canvas(&x.ham, fx, bx)?;
    let yc = canvas(&y.ham, fy, by)?;
    let mis = match HamSketch::compare(&xc, &yc)? {
        HamCompare::TooMany => return Ok(EdOutcome::Infinite),
        HamCompare::Mismatches(mm) => mm,
    };

    // Group mismatches by x-index window.
    let mut windows: BTreeMap<i128, Vec<(u64, u64, u64)>> = BTreeMap::new();
    for mm in &mis {
        let w = front + 1 + ((mm.pos - 1) / m) as i128;
        windows
            .entry(w)
            .or_default()
            .push(((mm.pos - 1) % m, mm.x, mm.y));
    }
    // Decode the differing pairs. Within a padding region the present side is
    // recovered against ones; both-present windows must differ everywhere.
    let mut xdiff: BTreeMap<i128, Option<Grammar>> = BTreeMap::new();
    let mut ydiff: BTreeMap<i128, Option<Grammar>> = BTreeMap::new();
    for (w, entries) in windows {
        let x_present = w > fx && w <= bx;
        let y_present = w > fy && w <= by;
        let mut xsyms = vec![if x_present { 0u64 } else { 1 }; m as usize];
        let mut ysyms = vec![if y_present { 0u64 } else { 1 }; m as usize];
        let full = entries.len() as u64 == m;
        if x_present && y_present && !full {
            return Ok(EdOutcome::Infinite);
        }
        for (off, xv, yv) in entries {
            xsyms[off as usize] = xv;
            ysyms[off as usize] = yv;
        }
        if x_present {
            match decode_bits_only(&xsyms, bundle.kr.range, params) {
                Some((g, _)) => xdiff.insert(w, Some(g)),
                None => return Ok(EdOutcome::Infinite),
            };
        } else {
            xdiff.insert(w, None);
        }
        if y_present {
            match decode_bits_only(&ysyms, bundle.kr.range, params) {
                Some((g, _)) => ydiff.insert(w, Some(g)),
                None => return Ok(EdOutcome::Infinite),
            };
        } else {
            ydiff.insert(w, None);
        }
    }

    // Per-side grammar lookup in x's index space.
    let x_lookup = |w: i128| -> Option<Grammar> {
        if w < 1 {
            return None;
        }
        let idx = w as u64;
        let s = x.ins.committed_count;
        if idx > s {
            return x.ins.active.get((idx - s - 1) as usize).cloned();
        }
        if let Some(g) = x.ins.committed_by_index(idx) {
            return Some(g.clone());
        }
        xdiff.get(&w).cloned().flatten()
    };
    let y_lookup = |w: i128| -> Option<Grammar> {
        let idx = w - shift;
        if idx < 1 {
            return None;
        }
        let idx = idx as u64;
        let s = y.ins.committed_count;
        if idx > s {
            return y.ins.active.get((idx - s - 1) as usize).cloned();
        }
        if let Some(g) = y.ins.committed_by_index(idx) {
            return Some(g.clone());
        }
        ydiff.get(&w).cloned().flatten()
    };

    // The first 2T live pairs either contain a recovered mismatch (then both
    // heads are decodable and the boundary is located by evaluation sizes)
    // or are all identical (then only the length difference at the deletion
    // edge matters).
    let rx = x.del.committed_count as i128;
    let head_hi = rx + 2 * t_window as i128;
    let heads_differ = xdiff.keys().any(|&w| w > rx && w <= head_hi);

    let mut total: u64 = 0;
    let pair_ed = |gx: &Grammar, gy: &Grammar, total: &mut u64| -> Option<()> {
        let cutoff = (params.k - *total) as usize;
        match grammar_pair_ed(gx, gy, cutoff, 1 << 28) {
            Ok(Some(d)) => {
                *total += d as u64;
                Some(())
            }
            _ => None,
        }
    };

    let x_live_end = x.live_grammar_span() as i128;
    // Differing pairs beyond the boundary: recovered mismatches plus every
    // pair in the buffer tail past the sketched windows.
    let mut tail_pairs: std::collections::BTreeSet<i128> = Default::default();
    for &w in xdiff.keys().chain(ydiff.keys()) {
        tail_pairs.insert(w);
    }
    for w in (bx.min(by) + 1)..=x_live_end {
        tail_pairs.insert(w);
    }

    let boundary_at;
    if heads_differ {
        // Locate the first live grammar on each side by evaluation sizes.
        let x_del_active_eval = x.removed_total - x.del.committed_eval_total;
        let y_del_active_eval = y.removed_total - y.del.committed_eval_total;
        let locate = |lookup: &dyn Fn(i128) -> Option<Grammar>,
                      start_idx: i128,
                      leftover: u64|
         -> Option<(i128, u64)> {
            let mut cum = 0u64;
            let mut idx = start_idx;
            loop {
                let g = lookup(idx)?;
                let size = g.eval_size().ok()?;
                if cum + size > leftover {
                    return Some((idx, leftover - cum));
                }
                cum += size;
                idx += 1;
            }
        };
        let (px, xcut) = match locate(&x_lookup, rx + 1, x_del_active_eval) {
            Some(v) => v,
            None => return Ok(EdOutcome::Infinite),
        };
        // y's deletion edge sits delta windows ahead of x's in this space.
        let ry_x = rx + delta as i128;
        let (py_x, ycut) = match locate(&y_lookup, ry_x + 1, y_del_active_eval) {
            Some(v) => v,
            None => return Ok(EdOutcome::Infinite),
        };
        if px != py_x {
            return Ok(EdOutcome::Infinite);
        }
        let gx_head = match x_lookup(px).map(|g| g.suffix(xcut + 1)) {
            Some(Ok(g)) => g,
            _ => return Ok(EdOutcome::Infinite),
        };
        let gy_head = match y_lookup(px).map(|g| g.suffix(ycut + 1)) {
            Some(Ok(g)) => g,
            _ => return Ok(EdOutcome::Infinite),
        };
        if pair_ed(&gx_head, &gy_head, &mut total).is_none() {
            return Ok(EdOutcome::Infinite);
        }
        boundary_at = px;
    } else {
        // Identical heads: the shared head grammar produces a prefix of one
        // side and a suffix of the other; the length difference is the edit
        // distance of that pair, derived from the deletion-side accounts.
        let x_del_active_eval = x.removed_total - x.del.committed_eval_total;
        let mut y_side = y.removed_total as i128 - y.del.committed_eval_total as i128;
        // y's committed deletions lag x's edge by delta grammars; add their
        // evaluations back from y's deletion ring.
        for j in 0..delta {
            let idx = y.del.committed_count.checked_sub(j);
            let g = match idx.filter(|&i| i > 0).and_then(|i| y.del.committed_by_index(i)) {
                Some(g) => g,
                None => return Ok(EdOutcome::Infinite),
            };
            y_side += g.eval_size().unwrap_or(0) as i128;
        }
        let boundary = (x_del_active_eval as i128 - y_side).unsigned_abs() as u64;
        total += boundary;
        if total > params.k {
            return Ok(EdOutcome::Infinite);
        }
        boundary_at = rx + delta as i128;
    }
    for w in tail_pairs {
        if w <= boundary_at || w > x_live_end {
            continue;
        }
        let gx_w = match x_lookup(w) {
            Some(g) => g,
            None => return Ok(EdOutcome::Infinite),
        };
        let gy_w = match y_lookup(w) {
            Some(g) => g,
            None => return Ok(EdOutcome::Infinite),
        };
        if gx_w == gy_w {
            continue;
        }
        if pair_ed(&gx_w, &gy_w, &mut total).is_none() {
            return Ok(EdOutcome::Infinite);
        }
    }
    if total > params.k {
        return Ok(EdOutcome::Infinite);
    }
    Ok(EdOutcome::Distance(total))
}

/// Independent rolling copies under distinct bundles, majority-voted on
/// comparison.
pub struct AmplifiedRolling {
    pub copies: Vec<RollingSketch>,
}

impl AmplifiedRolling {
    pub fn new(params: &Params, bundles: &[RandomnessBundle]) -> Result<Self, RollingError> {
        Ok(AmplifiedRolling {
            copies: bundles
                .iter()
                .map(|b| RollingSketch::new(params, b))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn append(
        &mut self,
        a: u32,
        bundles: &[RandomnessBundle],
        params: &Params,
    ) -> Result<(), RollingError> {
        for (sk, b) in self.copies.iter_mut().zip(bundles) {
            sk.append(a, b, params)?;
        }
        Ok(())
    }

    pub fn remove(
        &mut self,
        a: u32,
        bundles: &[RandomnessBundle],
        params: &Params,
    ) -> Result<(), RollingError> {
        for (sk, b) in self.copies.iter_mut().zip(bundles) {
            sk.remove(a, b, params)?;
        }
        Ok(())
    }

    pub fn compare(
        a: &AmplifiedRolling,
        b: &AmplifiedRolling,
        bundles: &[RandomnessBundle],
        params: &Params,
    ) -> Result<EdOutcome, RollingError> {
        if a.copies.len() != b.copies.len() || a.copies.len() != bundles.len() || bundles.is_empty()
        {
            return Err(RollingError::CopyCountMismatch);
        }
        let mut counts: BTreeMap<Option<u64>, usize> = BTreeMap::new();
        for ((x, y), bundle) in a.copies.iter().zip(b.copies.iter()).zip(bundles.iter()) {
            let key = match rolling_compare(x, y, bundle, params)? {
                EdOutcome::Distance(d) => Some(d),
                EdOutcome::Infinite => None,
            };
            *counts.entry(key).or_default() += 1;
        }
        let best = counts.values().copied().max().unwrap();
        let winners: Vec<Option<u64>> = counts
            .iter()
            .filter(|(_, &c)| c == best)
            .map(|(k, _)| *k)
            .collect();
        if winners.len() != 1 {
            return Ok(EdOutcome::Infinite);
        }
        Ok(match winners[0] {
            Some(d) => EdOutcome::Distance(d),
            None => EdOutcome::Infinite,
        })
    }
}
