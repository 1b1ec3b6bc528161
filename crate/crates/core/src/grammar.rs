//! Deterministic grammars: a start string plus one binary rule per
//! compression symbol. Repeat symbols expand implicitly, so run-length rules
//! are carried by the symbols themselves and only materialize in the size
//! accounting and the wire encoding.

use crate::symbol::{BaseSymbol, SymbolId, SymbolString};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("no rule for symbol {0:?}")]
    Undefined(SymbolId),
    #[error("rule graph contains a cycle through {0:?}")]
    Cyclic(SymbolId),
    #[error("evaluation exceeds the configured budget")]
    Budget,
    #[error("conflicting rules for {0:?}")]
    RuleConflict(SymbolId),
    #[error("suffix start {start} out of range (evaluation size {size})")]
    SuffixOutOfRange { start: u64, size: u64 },
}

/// Default cap on materialized evaluation length.
pub const DEFAULT_EVAL_BUDGET: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Grammar {
    pub start: SymbolString,
    pub rules: BTreeMap<SymbolId, (SymbolId, SymbolId)>,
}

impl Grammar {
    pub fn new(start: SymbolString, rules: BTreeMap<SymbolId, (SymbolId, SymbolId)>) -> Self {
        Grammar { start, rules }
    }

    /// Grammar over input symbols only.
    pub fn literal(codes: &[u32]) -> Self {
        Grammar {
            start: SymbolString::from_input(codes),
            rules: BTreeMap::new(),
        }
    }

    /// Rule count: the start rule, one rule per compression symbol, and one
    /// materialized rule per distinct repeat symbol that appears anywhere.
    pub fn size(&self) -> u64 {
        1 + self.rules.len() as u64 + self.repeat_symbols().len() as u64
    }

    /// Distinct repeat symbols appearing in the start string or any rule.
    pub fn repeat_symbols(&self) -> BTreeSet<(BaseSymbol, u32)> {
        let mut out = BTreeSet::new();
        let mut note = |s: &SymbolId| {
            if let SymbolId::Repeat(b, c) = s {
                out.insert((*b, *c));
            }
        };
        for s in self.start.iter() {
            note(s);
        }
        for (a, b) in self.rules.values() {
            note(a);
            note(b);
        }
        out
    }

    /// Full expansion into input symbol codes.
    pub fn eval(&self) -> Result<Vec<u32>, GrammarError> {
        self.eval_budgeted(DEFAULT_EVAL_BUDGET)
    }

    pub fn eval_budgeted(&self, budget: u64) -> Result<Vec<u32>, GrammarError> {
        // Per-symbol sizes double as the cycle check.
        let sizes = self.symbol_sizes()?;
        let mut total: u64 = 0;
        for s in self.start.iter() {
            total = total
                .checked_add(*sizes.get(s).unwrap())
                .ok_or(GrammarError::Budget)?;
        }
        if total > budget {
            return Err(GrammarError::Budget);
        }
        let mut out = Vec::with_capacity(total as usize);
        let mut stack: Vec<SymbolId> = self.start.iter().rev().copied().collect();
        while let Some(s) = stack.pop() {
            match s {
                SymbolId::Input(c) => out.push(c),
                SymbolId::Comp(..) => {
                    let (a, b) = self.rules.get(&s).ok_or(GrammarError::Undefined(s))?;
                    stack.push(*b);
                    stack.push(*a);
                }
                SymbolId::Repeat(base, count) => {
                    let base: SymbolId = base.into();
                    for _ in 0..count {
                        stack.push(base);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Evaluation length without materializing, via memoized per-symbol sizes.
    pub fn eval_size(&self) -> Result<u64, GrammarError> {
        let sizes = self.symbol_sizes()?;
        let mut total: u64 = 0;
        for s in self.start.iter() {
            total = total
                .checked_add(*sizes.get(s).unwrap())
                .ok_or(GrammarError::Budget)?;
        }
        Ok(total)
    }

    /// Expansion sizes for every symbol reachable from the start, with cycle
    /// detection.
    fn symbol_sizes(&self) -> Result<HashMap<SymbolId, u64>, GrammarError> {
        #[derive(Clone, Copy, PartialEq)]
        enum State {
            Open,
            Done,
        }
        let mut sizes: HashMap<SymbolId, u64> = HashMap::new();
        let mut state: HashMap<SymbolId, State> = HashMap::new();
        // Iterative post-order DFS.
        for root in self.start.iter() {
            if sizes.contains_key(root) {
                continue;
            }
            let mut stack = vec![(*root, false)];
            while let Some((s, children_done)) = stack.pop() {
                if children_done {
                    let sz = match s {
                        SymbolId::Input(_) => 1,
                        SymbolId::Comp(..) => {
                            let (a, b) = self.rules.get(&s).ok_or(GrammarError::Undefined(s))?;
                            sizes[a].checked_add(sizes[b]).ok_or(GrammarError::Budget)?
                        }
                        SymbolId::Repeat(base, count) => sizes[&SymbolId::from(base)]
                            .checked_mul(count as u64)
                            .ok_or(GrammarError::Budget)?,
                    };
                    sizes.insert(s, sz);
                    state.insert(s, State::Done);
                    continue;
                }
                match state.get(&s) {
                    Some(State::Done) => continue,
                    Some(State::Open) => return Err(GrammarError::Cyclic(s)),
                    None => {}
                }
                state.insert(s, State::Open);
                stack.push((s, true));
                match s {
                    SymbolId::Input(_) => {}
                    SymbolId::Comp(..) => {
                        let (a, b) = self.rules.get(&s).ok_or(GrammarError::Undefined(s))?;
                        for c in [*a, *b] {
                            match state.get(&c) {
                                Some(State::Done) => {}
                                Some(State::Open) => return Err(GrammarError::Cyclic(c)),
                                None => stack.push((c, false)),
                            }
                        }
                    }
                    SymbolId::Repeat(base, _) => {
                        let c = SymbolId::from(base);
                        match state.get(&c) {
                            Some(State::Done) => {}
                            Some(State::Open) => return Err(GrammarError::Cyclic(c)),
                            None => stack.push((c, false)),
                        }
                    }
                }
            }
        }
        Ok(sizes)
    }

    /// Keep only rules reachable from the start string.
    pub fn prune(&self) -> Grammar {
        let mut keep = BTreeMap::new();
        let mut seen = BTreeSet::new();
        let mut stack: Vec<SymbolId> = self.start.iter().copied().collect();
        while let Some(s) = stack.pop() {
            let probe = match s {
                SymbolId::Repeat(base, _) => SymbolId::from(base),
                other => other,
            };
            if !seen.insert(probe) {
                continue;
            }
            if let SymbolId::Comp(..) = probe {
                if let Some((a, b)) = self.rules.get(&probe) {
                    keep.insert(probe, (*a, *b));
                    stack.push(*a);
                    stack.push(*b);
                }
            }
        }
        Grammar {
            start: self.start.clone(),
            rules: keep,
        }
    }

    /// A grammar evaluating to `eval(self)[start..]` (1-based; `start` may be
    /// `eval_size + 1`, producing the empty string). Rules are shared; only
    /// the start string is rebuilt along the path to position `start`.
    pub fn suffix(&self, start: u64) -> Result<Grammar, GrammarError> {
        let size = self.eval_size()?;
        if start == 0 || start > size + 1 {
            return Err(GrammarError::SuffixOutOfRange { start, size });
        }
        let sizes = self.symbol_sizes()?;
        let mut pieces: Vec<SymbolId> = Vec::new();
        let mut skip = start - 1; // symbols to drop from the front
        let mut idx = 0usize;
        let elems = self.start.as_slice();
        while idx < elems.len() {
            let sz = sizes[&elems[idx]];
            if skip < sz {
                break;
            }
            skip -= sz;
            idx += 1;
        }
        if idx < elems.len() && skip > 0 {
            self.descend(elems[idx], skip, &sizes, &mut pieces)?;
            idx += 1;
        } else if idx < elems.len() {
            // skip == 0: keep the whole element.
        }
        let mut start_str = SymbolString::from_vec(pieces);
        for e in &elems[idx..] {
            start_str.push(*e);
        }
        Ok(Grammar {
            start: start_str,
            rules: self.rules.clone(),
        }
        .prune())
    }

    /// Push the symbols covering `expansion(s)[skip..]` onto `pieces`
    /// (0 < skip < size(s)).
    fn descend(
        &self,
        s: SymbolId,
        skip: u64,
        sizes: &HashMap<SymbolId, u64>,
        pieces: &mut Vec<SymbolId>,
    ) -> Result<(), GrammarError> {
        debug_assert!(skip > 0 && skip < sizes[&s]);
        match s {
            SymbolId::Input(_) => unreachable!("input symbols have size 1"),
            SymbolId::Comp(..) => {
                let (a, b) = *self.rules.get(&s).ok_or(GrammarError::Undefined(s))?;
                let sa = sizes[&a];
                if skip < sa {
                    self.descend(a, skip, sizes, pieces)?;
                    pieces.push(b);
                } else if skip == sa {
                    pieces.push(b);
                } else {
                    self.descend(b, skip - sa, sizes, pieces)?;
                }
            }
            SymbolId::Repeat(base, count) => {
                let base_sym = SymbolId::from(base);
                let sb = sizes[&base_sym];
                let whole = (skip / sb) as u32;
                let inner = skip % sb;
                let mut remaining = count - whole;
                if inner > 0 {
                    self.descend(base_sym, inner, sizes, pieces)?;
                    remaining -= 1;
                }
                if remaining >= 2 {
                    pieces.push(SymbolId::Repeat(base, remaining));
                } else if remaining == 1 {
                    pieces.push(base_sym);
                }
            }
        }
        Ok(())
    }
}

/// Concatenate several grammars into one: starts concatenate, rule sets must
/// agree wherever they overlap.
pub fn combine(grammars: &[&Grammar]) -> Result<Grammar, GrammarError> {
    let mut start = SymbolString::new();
    let mut rules: BTreeMap<SymbolId, (SymbolId, SymbolId)> = BTreeMap::new();
    for g in grammars {
        start.extend(&g.start);
        for (lhs, rhs) in &g.rules {
            if let Some(prev) = rules.insert(*lhs, *rhs) {
                if prev != *rhs {
                    return Err(GrammarError::RuleConflict(*lhs));
                }
            }
        }
    }
    Ok(Grammar { start, rules })
}

/// Edit distance between two grammar evaluations, when at most `cutoff`;
/// `None` otherwise. Materializes both evaluations under `eval_budget` and
/// runs a banded dynamic program, so the work is O(lengths * cutoff).
pub fn grammar_pair_ed(
    gx: &Grammar,
    gy: &Grammar,
    cutoff: usize,
    eval_budget: u64,
) -> Result<Option<usize>, GrammarError> {
    if gx == gy {
        return Ok(Some(0));
    }
    let sx = gx.eval_size()?;
    let sy = gy.eval_size()?;
    if sx.abs_diff(sy) > cutoff as u64 {
        return Ok(None);
    }
    let ex = match gx.eval_budgeted(eval_budget) {
        Ok(v) => v,
        Err(GrammarError::Budget) => return Ok(None),
        Err(e) => return Err(e),
    };
    let ey = match gy.eval_budgeted(eval_budget) {
        Ok(v) => v,
        Err(GrammarError::Budget) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(banded(&ex, &ey, cutoff))
}

/// Banded edit distance, independent of the test-kit implementation.
fn banded(x: &[u32], y: &[u32], cutoff: usize) -> Option<usize> {
    let (m, n) = (x.len(), y.len());
    if m.abs_diff(n) > cutoff {
        return None;
    }
    let w = cutoff;
    let inf = usize::MAX / 2;
    let width = 2 * w + 1;
    let mut prev = vec![inf; width];
    let mut cur = vec![inf; width];
    for (o, p) in prev.iter_mut().enumerate() {
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
                let off = |col: isize, row: usize| -> Option<usize> {
                    let v = col - row as isize + w as isize;
                    (0..width as isize).contains(&v).then_some(v as usize)
                };
                if let Some(po) = off(j as isize - 1, i - 1) {
                    best = best.min(prev[po] + usize::from(x[i - 1] != y[j - 1]));
                }
                if let Some(po) = off(j as isize, i - 1) {
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
    (prev[off as usize] <= cutoff).then_some(prev[off as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn comp(l: u8, v: u64) -> SymbolId {
        SymbolId::Comp(l, v)
    }

    fn inp(c: u32) -> SymbolId {
        SymbolId::Input(c)
    }

    #[test]
    fn eval_basics() {
        let g = Grammar::literal(&[1, 2]);
        assert_eq!(g.eval().unwrap(), vec![1, 2]);
        assert_eq!(g.eval_size().unwrap(), 2);

        let g = Grammar::new(
            SymbolString::from_vec(vec![SymbolId::repeat_of(inp(7), 3)]),
            BTreeMap::new(),
        );
        assert_eq!(g.eval().unwrap(), vec![7, 7, 7]);
        assert_eq!(g.eval_size().unwrap(), 3);
    }

    #[test]
    fn eval_nested_rules() {
        let mut rules = BTreeMap::new();
        rules.insert(comp(2, 0), (comp(1, 0), inp(2)));
        rules.insert(comp(1, 0), (inp(0), inp(1)));
        let g = Grammar::new(SymbolString::from_vec(vec![comp(2, 0), comp(2, 0)]), rules);
        assert_eq!(g.eval().unwrap(), vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(g.eval_size().unwrap(), 6);
        assert_eq!(g.size(), 3);
    }

    #[test]
    fn eval_errors() {
        let mut rules = BTreeMap::new();
        rules.insert(comp(1, 0), (comp(1, 0), inp(0)));
        let g = Grammar::new(SymbolString::from_vec(vec![comp(1, 0)]), rules);
        assert!(matches!(g.eval(), Err(GrammarError::Cyclic(_))));

        let g = Grammar::new(SymbolString::from_vec(vec![comp(1, 5)]), BTreeMap::new());
        assert!(matches!(g.eval(), Err(GrammarError::Undefined(_))));
    }

    #[test]
    fn eval_budget_guard() {
        // Doubling chain: 2^40 symbols, must trip the budget, not OOM.
        let mut rules = BTreeMap::new();
        rules.insert(comp(1, 0), (inp(0), inp(0)));
        for i in 1..40u64 {
            rules.insert(comp(1, i), (comp(1, i - 1), comp(1, i - 1)));
        }
        let g = Grammar::new(SymbolString::from_vec(vec![comp(1, 39)]), rules);
        assert_eq!(g.eval_size().unwrap(), 1 << 40);
        assert!(matches!(g.eval(), Err(GrammarError::Budget)));
    }

    #[test]
    fn prune_removes_unreachable() {
        let mut rules = BTreeMap::new();
        rules.insert(comp(1, 0), (inp(0), inp(1)));
        rules.insert(comp(1, 9), (inp(2), inp(3))); // unreachable
        let g = Grammar::new(SymbolString::from_vec(vec![comp(1, 0)]), rules);
        let p = g.prune();
        assert_eq!(p.rules.len(), 1);
        assert_eq!(p.eval().unwrap(), g.eval().unwrap());
        assert_eq!(p.prune(), p);
    }

    #[test]
    fn prune_keeps_repeat_bases() {
        let mut rules = BTreeMap::new();
        rules.insert(comp(1, 0), (inp(0), inp(1)));
        let g = Grammar::new(
            SymbolString::from_vec(vec![SymbolId::repeat_of(comp(1, 0), 2)]),
            rules,
        );
        let p = g.prune();
        assert_eq!(p.rules.len(), 1);
        assert_eq!(p.eval().unwrap(), vec![0, 1, 0, 1]);
    }

    fn random_grammar(rng: &mut ChaCha20Rng) -> Grammar {
        // Random layered grammar with repeats, evaluating to < 300 symbols.
        let mut rules = BTreeMap::new();
        let mut pool: Vec<SymbolId> = (0..4).map(inp).collect();
        let levels = rng.gen_range(1..4u8);
        let mut next_v = 0u64;
        for l in 1..=levels {
            let count = rng.gen_range(1..4);
            for _ in 0..count {
                let a = pool[rng.gen_range(0..pool.len())];
                let b = pool[rng.gen_range(0..pool.len())];
                let c = comp(l, next_v);
                next_v += 1;
                rules.insert(c, (a, b));
                pool.push(c);
                if rng.gen_bool(0.3) {
                    let base = pool[rng.gen_range(0..pool.len())];
                    if !matches!(base, SymbolId::Repeat(..)) {
                        pool.push(SymbolId::repeat_of(base, rng.gen_range(2..5)));
                    }
                }
            }
        }
        let start_len = rng.gen_range(1..4);
        let start: Vec<SymbolId> = (0..start_len)
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .collect();
        let g = Grammar::new(SymbolString::from_vec(start), rules).prune();
        if g.eval_size().unwrap_or(u64::MAX) > 300 {
            Grammar::literal(&[0, 1, 2])
        } else {
            g
        }
    }

    #[test]
    fn eval_size_matches_eval_on_fuzzed() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..500 {
            let g = random_grammar(&mut rng);
            assert_eq!(g.eval_size().unwrap() as usize, g.eval().unwrap().len());
        }
    }

    #[test]
    fn suffix_identity_and_empty() {
        let mut rng = ChaCha20Rng::seed_from_u64(78);
        for _ in 0..200 {
            let g = random_grammar(&mut rng);
            let size = g.eval_size().unwrap();
            assert_eq!(g.suffix(1).unwrap().eval().unwrap(), g.eval().unwrap());
            assert!(g.suffix(size + 1).unwrap().eval().unwrap().is_empty());
            assert!(g.suffix(size + 2).is_err());
            assert!(g.suffix(0).is_err());
        }
    }

    #[test]
    fn suffix_matches_slice() {
        let mut rng = ChaCha20Rng::seed_from_u64(79);
        for _ in 0..500 {
            let g = random_grammar(&mut rng);
            let e = g.eval().unwrap();
            if e.is_empty() {
                continue;
            }
            let m = rng.gen_range(1..=e.len() as u64 + 1);
            let s = g.suffix(m).unwrap();
            assert_eq!(s.eval().unwrap(), e[(m - 1) as usize..].to_vec());
        }
    }

    #[test]
    fn suffix_composes() {
        let mut rng = ChaCha20Rng::seed_from_u64(80);
        for _ in 0..200 {
            let g = random_grammar(&mut rng);
            let e = g.eval().unwrap();
            if e.len() < 3 {
                continue;
            }
            let m1 = rng.gen_range(1..=e.len() as u64 / 2);
            let g1 = g.suffix(m1).unwrap();
            let rem = g1.eval_size().unwrap();
            let m2 = rng.gen_range(1..=rem + 1);
            let g2 = g1.suffix(m2).unwrap();
            assert_eq!(g2.eval().unwrap(), e[(m1 + m2 - 2) as usize..].to_vec());
        }
    }

    #[test]
    fn pair_ed_examples() {
        let gx = Grammar::literal(&[0, 1, 2]);
        let gy = Grammar::literal(&[0, 1, 3]);
        assert_eq!(grammar_pair_ed(&gx, &gx, 0, 1 << 20).unwrap(), Some(0));
        assert_eq!(grammar_pair_ed(&gx, &gy, 3, 1 << 20).unwrap(), Some(1));
        let gz = Grammar::literal(&[4, 4, 4, 4, 4, 4]);
        assert_eq!(grammar_pair_ed(&gx, &gz, 2, 1 << 20).unwrap(), None);
    }

    #[test]
    fn pair_ed_matches_dp_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(81);
        for _ in 0..1000 {
            let gx = random_grammar(&mut rng);
            let gy = random_grammar(&mut rng);
            let ex = gx.eval().unwrap();
            let ey = gy.eval().unwrap();
            let d = oracle::edit_distance_dp(&ex, &ey);
            let cutoff = rng.gen_range(0..20);
            let got = grammar_pair_ed(&gx, &gy, cutoff, 1 << 20).unwrap();
            if d <= cutoff {
                assert_eq!(got, Some(d));
            } else {
                assert_eq!(got, None);
            }
        }
    }

    #[test]
    fn combine_concatenates() {
        let a = Grammar::literal(&[1, 2]);
        let b = Grammar::literal(&[3]);
        let c = combine(&[&a, &b]).unwrap();
        assert_eq!(c.eval().unwrap(), vec![1, 2, 3]);
    }
}
