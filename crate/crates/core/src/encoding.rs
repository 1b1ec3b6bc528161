//! Fixed-width grammar encodings for the Hamming sketch.
//!
//! A grammar is serialized as sorted rule records of three `field_bits`-wide
//! fields each, zero-padded to exactly `enc_len` bits, and then lifted to a
//! string of `enc_len` symbols over {1..2N}: every 0-bit becomes the
//! grammar's fingerprint h, every 1-bit becomes N + h. Two distinct grammars
//! therefore differ in every symbol unless their fingerprints collide.

use crate::grammar::Grammar;
use crate::hashing::{KrFingerprint, RandomnessBundle};
use crate::params::Params;
use crate::symbol::{in_alphabet, ord, symbol_from_ord, SymbolId, SymbolString};
use std::collections::BTreeMap;

/// Bit string with MSB-first field packing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitBuf {
    bits: Vec<bool>,
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push_bit(&mut self, b: bool) {
        self.bits.push(b);
    }

    pub fn push_field(&mut self, value: u128, width: u32) {
        debug_assert!(width == 128 || value < (1u128 << width));
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    pub fn read_field(&self, offset: usize, width: u32) -> u128 {
        let mut v = 0u128;
        for i in 0..width as usize {
            v = (v << 1) | self.bits[offset + i] as u128;
        }
        v
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn pad_to(&mut self, len: usize) {
        debug_assert!(self.bits.len() <= len);
        self.bits.resize(len, false);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }
}

/// The bit-level encoding, or the oversize marker for grammars that do not
/// fit the fixed record budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BinEncoding {
    Bits(BitBuf),
    Oversize,
}

/// Symbol string over {1..2N} of length exactly `enc_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedGrammar(pub Vec<u64>);

fn all_ones(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

fn record_tuples(g: &Grammar, params: &Params) -> Option<Vec<(u128, u128, u128)>> {
    let w = params.field_bits;
    let ones = all_ones(w);
    let mut records = Vec::with_capacity(g.rules.len() + 1);
    for (lhs, (a, b)) in &g.rules {
        records.push((ord(params, *lhs), ord(params, *a), ord(params, *b)));
    }
    for (base, count) in g.repeat_symbols() {
        let rep = SymbolId::Repeat(base, count);
        records.push((ord(params, rep), ord(params, base.into()), count as u128));
    }
    let start = g.start.as_slice();
    if start.is_empty() || start.len() > 2 {
        return None;
    }
    let f1 = ord(params, start[0]);
    let f2 = if start.len() == 2 {
        ord(params, start[1])
    } else {
        ones
    };
    records.push((ones, f1, f2));
    // Ordinals are below |Gamma| < 2^(w-1), so only the start marker may
    // equal all-ones in the leading field.
    if records.iter().any(|r| r.1 > ones || r.2 > ones) {
        return None;
    }
    records.sort_unstable();
    Some(records)
}

/// Encode the grammar's rules as sorted fixed-width records, zero-padded to
/// `enc_len` bits; grammars larger than the size bound (or otherwise
/// unpackable) yield `Oversize`.
pub fn bin_encode(g: &Grammar, params: &Params) -> BinEncoding {
    if g.size() > params.max_grammar_size {
        return BinEncoding::Oversize;
    }
    let records = match record_tuples(g, params) {
        Some(r) => r,
        None => return BinEncoding::Oversize,
    };
    let w = params.field_bits;
    let mut buf = BitBuf::new();
    for (a, b, c) in records {
        buf.push_field(a, w);
        buf.push_field(b, w);
        buf.push_field(c, w);
    }
    if buf.len() as u64 > params.enc_len {
        return BinEncoding::Oversize;
    }
    buf.pad_to(params.enc_len as usize);
    BinEncoding::Bits(buf)
}

fn lift(bits: &BitBuf, h: u64, range: u64) -> EncodedGrammar {
    EncodedGrammar(bits.iter().map(|b| if b { range + h } else { h }).collect())
}

fn oversize_sentinel(params: &Params) -> EncodedGrammar {
    EncodedGrammar(vec![1; params.enc_len as usize])
}

/// Fingerprint-lifted encoding: symbol i is h for a 0-bit and N+h for a
/// 1-bit, where h fingerprints the whole bit string. Oversize grammars
/// encode as the all-ones sentinel.
pub fn enc(g: &Grammar, bundle: &RandomnessBundle, params: &Params) -> EncodedGrammar {
    match bin_encode(g, params) {
        BinEncoding::Oversize => oversize_sentinel(params),
        BinEncoding::Bits(bits) => {
            let h = bundle.kr.hash_bits(bits.iter());
            lift(&bits, h, bundle.kr.range)
        }
    }
}

/// Bits contributed by one grammar to a context fingerprint; oversize
/// members contribute all-ones.
fn context_bits(g: &Grammar, params: &Params) -> BitBuf {
    match bin_encode(g, params) {
        BinEncoding::Bits(b) => b,
        BinEncoding::Oversize => {
            let mut b = BitBuf::new();
            for _ in 0..params.enc_len {
                b.push_bit(true);
            }
            b
        }
    }
}

/// Like [`enc`] but the fingerprint covers the concatenated encodings of a
/// whole context window (which includes `g` itself), so a change in any
/// neighbor re-keys every symbol of this encoding.
pub fn enc_with_context(
    g: &Grammar,
    context: &[&Grammar],
    bundle: &RandomnessBundle,
    params: &Params,
) -> EncodedGrammar {
    let bits = match bin_encode(g, params) {
        BinEncoding::Oversize => return oversize_sentinel(params),
        BinEncoding::Bits(b) => b,
    };
    let h = context_fingerprint(context, bundle, params);
    lift(&bits, h, bundle.kr.range)
}

pub fn context_fingerprint(
    context: &[&Grammar],
    bundle: &RandomnessBundle,
    params: &Params,
) -> u64 {
    let ctx: Vec<BitBuf> = context.iter().map(|c| context_bits(c, params)).collect();
    bundle.kr.hash_bits(ctx.iter().flat_map(|b| b.iter()))
}

/// Inverse of [`enc`]: recover the grammar from a full window of `enc_len`
/// symbols, or `None` when the window is the oversize sentinel or fails any
/// consistency check (mixed fingerprints, fingerprint/bit mismatch,
/// malformed or out-of-order records, nonzero padding).
pub fn decode_enc(symbols: &[u64], kr: &KrFingerprint, params: &Params) -> Option<Grammar> {
    if symbols.len() as u64 != params.enc_len {
        return None;
    }
    if symbols.iter().all(|&v| v == 1) {
        return None; // oversize sentinel
    }
    let n_range = kr.range;
    let first = symbols[0];
    if first == 0 || first > 2 * n_range {
        return None;
    }
    let h = (first - 1) % n_range + 1;
    let mut bits = BitBuf::new();
    for &v in symbols {
        if v == h {
            bits.push_bit(false);
        } else if v == n_range + h {
            bits.push_bit(true);
        } else {
            return None;
        }
    }
    if kr.hash_bits(bits.iter()) != h {
        return None;
    }
    parse_records(&bits, params)
}

/// Decode symbols against an externally supplied fingerprint (the context
/// variant of [`decode_enc`]); the caller verifies the fingerprint.
pub fn decode_bits_only(symbols: &[u64], n_range: u64, params: &Params) -> Option<(Grammar, u64)> {
    if symbols.len() as u64 != params.enc_len {
        return None;
    }
    if symbols.iter().all(|&v| v == 1) {
        return None;
    }
    let first = symbols[0];
    if first == 0 || first > 2 * n_range {
        return None;
    }
    let h = (first - 1) % n_range + 1;
    let mut bits = BitBuf::new();
    for &v in symbols {
        if v == h {
            bits.push_bit(false);
        } else if v == n_range + h {
            bits.push_bit(true);
        } else {
            return None;
        }
    }
    parse_records(&bits, params).map(|g| (g, h))
}

fn parse_records(bits: &BitBuf, params: &Params) -> Option<Grammar> {
    let w = params.field_bits;
    let ones = all_ones(w);
    let rec_bits = 3 * w as usize;
    let mut rules: BTreeMap<SymbolId, (SymbolId, SymbolId)> = BTreeMap::new();
    let mut listed_repeats: Vec<SymbolId> = Vec::new();
    let mut start: Option<SymbolString> = None;
    let mut offset = 0usize;
    let mut prev_rec: Option<(u128, u128, u128)> = None;
    while offset + rec_bits <= bits.len() {
        let f0 = bits.read_field(offset, w);
        let f1 = bits.read_field(offset + w as usize, w);
        let f2 = bits.read_field(offset + 2 * w as usize, w);
        offset += rec_bits;
        if let Some(p) = prev_rec {
            if p >= (f0, f1, f2) {
                return None; // canonical order violated
            }
        }
        prev_rec = Some((f0, f1, f2));
        if f0 == ones {
            let s1 = symbol_from_ord(params, f1).ok()?;
            if !in_alphabet(params, s1) {
                return None;
            }
            let mut s = SymbolString::from_vec(vec![s1]);
            if f2 != ones {
                let s2 = symbol_from_ord(params, f2).ok()?;
                if !in_alphabet(params, s2) {
                    return None;
                }
                s.push(s2);
            }
            start = Some(s);
            break;
        }
        let lhs = symbol_from_ord(params, f0).ok()?;
        if !in_alphabet(params, lhs) {
            return None;
        }
        match lhs {
            SymbolId::Comp(..) => {
                let a = symbol_from_ord(params, f1).ok()?;
                let b = symbol_from_ord(params, f2).ok()?;
                if !in_alphabet(params, a) || !in_alphabet(params, b) {
                    return None;
                }
                rules.insert(lhs, (a, b));
            }
            SymbolId::Repeat(base, count) => {
                let a = symbol_from_ord(params, f1).ok()?;
                if SymbolId::from(base) != a || count as u128 != f2 {
                    return None; // repeat record inconsistent with its symbol
                }
                listed_repeats.push(lhs);
            }
            SymbolId::Input(_) => return None,
        }
    }
    let start = start?;
    for i in offset..bits.len() {
        if bits.get(i) {
            return None; // nonzero padding
        }
    }
    let g = Grammar::new(start, rules);
    // A canonical encoding lists exactly the repeat symbols that occur.
    let mut expected: Vec<SymbolId> = g
        .repeat_symbols()
        .into_iter()
        .map(|(b, c)| SymbolId::Repeat(b, c))
        .collect();
    expected.sort();
    listed_repeats.sort();
    if listed_repeats != expected {
        return None;
    }
    Some(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::decompose;
    use crate::hashing::bundle_generate;
    use crate::oracle;
    use crate::symbol::BaseSymbol;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (Params, RandomnessBundle) {
        // Small n keeps enc_len manageable; the grammar-size bound is large
        // enough that no decomposed grammar of a length-64 string trips it.
        let mut p = Params::desk(64, 2, 16).unwrap();
        p.max_grammar_size = 256;
        p.enc_len = 3 * p.max_grammar_size * p.field_bits as u64;
        let b = bundle_generate(&p, 21);
        (p, b)
    }

    #[test]
    fn bin_encode_single_rule_layout() {
        let (p, _) = setup();
        let g = Grammar::literal(&[5]);
        let bits = match bin_encode(&g, &p) {
            BinEncoding::Bits(x) => x,
            BinEncoding::Oversize => panic!("unexpected oversize"),
        };
        assert_eq!(bits.len() as u64, p.enc_len);
        let w = p.field_bits;
        assert_eq!(bits.read_field(0, w), all_ones(w));
        assert_eq!(bits.read_field(w as usize, w), 5);
        assert_eq!(bits.read_field(2 * w as usize, w), all_ones(w));
        for i in 3 * w as usize..bits.len() {
            assert!(!bits.get(i));
        }
        assert_eq!(bin_encode(&g, &p), bin_encode(&g, &p));
    }

    #[test]
    fn oversize_when_too_many_rules() {
        let (mut p, _) = setup();
        p.max_grammar_size = 3;
        // 2 pair rules + 1 start + 1 repeat = size 4 > 3.
        let mut rules = BTreeMap::new();
        rules.insert(SymbolId::Comp(1, 0), (SymbolId::Input(0), SymbolId::Input(1)));
        rules.insert(SymbolId::Comp(1, 1), (SymbolId::Comp(1, 0), SymbolId::Input(2)));
        let g = Grammar::new(
            SymbolString::from_vec(vec![
                SymbolId::Comp(1, 1),
                SymbolId::Repeat(BaseSymbol::Input(3), 4),
            ]),
            rules,
        );
        assert_eq!(g.size(), 4);
        assert_eq!(bin_encode(&g, &p), BinEncoding::Oversize);
    }

    #[test]
    fn enc_symbol_range_and_identity() {
        let (p, b) = setup();
        let g = Grammar::literal(&[1, 2]);
        let e = enc(&g, &b, &p);
        assert_eq!(e.0.len() as u64, p.enc_len);
        assert!(e.0.iter().all(|&v| (1..=2 * b.kr.range).contains(&v)));
        assert_eq!(enc(&g, &b, &p), e);
    }

    #[test]
    fn distinct_grammars_differ_everywhere_for_most_keys() {
        // Fingerprint collisions happen with probability about 2*enc_len/N,
        // so the range must comfortably exceed the encoding length.
        let mut p = Params::desk(512, 2, 16).unwrap();
        p.max_grammar_size = 40;
        p.enc_len = 3 * p.max_grammar_size * p.field_bits as u64;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut bad_keys = 0u32;
        let trials = 300;
        for seed in 0..trials {
            let b = bundle_generate(&p, 1000 + seed);
            let len = rng.gen_range(1..3);
            let x: Vec<u32> = (0..len).map(|_| rng.gen_range(0..16)).collect();
            let mut y = x.clone();
            y[0] = (y[0] + 1) % 16;
            let ex = enc(&Grammar::literal(&x), &b, &p);
            let ey = enc(&Grammar::literal(&y), &b, &p);
            let ham = ex.0.iter().zip(ey.0.iter()).filter(|(a, c)| a != c).count();
            if ham != ex.0.len() {
                bad_keys += 1;
            }
        }
        assert!(
            bad_keys as f64 / trials as f64 <= 0.01,
            "bad keys: {bad_keys}/{trials}"
        );
    }

    #[test]
    fn decode_roundtrip_on_decomposed_grammars() {
        let (p, b) = setup();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut checked = 0;
        for _ in 0..300 {
            let len = rng.gen_range(1..=64);
            let codes = oracle::run_heavy_string(&mut rng, len, 16);
            let gs = decompose(&codes, &b, &p).unwrap();
            for g in gs {
                if g.size() > p.max_grammar_size {
                    continue;
                }
                let e = enc(&g, &b, &p);
                match decode_enc(&e.0, &b.kr, &p) {
                    Some(back) => assert_eq!(back, g),
                    None => panic!("round-trip failed for {g:?}"),
                }
                checked += 1;
            }
        }
        assert!(checked >= 300, "only {checked} grammars exercised");
    }

    #[test]
    fn sentinel_and_corruption_are_undecodable() {
        let (p, b) = setup();
        assert_eq!(decode_enc(&vec![1; p.enc_len as usize], &b.kr, &p), None);

        let g = Grammar::literal(&[1, 2]);
        let mut e = enc(&g, &b, &p);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..50 {
            let i = rng.gen_range(0..e.0.len());
            let old = e.0[i];
            e.0[i] = old ^ 3; // any perturbation breaks h-consistency
            assert_eq!(decode_enc(&e.0, &b.kr, &p), None);
            e.0[i] = old;
        }
        assert!(decode_enc(&e.0, &b.kr, &p).is_some());
    }

    #[test]
    fn context_changes_rekey_everything() {
        let (p, b) = setup();
        let g = Grammar::literal(&[1, 2]);
        let n1 = Grammar::literal(&[3]);
        let n2 = Grammar::literal(&[4]);
        let e1 = enc_with_context(&g, &[&n1, &g], &b, &p);
        let e1b = enc_with_context(&g, &[&n1, &g], &b, &p);
        assert_eq!(e1, e1b);
        let e2 = enc_with_context(&g, &[&n2, &g], &b, &p);
        let differing = e1.0.iter().zip(e2.0.iter()).filter(|(a, c)| a != c).count();
        assert_eq!(differing, e1.0.len(), "neighbor change must re-key all symbols");
    }

    #[test]
    fn oversize_with_context_is_sentinel() {
        let (mut p, b) = setup();
        p.max_grammar_size = 1;
        let ctx = Grammar::literal(&[1, 2]);
        let mut rules = BTreeMap::new();
        rules.insert(SymbolId::Comp(1, 0), (SymbolId::Input(0), SymbolId::Input(1)));
        let g2 = Grammar::new(SymbolString::from_vec(vec![SymbolId::Comp(1, 0)]), rules);
        assert_eq!(
            enc_with_context(&g2, &[&ctx, &g2], &b, &p),
            EncodedGrammar(vec![1; p.enc_len as usize])
        );
    }
}
