//! Static edit-distance sketch: decompose the string, encode every grammar
//! into a fixed-width window, and sketch the concatenated windows with the
//! k-mismatch Hamming sketch (capacity k * enc_len).
//!
//! Comparing two sketches recovers the mismatch windows, decodes the
//! differing grammar pairs on both sides, and sums their edit distances
//! under a running cutoff of k.

use crate::decomposition::{decompose, DecomposeError};
use crate::encoding::{decode_enc, enc};
use crate::grammar::{grammar_pair_ed, Grammar};
use crate::hamming::{HamCompare, HamError, HamSketch};
use crate::hashing::RandomnessBundle;
use crate::params::Params;
use thiserror::Error;

/// Field-operation budget for building one sketch; the estimated cost is
/// checked up front so an over-budget build fails immediately instead of
/// grinding.
pub const DEFAULT_BUILD_BUDGET: u64 = 4_000_000_000;

/// Work budget for one comparison, counted in dynamic-program cells.
pub const DEFAULT_COMPARE_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SketchError {
    #[error("sketches were built with different randomness bundles")]
    BundleMismatch,
    #[error("sketches carry different copy counts")]
    CopyCountMismatch,
    #[error(
        "building this sketch needs about {est} field operations, over the budget of {budget}"
    )]
    BuildBudget { est: u64, budget: u64 },
    #[error(transparent)]
    Ham(#[from] HamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdOutcome {
    Distance(u64),
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdSketch {
    /// Number of grammars the string decomposed into.
    pub grammar_count: u64,
    /// Set when the decomposition failed and the trivial one-grammar-per-
    /// symbol fallback was sketched instead; comparisons then report
    /// infinity.
    pub decomposition_failed: bool,
    pub bundle_digest: u64,
    pub ham: HamSketch,
}

/// Build the sketch of `x`. A failed decomposition is recorded in the flag
/// and replaced by the trivial one-grammar-per-symbol decomposition so the
/// sketch object still exists; comparisons involving it return infinity.
pub fn ed_sketch(
    x: &[u32],
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<EdSketch, SketchError> {
    ed_sketch_budgeted(x, bundle, params, DEFAULT_BUILD_BUDGET)
}

pub fn ed_sketch_budgeted(
    x: &[u32],
    bundle: &RandomnessBundle,
    params: &Params,
    budget: u64,
) -> Result<EdSketch, SketchError> {
    let cap = params.k.saturating_mul(params.enc_len);
    let (grammars, failed) = match decompose(x, bundle, params) {
        Ok(gs) => (gs, false),
        Err(DecomposeError::InputTooLong | DecomposeError::InputSymbolOutOfRange(_)) => {
            (x.iter().map(|&c| Grammar::literal(&[c])).collect(), true)
        }
        Err(_) => (x.iter().map(|&c| Grammar::literal(&[c])).collect(), true),
    };
    let est = (grammars.len() as u64)
        .saturating_mul(params.enc_len)
        .saturating_mul(2 * cap + 2);
    if est > budget {
        return Err(SketchError::BuildBudget { est, budget });
    }
    let mut ham = HamSketch::new(params, cap, bundle)?;
    for g in &grammars {
        let e = enc(g, bundle, params);
        for &v in &e.0 {
            ham.append(v)?;
        }
    }
    Ok(EdSketch {
        grammar_count: grammars.len() as u64,
        decomposition_failed: failed,
        bundle_digest: bundle.digest,
        ham,
    })
}

/// Exact edit distance when it is at most k and every probabilistic step
/// succeeded; infinity otherwise. Symmetric in its arguments.
pub fn ed_compare(
    a: &EdSketch,
    b: &EdSketch,
    bundle: &RandomnessBundle,
    params: &Params,
) -> Result<EdOutcome, SketchError> {
    if a.bundle_digest != b.bundle_digest || a.bundle_digest != bundle.digest {
        return Err(SketchError::BundleMismatch);
    }
    if a.decomposition_failed || b.decomposition_failed {
        return Ok(EdOutcome::Infinite);
    }
    if a.grammar_count != b.grammar_count {
        return Ok(EdOutcome::Infinite);
    }
    let mismatches = match HamSketch::compare(&a.ham, &b.ham)? {
        HamCompare::TooMany => return Ok(EdOutcome::Infinite),
        HamCompare::Mismatches(m) => m,
    };
    if mismatches.is_empty() {
        return Ok(EdOutcome::Distance(0));
    }
    let m = params.enc_len;
    // Group by encoding window; a differing grammar pair differs in every
    // position of its window, so partial windows signal a fingerprint
    // collision and the comparison is unreliable.
    let mut blocks: std::collections::BTreeMap<u64, Vec<&crate::hamming::Mismatch>> =
        Default::default();
    for mm in &mismatches {
        blocks.entry((mm.pos - 1) / m).or_default().push(mm);
    }
    let mut total: u64 = 0;
    let mut work_left = DEFAULT_COMPARE_BUDGET;
    for (block, mms) in blocks {
        if mms.len() as u64 != m {
            return Ok(EdOutcome::Infinite);
        }
        let mut xsyms = vec![0u64; m as usize];
        let mut ysyms = vec![0u64; m as usize];
        for mm in mms {
            let off = (mm.pos - 1 - block * m) as usize;
            xsyms[off] = mm.x;
            ysyms[off] = mm.y;
        }
        let gx = match decode_enc(&xsyms, &bundle.kr, params) {
            Some(g) => g,
            None => return Ok(EdOutcome::Infinite),
        };
        let gy = match decode_enc(&ysyms, &bundle.kr, params) {
            Some(g) => g,
            None => return Ok(EdOutcome::Infinite),
        };
        let cutoff = (params.k - total) as usize;
        let lx = gx.eval_size().unwrap_or(u64::MAX);
        let ly = gy.eval_size().unwrap_or(u64::MAX);
        let step_cost = lx.saturating_add(ly).saturating_mul(2 * cutoff as u64 + 1);
        if step_cost > work_left {
            return Ok(EdOutcome::Infinite);
        }
        work_left -= step_cost;
        match grammar_pair_ed(&gx, &gy, cutoff, 1 << 28) {
            Ok(Some(d)) => total += d as u64,
            // Over cutoff, undecodable garbage, or an eval failure all mean
            // the sketch cannot certify a distance.
            Ok(None) | Err(_) => return Ok(EdOutcome::Infinite),
        }
        if total > params.k {
            return Ok(EdOutcome::Infinite);
        }
    }
    Ok(EdOutcome::Distance(total))
}

/// Independent sketch copies under distinct bundles.
pub fn ed_sketch_amplified(
    x: &[u32],
    bundles: &[RandomnessBundle],
    params: &Params,
) -> Result<Vec<EdSketch>, SketchError> {
    bundles.iter().map(|b| ed_sketch(x, b, params)).collect()
}

/// Majority vote across copies; ties (including an even split) come out as
/// infinity.
pub fn ed_compare_majority(
    xs: &[EdSketch],
    ys: &[EdSketch],
    bundles: &[RandomnessBundle],
    params: &Params,
) -> Result<EdOutcome, SketchError> {
    if xs.len() != ys.len() || xs.len() != bundles.len() || xs.is_empty() {
        return Err(SketchError::CopyCountMismatch);
    }
    let mut counts: std::collections::BTreeMap<Option<u64>, usize> = Default::default();
    for ((a, b), bundle) in xs.iter().zip(ys.iter()).zip(bundles.iter()) {
        let key = match ed_compare(a, b, bundle, params)? {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::bundle_generate;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Bench-scale parameters: strings up to 12 symbols, distances up to 2.
    /// The grammar-size bound is tightened so the encoding stays small.
    fn toy_params(k: u64) -> Params {
        let mut p = Params::desk(24, k, 8).unwrap();
        p.max_grammar_size = 28;
        p.enc_len = 3 * p.max_grammar_size * p.field_bits as u64;
        p
    }

    #[test]
    fn identical_strings_distance_zero() {
        let p = toy_params(1);
        let b = bundle_generate(&p, 1);
        let x: Vec<u32> = vec![1, 2, 3, 4, 5, 1, 2, 3];
        let sa = ed_sketch(&x, &b, &p).unwrap();
        let sb = ed_sketch(&x, &b, &p).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(ed_compare(&sa, &sb, &b, &p).unwrap(), EdOutcome::Distance(0));
    }

    #[test]
    fn empty_string_sketch() {
        let p = toy_params(1);
        let b = bundle_generate(&p, 2);
        let s = ed_sketch(&[], &b, &p).unwrap();
        assert_eq!(s.grammar_count, 0);
        assert_eq!(
            ed_compare(&s, &s.clone(), &b, &p).unwrap(),
            EdOutcome::Distance(0)
        );
    }

    #[test]
    fn single_substitution_statistics() {
        // Per-trial success must clear 2/3 by a wide margin at this scale;
        // every finite answer must be exact.
        let p = toy_params(1);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let trials = 24;
        let mut good = 0;
        for seed in 0..trials {
            let b = bundle_generate(&p, 100 + seed);
            let x = oracle::random_string(&mut rng, 12, 8);
            let mut y = x.clone();
            let pos = rng.gen_range(0..x.len());
            y[pos] = (y[pos] + 1 + rng.gen_range(0..6)) % 8;
            let sx = ed_sketch(&x, &b, &p).unwrap();
            let sy = ed_sketch(&y, &b, &p).unwrap();
            match ed_compare(&sx, &sy, &b, &p).unwrap() {
                EdOutcome::Distance(d) => {
                    assert_eq!(d as usize, oracle::edit_distance_dp(&x, &y), "seed {seed}");
                    good += 1;
                }
                EdOutcome::Infinite => {}
            }
        }
        assert!(good * 3 >= trials * 2, "only {good}/{trials} exact");
    }

    #[test]
    fn over_distance_reports_infinite() {
        let p = toy_params(1);
        let b = bundle_generate(&p, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = oracle::random_string(&mut rng, 12, 8);
            let y = oracle::random_string(&mut rng, 24, 8);
            if oracle::edit_distance_dp(&x, &y) <= 1 {
                continue;
            }
            let sx = ed_sketch(&x, &b, &p).unwrap();
            let sy = ed_sketch(&y, &b, &p).unwrap();
            assert_eq!(ed_compare(&sx, &sy, &b, &p).unwrap(), EdOutcome::Infinite);
        }
    }

    #[test]
    fn two_edit_pairs_exact_or_infinite() {
        let p = toy_params(2);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let mut finite = 0;
        let trials = 8;
        for seed in 0..trials {
            let b = bundle_generate(&p, 300 + seed);
            let x = oracle::random_string(&mut rng, 10, 8);
            let (y, _) = oracle::random_edits(&x, 2, 8, &mut rng);
            let d_true = oracle::edit_distance_dp(&x, &y);
            let sx = ed_sketch(&x, &b, &p).unwrap();
            let sy = ed_sketch(&y, &b, &p).unwrap();
            match ed_compare(&sx, &sy, &b, &p).unwrap() {
                EdOutcome::Distance(d) => {
                    assert_eq!(d as usize, d_true, "seed {seed}");
                    finite += 1;
                }
                EdOutcome::Infinite => assert!(d_true > 0, "seed {seed}: missed equal strings"),
            }
        }
        assert!(finite * 3 >= trials * 2, "only {finite}/{trials} finite");
    }

    #[test]
    fn symmetry() {
        let p = toy_params(1);
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for seed in 0..10 {
            let b = bundle_generate(&p, 500 + seed);
            let x = oracle::random_string(&mut rng, 10, 8);
            let mut y = x.clone();
            let pos = rng.gen_range(0..x.len());
            y[pos] ^= 1;
            let sx = ed_sketch(&x, &b, &p).unwrap();
            let sy = ed_sketch(&y, &b, &p).unwrap();
            assert_eq!(
                ed_compare(&sx, &sy, &b, &p).unwrap(),
                ed_compare(&sy, &sx, &b, &p).unwrap()
            );
        }
    }

    #[test]
    fn bundle_mismatch_is_hard_error() {
        let p = toy_params(1);
        let b1 = bundle_generate(&p, 1);
        let b2 = bundle_generate(&p, 2);
        let s1 = ed_sketch(&[1, 2, 3], &b1, &p).unwrap();
        let s2 = ed_sketch(&[1, 2, 3], &b2, &p).unwrap();
        assert!(matches!(
            ed_compare(&s1, &s2, &b1, &p),
            Err(SketchError::BundleMismatch)
        ));
    }

    #[test]
    fn majority_vote() {
        let p = toy_params(1);
        let bundles: Vec<_> = (0..3).map(|i| bundle_generate(&p, 900 + i)).collect();
        let x: Vec<u32> = vec![1, 2, 3, 4, 5, 6, 7, 0, 1, 2];
        let mut y = x.clone();
        y[4] = 0;
        let xs = ed_sketch_amplified(&x, &bundles, &p).unwrap();
        let ys = ed_sketch_amplified(&y, &bundles, &p).unwrap();
        assert_eq!(
            ed_compare_majority(&xs, &ys, &bundles, &p).unwrap(),
            EdOutcome::Distance(1)
        );
        // Single-copy list behaves like a plain comparison.
        assert_eq!(
            ed_compare_majority(&xs[..1], &ys[..1], &bundles[..1], &p).unwrap(),
            ed_compare(&xs[0], &ys[0], &bundles[0], &p).unwrap()
        );
        assert!(matches!(
            ed_compare_majority(&xs[..2], &ys[..1], &bundles[..1], &p),
            Err(SketchError::CopyCountMismatch)
        ));
    }

    #[test]
    fn build_budget_refuses_upfront() {
        let p = toy_params(1);
        let b = bundle_generate(&p, 7);
        match ed_sketch_budgeted(&[1, 2, 3], &b, &p, 10) {
            Err(SketchError::BuildBudget { est, budget: 10 }) => assert!(est > 10),
            other => panic!("expected budget refusal, got {other:?}"),
        }
    }

    #[test]
    fn decomposition_failure_is_flagged_and_infinite() {
        let mut p = toy_params(1);
        let b = bundle_generate(&p, 8);
        // Zero dictionary bound forces a decomposition failure.
        p.split_inverse = 0;
        let x = oracle::random_string(&mut ChaCha20Rng::seed_from_u64(14), 12, 8);
        let s = ed_sketch(&x, &b, &p).unwrap();
        assert!(s.decomposition_failed);
        let t = ed_sketch(&x, &b, &p).unwrap();
        assert_eq!(ed_compare(&s, &t, &b, &p).unwrap(), EdOutcome::Infinite);
    }
}
