//! k-mismatch Hamming sketch over F_{2^61-1} with append, remove-front, and
//! position-shift updates.
//!
//! The sketch of a string w (with live positions i, 1-based and absolute)
//! keeps power sums `A_j = sum_i w[i] * omega^(i*j)` for j = 0..2k'+1,
//! squared-value sums `B_j = sum_i w[i]^2 * omega^(i*j)` for j = 0..k', and
//! one verification evaluation at an independent point theta. Comparing two
//! sketches of equal-length, equal-offset strings recovers the full mismatch
//! information for up to k' positions: Berlekamp-Massey on the A-differences
//! locates the positions, the A-differences give x[i]-y[i], and the
//! B-differences give x[i]^2-y[i]^2, which together pin both values.

use crate::field::{add61, inv61, mul61, pow61, sub61, P61};
use crate::hashing::RandomnessBundle;
use crate::params::Params;
use thiserror::Error;

/// Refuse syndrome vectors above this many field elements (64 MiB).
pub const MAX_SYNDROME_ELEMS: u64 = 1 << 23;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HamError {
    #[error("sketch capacity {0} requires more than the syndrome budget")]
    CapacityTooLarge(u64),
    #[error("append past the maximum sketched length")]
    Full,
    #[error("remove from an empty sketch")]
    Empty,
    #[error("symbol {0} outside the field domain {{1..p-1}}")]
    BadSymbol(u64),
    #[error("sketches carry different randomness and cannot be compared")]
    RandomnessMismatch,
    #[error("sketches have different capacities")]
    CapacityMismatch,
    #[error("sketches cover different position ranges; align them first")]
    Misaligned,
    #[error("shift would move the front before position zero")]
    ShiftUnderflow,
}

/// One recovered mismatch: 1-based position relative to the common front.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mismatch {
    pub pos: u64,
    pub x: u64,
    pub y: u64,
}

/// Result of a sketch comparison: the exact mismatch set, or the signal that
/// it exceeds the capacity (or failed verification).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HamCompare {
    Mismatches(Vec<Mismatch>),
    TooMany,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HamSketch {
    cap: u64,
    max_len: u64,
    omega: u64,
    theta: u64,
    randomness_id: u64,
    offset: u64,
    len: u64,
    /// 2cap+2 power sums; empty until first touched.
    sums: Vec<u64>,
    /// cap+1 squared-value sums; allocated together with `sums`.
    sq_sums: Vec<u64>,
    verif: u64,
}

impl HamSketch {
    /// Empty sketch with capacity for `cap` recoverable mismatches over
    /// strings of up to n * enc_len symbols. The syndrome vectors are
    /// allocated on first use, so an untouched sketch may carry a nominal
    /// capacity far above the allocation budget.
    pub fn new(params: &Params, cap: u64, bundle: &RandomnessBundle) -> Result<Self, HamError> {
        Ok(HamSketch {
            cap,
            max_len: params.n.saturating_mul(params.enc_len).max(params.n),
            omega: bundle.ham_omega,
            theta: bundle.ham_theta,
            randomness_id: bundle.digest,
            offset: 0,
            len: 0,
            sums: Vec::new(),
            sq_sums: Vec::new(),
            verif: 0,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn capacity(&self) -> u64 {
        self.cap
    }

    fn ensure_alloc(&mut self) -> Result<(), HamError> {
        if self.sums.is_empty() {
            if 3 * self.cap + 3 > MAX_SYNDROME_ELEMS {
                return Err(HamError::CapacityTooLarge(self.cap));
            }
            self.sums = vec![0; (2 * self.cap + 2) as usize];
            self.sq_sums = vec![0; (self.cap + 1) as usize];
        }
        Ok(())
    }

    fn check_symbol(&self, v: u64) -> Result<(), HamError> {
        if v == 0 || v >= P61 {
            return Err(HamError::BadSymbol(v));
        }
        Ok(())
    }

    /// Add `v` at the next position after the current back.
    pub fn append(&mut self, v: u64) -> Result<(), HamError> {
        self.check_symbol(v)?;
        if self.len >= self.max_len {
            return Err(HamError::Full);
        }
        let pos = self.offset + self.len + 1;
        self.apply(v, pos, false)?;
        self.len += 1;
        Ok(())
    }

    /// Remove `v` from the front; `v` is trusted to equal the front symbol.
    pub fn remove_front(&mut self, v: u64) -> Result<(), HamError> {
        self.check_symbol(v)?;
        if self.len == 0 {
            return Err(HamError::Empty);
        }
        let pos = self.offset + 1;
        self.apply(v, pos, true)?;
        self.offset += 1;
        self.len -= 1;
        Ok(())
    }

    fn apply(&mut self, v: u64, pos: u64, negate: bool) -> Result<(), HamError> {
        self.ensure_alloc()?;
        let y = pow61(self.omega, pos);
        let mut yj = 1u64;
        let vv = mul61(v, v);
        for j in 0..self.sums.len() {
            let term = mul61(v, yj);
            self.sums[j] = if negate {
                sub61(self.sums[j], term)
            } else {
                add61(self.sums[j], term)
            };
            if j < self.sq_sums.len() {
                let sq_term = mul61(vv, yj);
                self.sq_sums[j] = if negate {
                    sub61(self.sq_sums[j], sq_term)
                } else {
                    add61(self.sq_sums[j], sq_term)
                };
            }
            yj = mul61(yj, y);
        }
        let vt = mul61(v, pow61(self.theta, pos));
        self.verif = if negate {
            sub61(self.verif, vt)
        } else {
            add61(self.verif, vt)
        };
        Ok(())
    }

    /// Re-index the sketched string by `delta` positions (the string itself
    /// is unchanged; all position weights shift).
    pub fn shift(&mut self, delta: i64) -> Result<(), HamError> {
        if delta == 0 {
            return Ok(());
        }
        let new_offset = self
            .offset
            .checked_add_signed(delta)
            .ok_or(HamError::ShiftUnderflow)?;
        if self.len > 0 {
            self.ensure_alloc()?;
            let base = if delta >= 0 {
                pow61(self.omega, delta as u64)
            } else {
                inv61(pow61(self.omega, delta.unsigned_abs()))
            };
            let mut bj = 1u64;
            for j in 0..self.sums.len() {
                self.sums[j] = mul61(self.sums[j], bj);
                if j < self.sq_sums.len() {
                    self.sq_sums[j] = mul61(self.sq_sums[j], bj);
                }
                bj = mul61(bj, base);
            }
            let tbase = if delta >= 0 {
                pow61(self.theta, delta as u64)
            } else {
                inv61(pow61(self.theta, delta.unsigned_abs()))
            };
            self.verif = mul61(self.verif, tbase);
        }
        self.offset = new_offset;
        Ok(())
    }

    /// Sketch of a known symbol sequence starting right after `offset`.
    pub fn of_known(
        values: &[u64],
        offset: u64,
        params: &Params,
        cap: u64,
        bundle: &RandomnessBundle,
    ) -> Result<Self, HamError> {
        let mut sk = HamSketch::new(params, cap, bundle)?;
        sk.offset = offset;
        if values.is_empty() {
            return Ok(sk);
        }
        sk.ensure_alloc()?;
        // Incremental position powers avoid a log-time pow per append.
        let mut ypos = pow61(sk.omega, offset + 1);
        let mut tpos = pow61(sk.theta, offset + 1);
        for &v in values {
            if v == 0 || v >= P61 {
                return Err(HamError::BadSymbol(v));
            }
            let vv = mul61(v, v);
            let mut yj = 1u64;
            for j in 0..sk.sums.len() {
                sk.sums[j] = add61(sk.sums[j], mul61(v, yj));
                if j < sk.sq_sums.len() {
                    sk.sq_sums[j] = add61(sk.sq_sums[j], mul61(vv, yj));
                }
                yj = mul61(yj, ypos);
            }
            sk.verif = add61(sk.verif, mul61(v, tpos));
            sk.len += 1;
            ypos = mul61(ypos, sk.omega);
            tpos = mul61(tpos, sk.theta);
        }
        Ok(sk)
    }

    /// Concatenate two sketches covering adjacent position ranges.
    pub fn concat_disjoint(front: &HamSketch, back: &HamSketch) -> Result<HamSketch, HamError> {
        if front.randomness_id != back.randomness_id {
            return Err(HamError::RandomnessMismatch);
        }
        if front.cap != back.cap {
            return Err(HamError::CapacityMismatch);
        }
        if front.offset + front.len != back.offset {
            return Err(HamError::Misaligned);
        }
        let mut out = front.clone();
        if back.len > 0 {
            out.ensure_alloc()?;
            let back_sums = back.sums_or_zeros();
            let back_sq = back.sq_sums_or_zeros();
            for j in 0..out.sums.len() {
                out.sums[j] = add61(out.sums[j], back_sums[j]);
            }
            for j in 0..out.sq_sums.len() {
                out.sq_sums[j] = add61(out.sq_sums[j], back_sq[j]);
            }
            out.verif = add61(out.verif, back.verif);
        }
        out.len += back.len;
        Ok(out)
    }

    fn sums_or_zeros(&self) -> Vec<u64> {
        if self.sums.is_empty() {
            vec![0; (2 * self.cap + 2) as usize]
        } else {
            self.sums.clone()
        }
    }

    fn sq_sums_or_zeros(&self) -> Vec<u64> {
        if self.sq_sums.is_empty() {
            vec![0; (self.cap + 1) as usize]
        } else {
            self.sq_sums.clone()
        }
    }

    /// Serialized payload: offset, length, capacity, an allocation flag,
    /// then (when allocated) 3cap+4 field elements: A-sums, B-sums, and the
    /// verification element, as little-endian words.
    pub fn payload_words(&self) -> Vec<u64> {
        let mut w = vec![self.offset, self.len, self.cap];
        if self.sums.is_empty() {
            w.push(0);
        } else {
            w.push(1);
            w.extend(self.sums.iter().copied());
            w.extend(self.sq_sums.iter().copied());
            w.push(self.verif);
        }
        w
    }

    pub fn from_payload_words(
        words: &[u64],
        params: &Params,
        bundle: &RandomnessBundle,
    ) -> Option<HamSketch> {
        if words.len() < 4 {
            return None;
        }
        let (offset, len, cap, allocated) = (words[0], words[1], words[2], words[3]);
        let mut sk = HamSketch::new(params, cap, bundle).ok()?;
        sk.offset = offset;
        sk.len = len;
        if allocated == 0 {
            if words.len() != 4 || len != 0 {
                return None;
            }
            return Some(sk);
        }
        let a_len = (2 * cap + 2) as usize;
        let b_len = (cap + 1) as usize;
        if words.len() != 4 + a_len + b_len + 1 {
            return None;
        }
        sk.sums = words[4..4 + a_len].to_vec();
        sk.sq_sums = words[4 + a_len..4 + a_len + b_len].to_vec();
        sk.verif = words[4 + a_len + b_len];
        Some(sk)
    }

    /// Exact mismatch recovery between two sketches of equal-length strings
    /// at the same offset.
    pub fn compare(a: &HamSketch, b: &HamSketch) -> Result<HamCompare, HamError> {
        if a.randomness_id != b.randomness_id {
            return Err(HamError::RandomnessMismatch);
        }
        if a.cap != b.cap {
            return Err(HamError::CapacityMismatch);
        }
        if a.offset != b.offset || a.len != b.len {
            return Err(HamError::Misaligned);
        }
        if a.sums.is_empty() && b.sums.is_empty() {
            return Ok(HamCompare::Mismatches(Vec::new()));
        }
        let asums = a.sums_or_zeros();
        let bsums = b.sums_or_zeros();
        let d: Vec<u64> = asums
            .iter()
            .zip(bsums.iter())
            .map(|(x, y)| sub61(*x, *y))
            .collect();
        let asq = a.sq_sums_or_zeros();
        let bsq = b.sq_sums_or_zeros();
        let dsq: Vec<u64> = asq.iter().zip(bsq.iter()).map(|(x, y)| sub61(*x, *y)).collect();
        let dverif = sub61(a.verif, b.verif);

        if d.iter().all(|&v| v == 0) {
            if dverif != 0 || dsq.iter().any(|&v| v != 0) {
                return Ok(HamCompare::TooMany);
            }
            return Ok(HamCompare::Mismatches(Vec::new()));
        }

        let lambda = berlekamp_massey(&d);
        let t = lambda.len() - 1;
        if t == 0 || t as u64 > a.cap {
            return Ok(HamCompare::TooMany);
        }
        let positions = chien_roots(&lambda, a.omega, a.offset + 1, a.len);
        if positions.len() != t {
            return Ok(HamCompare::TooMany);
        }
        let locators: Vec<u64> = positions.iter().map(|&i| pow61(a.omega, i)).collect();
        let e_vals = solve_power_sums(&lambda, &locators, &d[..t]);
        // Verification: the theta evaluation must match the recovered set.
        let mut check = 0u64;
        for (idx, &i) in positions.iter().enumerate() {
            check = add61(check, mul61(e_vals[idx], pow61(a.theta, i)));
        }
        if check != dverif {
            return Ok(HamCompare::TooMany);
        }
        // Squared-value sums at the same locators.
        let f_vals = solve_power_sums(&lambda, &locators, &dsq[..t]);
        // Residual consistency on the unused squared sums.
        for (j, &target) in dsq.iter().enumerate().skip(t) {
            let mut acc = 0u64;
            for (e, &x) in locators.iter().enumerate() {
                acc = add61(acc, mul61(f_vals[e], pow61(x, j as u64)));
            }
            if acc != target {
                return Ok(HamCompare::TooMany);
            }
        }
        let inv2 = inv61(2);
        let mut out = Vec::with_capacity(t);
        for idx in 0..t {
            let e = e_vals[idx];
            if e == 0 {
                return Ok(HamCompare::TooMany);
            }
            let s = mul61(f_vals[idx], inv61(e)); // x + y
            let x = mul61(add61(s, e), inv2);
            let y = sub61(x, e);
            if x == 0 || y == 0 {
                return Ok(HamCompare::TooMany);
            }
            out.push(Mismatch {
                pos: positions[idx] - a.offset,
                x,
                y,
            });
        }
        Ok(HamCompare::Mismatches(out))
    }
}

/// Minimal LFSR (connection polynomial, constant term 1) generating `s`.
fn berlekamp_massey(s: &[u64]) -> Vec<u64> {
    let mut c = vec![1u64];
    let mut b = vec![1u64];
    let mut l = 0usize;
    let mut m = 1usize;
    let mut bb = 1u64; // discrepancy paired with b
    for n in 0..s.len() {
        let mut d = s[n];
        for i in 1..=l.min(c.len() - 1) {
            d = add61(d, mul61(c[i], s[n - i]));
        }
        if d == 0 {
            m += 1;
        } else if 2 * l <= n {
            let t = c.clone();
            let coef = mul61(d, inv61(bb));
            if c.len() < b.len() + m {
                c.resize(b.len() + m, 0);
            }
            for (i, &bv) in b.iter().enumerate() {
                c[i + m] = sub61(c[i + m], mul61(coef, bv));
            }
            l = n + 1 - l;
            b = t;
            bb = d;
            m = 1;
        } else {
            let coef = mul61(d, inv61(bb));
            if c.len() < b.len() + m {
                c.resize(b.len() + m, 0);
            }
            for (i, &bv) in b.iter().enumerate() {
                c[i + m] = sub61(c[i + m], mul61(coef, bv));
            }
            m += 1;
        }
    }
    c.truncate(l + 1);
    c
}

/// All positions i in [start, start+len) with Lambda(omega^{-i}) = 0,
/// by incremental evaluation.
fn chien_roots(lambda: &[u64], omega: u64, start: u64, len: u64) -> Vec<u64> {
    let t = lambda.len() - 1;
    let omega_inv = inv61(omega);
    // terms[m] = lambda[m] * omega^{-start*m}
    let w0 = pow61(omega_inv, start);
    let mut terms: Vec<u64> = Vec::with_capacity(t + 1);
    let mut wm = 1u64;
    for &coeff in lambda.iter() {
        terms.push(mul61(coeff, wm));
        wm = mul61(wm, w0);
    }
    // step[m] = omega^{-m}
    let mut steps: Vec<u64> = Vec::with_capacity(t + 1);
    let mut sm = 1u64;
    for _ in 0..=t {
        steps.push(sm);
        sm = mul61(sm, omega_inv);
    }
    let mut roots = Vec::new();
    for i in 0..len {
        let mut acc = 0u64;
        for &term in &terms {
            acc = add61(acc, term);
        }
        if acc == 0 {
            roots.push(start + i);
            if roots.len() > t {
                break;
            }
        }
        for (m, term) in terms.iter_mut().enumerate() {
            *term = mul61(*term, steps[m]);
        }
    }
    roots
}

/// Solve sum_e w_e * x_e^j = d_j for j = 0..t-1. `lambda` is the locator
/// polynomial with roots x_e^{-1}; the evaluator-polynomial route gives all
/// weights in O(t^2).
fn solve_power_sums(lambda: &[u64], locators: &[u64], d: &[u64]) -> Vec<u64> {
    let t = locators.len();
    debug_assert_eq!(d.len(), t);
    // Omega(z) = D(z) * Lambda(z) mod z^t
    let mut omega_poly = vec![0u64; t];
    for (j, coef) in omega_poly.iter_mut().enumerate() {
        let mut acc = 0u64;
        for i in 0..=j.min(lambda.len() - 1) {
            acc = add61(acc, mul61(lambda[i], d[j - i]));
        }
        *coef = acc;
    }
    // Lambda'(z)
    let mut dlambda = vec![0u64; lambda.len().saturating_sub(1).max(1)];
    for i in 1..lambda.len() {
        dlambda[i - 1] = mul61(lambda[i], i as u64 % P61);
    }
    let eval = |poly: &[u64], z: u64| -> u64 {
        let mut acc = 0u64;
        for &c in poly.iter().rev() {
            acc = add61(mul61(acc, z), c);
        }
        acc
    };
    locators
        .iter()
        .map(|&x| {
            let zi = inv61(x);
            let num = mul61(x, eval(&omega_poly, zi));
            let den = eval(&dlambda, zi);
            // w_e = -x * Omega(1/x) / Lambda'(1/x)
            sub61(0, mul61(num, inv61(den)))
        })
        .collect()
}
