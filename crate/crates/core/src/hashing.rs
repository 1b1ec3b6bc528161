//! Randomness for the pipeline: pair-wise independent hash families over
//! symbol pairs, the iterated splitting predicate, per-level compression
//! hashes, the Karp-Rabin fingerprint, and the bundle that packages all of
//! them for reproducible sharing between parties.

use crate::field::{mul127, P127};
use crate::params::Params;
use crate::symbol::{ord, SymbolId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::io::{self, Read, Write};
use thiserror::Error;

/// Affine hash over symbol pairs: ((a1*u + a2*v + b) mod q) mod m, with
/// q = 2^127 - 1. Drawing all three coefficients uniformly makes the family
/// pair-wise independent on pairs; the final `mod m` adds a bias of at most
/// m/q, which is negligible for every range used here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairwiseHash {
    pub a1: u128,
    pub a2: u128,
    pub b: u128,
    pub range: u128,
}

impl PairwiseHash {
    pub fn generate(rng: &mut ChaCha20Rng, range: u128) -> Self {
        debug_assert!(range >= 1);
        PairwiseHash {
            a1: draw_u128(rng) % P127,
            a2: draw_u128(rng) % P127,
            b: draw_u128(rng) % P127,
            range,
        }
    }

    #[inline]
    pub fn eval(&self, u: u128, v: u128) -> u128 {
        debug_assert!(u < P127 && v < P127);
        let t = mul127(self.a1, u);
        let t = (t + mul127(self.a2, v)) % P127;
        let t = (t + self.b) % P127;
        t % self.range
    }
}

fn draw_u128(rng: &mut ChaCha20Rng) -> u128 {
    ((rng.gen::<u64>() as u128) << 64) | rng.gen::<u64>() as u128
}

/// The block-boundary predicate: zero iff any of the component hashes maps
/// the pair to zero. Each component has range `components * split_inverse`,
/// so a fixed pair is a boundary with probability between 1/2D and 1/D.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitHash {
    pub components: Vec<PairwiseHash>,
}

impl SplitHash {
    pub fn generate(rng: &mut ChaCha20Rng, params: &Params) -> Self {
        let count = params.split_components;
        let range = count as u128 * params.split_inverse as u128;
        SplitHash {
            components: (0..count).map(|_| PairwiseHash::generate(rng, range.max(1))).collect(),
        }
    }

    pub fn is_zero_ord(&self, u: u128, v: u128) -> bool {
        self.components.iter().any(|h| h.eval(u, v) == 0)
    }
}

/// Splitting predicate on symbol pairs.
pub fn split_is_zero(params: &Params, h: &SplitHash, a: SymbolId, b: SymbolId) -> bool {
    h.is_zero_ord(ord(params, a), ord(params, b))
}

/// Per-level pair compression: a pair of symbols maps to a level-tagged
/// compression symbol with value below n^4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionHash {
    pub level: u8,
    pub hash: PairwiseHash,
}

impl CompressionHash {
    pub fn generate(rng: &mut ChaCha20Rng, params: &Params, level: u8) -> Self {
        CompressionHash {
            level,
            hash: PairwiseHash::generate(rng, params.comp_value_range()),
        }
    }
}

pub fn compress_pair(params: &Params, c: &CompressionHash, a: SymbolId, b: SymbolId) -> SymbolId {
    let v = c.hash.eval(ord(params, a), ord(params, b));
    SymbolId::Comp(c.level, v as u64)
}

/// Karp-Rabin fingerprint of bit strings, mapped into {1..N}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KrFingerprint {
    /// Prime in (N, 2N].
    pub q: u64,
    /// Random evaluation point in {1..q-1}.
    pub z: u64,
    /// Output range N.
    pub range: u64,
}

impl KrFingerprint {
    pub fn generate(rng: &mut ChaCha20Rng, range: u64) -> Self {
        let q = next_prime(range.max(2));
        debug_assert!(q > range && (range == 1 || q <= 2 * range));
        let z = rng.gen_range(1..q);
        KrFingerprint { q, z, range }
    }

    /// (sum_i b_i z^i mod q) mod N + 1, with i starting at 1; the empty
    /// string maps to 1.
    pub fn hash_bits(&self, bits: impl Iterator<Item = bool>) -> u64 {
        let mut acc: u64 = 0;
        let q = self.q as u128;
        let mut zpow = self.z as u128;
        for b in bits {
            if b {
                acc = ((acc as u128 + zpow) % q) as u64;
            }
            zpow = zpow * self.z as u128 % q;
        }
        acc % self.range + 1
    }
}

fn mulmod64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powmod64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod64(acc, base, m);
        }
        base = mulmod64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, valid for all 64-bit integers.
fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mulmod64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly greater than `n`. By Bertrand's postulate it lies
/// in (n, 2n], which is exactly the range the fingerprint needs.
fn next_prime(n: u64) -> u64 {
    let mut c = n + 1;
    loop {
        if is_prime(c) {
            return c;
        }
        c += 1;
    }
}

/// All shared randomness: the splitting hashes H_0..H_L, the compression
/// hashes C_1..C_L, the fingerprint key, and the Hamming-sketch evaluation
/// points. Fully determined by (params, seed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomnessBundle {
    pub seed: u64,
    pub splits: Vec<SplitHash>,
    pub compressions: Vec<CompressionHash>,
    pub kr: KrFingerprint,
    /// Position-locator base for the Hamming sketch, nonzero mod p.
    pub ham_omega: u64,
    /// Verification evaluation point for the Hamming sketch, nonzero mod p.
    pub ham_theta: u64,
    pub digest: u64,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic or truncated bundle file")]
    BadFormat,
    #[error("unsupported bundle version {0}")]
    BadVersion(u32),
    #[error("bundle was generated for different parameters")]
    ParamsMismatch,
}

pub const BUNDLE_MAGIC: &[u8; 4] = b"LCSB";
pub const BUNDLE_VERSION: u32 = 1;

pub fn bundle_generate(params: &Params, seed: u64) -> RandomnessBundle {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let splits = (0..=params.level_count)
        .map(|_| SplitHash::generate(&mut rng, params))
        .collect();
    let compressions = (1..=params.level_count)
        .map(|l| CompressionHash::generate(&mut rng, params, l as u8))
        .collect();
    let kr = KrFingerprint::generate(&mut rng, params.fingerprint_range);
    let ham_omega = rng.gen_range(1..params.p);
    let ham_theta = rng.gen_range(1..params.p);
    let mut bundle = RandomnessBundle {
        seed,
        splits,
        compressions,
        kr,
        ham_omega,
        ham_theta,
        digest: 0,
    };
    bundle.digest = bundle.compute_digest();
    bundle
}

impl RandomnessBundle {
    pub fn split_hash(&self, level: u32) -> &SplitHash {
        &self.splits[level as usize]
    }

    pub fn compression_hash(&self, level: u8) -> &CompressionHash {
        &self.compressions[level as usize - 1]
    }

    fn payload_words(&self) -> Vec<u64> {
        let mut w = Vec::new();
        w.push(self.seed);
        w.push(self.splits.len() as u64);
        for s in &self.splits {
            w.push(s.components.len() as u64);
            for h in &s.components {
                push_u128(&mut w, h.a1);
                push_u128(&mut w, h.a2);
                push_u128(&mut w, h.b);
                push_u128(&mut w, h.range);
            }
        }
        w.push(self.compressions.len() as u64);
        for c in &self.compressions {
            w.push(c.level as u64);
            push_u128(&mut w, c.hash.a1);
            push_u128(&mut w, c.hash.a2);
            push_u128(&mut w, c.hash.b);
            push_u128(&mut w, c.hash.range);
        }
        w.push(self.kr.q);
        w.push(self.kr.z);
        w.push(self.kr.range);
        w.push(self.ham_omega);
        w.push(self.ham_theta);
        w
    }

    fn compute_digest(&self) -> u64 {
        let words = self.payload_words();
        self.kr.hash_bits(words.iter().flat_map(|w| (0..64).map(move |i| (w >> i) & 1 == 1)))
    }

    pub fn write_to(&self, params: &Params, mut out: impl Write) -> Result<(), BundleError> {
        out.write_all(BUNDLE_MAGIC)?;
        out.write_all(&BUNDLE_VERSION.to_le_bytes())?;
        for v in [
            params.n,
            params.k,
            params.sigma_size,
            params.level_count as u64,
            params.c_d.num,
            params.c_d.den,
            params.c_s.num,
            params.c_s.den,
            match params.profile {
                crate::params::Profile::Paper => 0,
                crate::params::Profile::Desk => 1,
            },
            self.digest,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        let words = self.payload_words();
        out.write_all(&(words.len() as u64).to_le_bytes())?;
        for w in words {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(params: &Params, mut input: impl Read) -> Result<RandomnessBundle, BundleError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != BUNDLE_MAGIC {
            return Err(BundleError::BadFormat);
        }
        let version = read_u32(&mut input)?;
        if version != BUNDLE_VERSION {
            return Err(BundleError::BadVersion(version));
        }
        let mut header = [0u64; 10];
        for h in header.iter_mut() {
            *h = read_u64(&mut input)?;
        }
        let profile_ok = match params.profile {
            crate::params::Profile::Paper => header[8] == 0,
            crate::params::Profile::Desk => header[8] == 1,
        };
        if header[0] != params.n
            || header[1] != params.k
            || header[2] != params.sigma_size
            || header[3] != params.level_count as u64
            || header[4] != params.c_d.num
            || header[5] != params.c_d.den
            || header[6] != params.c_s.num
            || header[7] != params.c_s.den
            || !profile_ok
        {
            return Err(BundleError::ParamsMismatch);
        }
        let word_count = read_u64(&mut input)? as usize;
        let mut words = Vec::with_capacity(word_count);
        for _ in 0..word_count {
            words.push(read_u64(&mut input)?);
        }
        let bundle = Self::from_payload_words(&words).ok_or(BundleError::BadFormat)?;
        if bundle.digest != header[9] || bundle.compute_digest() != bundle.digest {
            return Err(BundleError::BadFormat);
        }
        Ok(bundle)
    }

    fn from_payload_words(words: &[u64]) -> Option<RandomnessBundle> {
        let take = |cursor: &mut usize| -> Option<u64> {
            let v = words.get(*cursor).copied();
            *cursor += 1;
            v
        };
        let take_u128 = |cursor: &mut usize| -> Option<u128> {
            let lo = words.get(*cursor).copied()?;
            let hi = words.get(*cursor + 1).copied()?;
            *cursor += 2;
            Some((hi as u128) << 64 | lo as u128)
        };
        let mut cursor_state = 0usize;
        let seed = take(&mut cursor_state)?;
        let split_count = take(&mut cursor_state)? as usize;
        let mut splits = Vec::with_capacity(split_count);
        for _ in 0..split_count {
            let comp_count = take(&mut cursor_state)? as usize;
            let mut components = Vec::with_capacity(comp_count);
            for _ in 0..comp_count {
                let a1 = take_u128(&mut cursor_state)?;
                let a2 = take_u128(&mut cursor_state)?;
                let b = take_u128(&mut cursor_state)?;
                let range = take_u128(&mut cursor_state)?;
                components.push(PairwiseHash { a1, a2, b, range });
            }
            splits.push(SplitHash { components });
        }
        let comp_hash_count = take(&mut cursor_state)? as usize;
        let mut compressions = Vec::with_capacity(comp_hash_count);
        for _ in 0..comp_hash_count {
            let level = take(&mut cursor_state)? as u8;
            let a1 = take_u128(&mut cursor_state)?;
            let a2 = take_u128(&mut cursor_state)?;
            let b = take_u128(&mut cursor_state)?;
            let range = take_u128(&mut cursor_state)?;
            compressions.push(CompressionHash {
                level,
                hash: PairwiseHash { a1, a2, b, range },
            });
        }
        let q = take(&mut cursor_state)?;
        let z = take(&mut cursor_state)?;
        let range = take(&mut cursor_state)?;
        let ham_omega = take(&mut cursor_state)?;
        let ham_theta = take(&mut cursor_state)?;
        if cursor_state != words.len() {
            return None;
        }
        let mut bundle = RandomnessBundle {
            seed,
            splits,
            compressions,
            kr: KrFingerprint { q, z, range },
            ham_omega,
            ham_theta,
            digest: 0,
        };
        bundle.digest = bundle.compute_digest();
        Some(bundle)
    }
}

fn push_u128(w: &mut Vec<u64>, v: u128) {
    w.push(v as u64);
    w.push((v >> 64) as u64);
}

fn read_u32(mut r: impl Read) -> Result<u32, io::Error> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(mut r: impl Read) -> Result<u64, io::Error> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
