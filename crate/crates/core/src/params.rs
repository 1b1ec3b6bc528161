//! Parameter derivation for the decomposition pipeline and the sketches
//! built on top of it.
//!
//! Every quantity is derived deterministically from `(n, k, sigma_size)` and
//! the profile constants, so two parties that agree on those inputs agree on
//! every derived bound.

use crate::field::P61;
use thiserror::Error;

/// Exact positive rational, used for the profile constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub const fn new(num: u64, den: u64) -> Self {
        Ratio { num, den }
    }

    /// ceil(self * x), exact in u128 intermediates.
    pub fn mul_ceil(&self, x: u128) -> u128 {
        let num = self.num as u128;
        let den = self.den as u128;
        (x * num + den - 1) / den
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// The analysis constants: 110 and 15.
    Paper,
    /// Adjustable constants for bench-scale runs, checked statistically.
    Desk,
}

pub const DESK_C_D: Ratio = Ratio::new(4, 1);
pub const DESK_C_S: Ratio = Ratio::new(2, 1);
pub const PAPER_C_D: Ratio = Ratio::new(110, 1);
pub const PAPER_C_S: Ratio = Ratio::new(15, 1);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamsError {
    #[error("k must satisfy 1 <= k <= n (got k={k}, n={n})")]
    BadK { n: u64, k: u64 },
    #[error("alphabet size must satisfy 1 <= sigma <= n^3 (got sigma={sigma}, n={n})")]
    BadSigma { n: u64, sigma: u64 },
    #[error("n must satisfy 1 <= n <= 65536 (got {0})")]
    BadN(u64),
    #[error("profile constant must be a positive rational")]
    BadRatio,
    #[error("derived parameter overflowed a 64-bit integer")]
    Overflow,
}

/// All derived parameters. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Params {
    /// Maximum input string length.
    pub n: u64,
    /// Maximum edit distance the sketches resolve.
    pub k: u64,
    /// Input alphabet size.
    pub sigma_size: u64,
    /// Recursion depth bound: ceil(log_{3/2} n) + 3.
    pub level_count: u32,
    /// Coloring locality: log* |Gamma| + 20.
    pub locality: u32,
    /// Inverse splitting probability.
    pub split_inverse: u64,
    /// Maximum grammar size accepted by the encoder.
    pub max_grammar_size: u64,
    /// Encoded-grammar length in field symbols.
    pub enc_len: u64,
    /// Suffix-change locality: level_count * (3*locality + 6).
    pub suffix_locality: u64,
    /// Fingerprint range.
    pub fingerprint_range: u64,
    /// Sketch field prime.
    pub p: u64,
    /// Working alphabet size |Gamma| = (sigma + L*n^4) * n.
    pub gamma_size: u128,
    /// Bits per encoded rule field: ceil(1 + log2 |Gamma|).
    pub field_bits: u32,
    /// ceil(log2 n); pinned here because several bounds reference it.
    pub log2_n: u32,
    /// Component count of each splitting hash: 5 * ceil(log2 n), min 1.
    pub split_components: u32,
    pub profile: Profile,
    pub c_d: Ratio,
    pub c_s: Ratio,
}

/// Smallest l with (3/2)^l >= n, i.e. ceil(log_{3/2} n), computed exactly.
fn ceil_log_3_2(n: u64) -> u32 {
    let mut l = 0u32;
    let mut pow3: u128 = 1;
    let mut pow2: u128 = 1;
    while pow3 < n as u128 * pow2 {
        l += 1;
        pow3 *= 3;
        pow2 *= 2;
    }
    l
}

/// ceil(log2 v) for v >= 1.
pub fn ceil_log2_u128(v: u128) -> u32 {
    if v <= 1 {
        0
    } else {
        128 - (v - 1).leading_zeros()
    }
}

/// Iterated-logarithm count: how many times log2 must be applied before the
/// value drops to 1 or below.
fn log_star(v: u128) -> u32 {
    let mut x = if v == 0 { 0.0 } else { v as f64 };
    let mut count = 0u32;
    while x > 1.0 {
        x = x.log2();
        count += 1;
    }
    count
}

pub fn derive_params(
    n: u64,
    k: u64,
    sigma_size: u64,
    profile: Profile,
    c_d: Option<Ratio>,
    c_s: Option<Ratio>,
) -> Result<Params, ParamsError> {
    if n == 0 || n > 65536 {
        return Err(ParamsError::BadN(n));
    }
    if k == 0 || k > n {
        return Err(ParamsError::BadK { n, k });
    }
    let n3 = (n as u128).pow(3);
    if sigma_size == 0 || (sigma_size as u128) > n3 {
        return Err(ParamsError::BadSigma { n, sigma: sigma_size });
    }
    let (c_d, c_s) = match profile {
        Profile::Paper => (PAPER_C_D, PAPER_C_S),
        Profile::Desk => (c_d.unwrap_or(DESK_C_D), c_s.unwrap_or(DESK_C_S)),
    };
    if c_d.num == 0 || c_d.den == 0 || c_s.num == 0 || c_s.den == 0 {
        return Err(ParamsError::BadRatio);
    }

    let level_count = ceil_log_3_2(n) + 3;
    let n4 = (n as u128).pow(4);
    let gamma_size = (sigma_size as u128 + level_count as u128 * n4) * n as u128;
    let locality = log_star(gamma_size) + 20;
    let log2_n = ceil_log2_u128(n as u128);

    let d_raw = c_d.mul_ceil(locality as u128 * (level_count as u128 + 1) * k as u128);
    let split_inverse = u64::try_from(d_raw.max(1)).map_err(|_| ParamsError::Overflow)?;

    let s_raw = c_s.mul_ceil(split_inverse as u128 * level_count as u128 * log2_n as u128) + 3;
    let max_grammar_size = u64::try_from(s_raw).map_err(|_| ParamsError::Overflow)?;

    let field_bits = 1 + ceil_log2_u128(gamma_size);
    let enc_len_raw = 3 * s_raw * field_bits as u128;
    let enc_len = u64::try_from(enc_len_raw).map_err(|_| ParamsError::Overflow)?;

    let suffix_locality = level_count as u64 * (3 * locality as u64 + 6);
    let fingerprint_range = u64::try_from(n3).map_err(|_| ParamsError::Overflow)?;
    let p = P61;
    debug_assert!(p as u128 >= 2 * fingerprint_range as u128 + 1);

    Ok(Params {
        n,
        k,
        sigma_size,
        level_count,
        locality,
        split_inverse,
        max_grammar_size,
        enc_len,
        suffix_locality,
        fingerprint_range,
        p,
        gamma_size,
        field_bits,
        log2_n,
        split_components: (5 * log2_n).max(1),
        profile,
        c_d,
        c_s,
    })
}

impl Params {
    /// Desk-profile parameters with the default constants.
    pub fn desk(n: u64, k: u64, sigma_size: u64) -> Result<Params, ParamsError> {
        derive_params(n, k, sigma_size, Profile::Desk, None, None)
    }

    /// Dictionary-size bound per split block: 5 * D * ceil(log2 n).
    pub fn dict_bound(&self) -> u64 {
        5 * self.split_inverse * self.log2_n.max(1) as u64
    }

    /// n^4, the per-level compression-symbol value range.
    pub fn comp_value_range(&self) -> u128 {
        (self.n as u128).pow(4)
    }
}
