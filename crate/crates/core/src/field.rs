//! Modular arithmetic kernels: the 61-bit Mersenne field used by the
//! Hamming sketch and the 127-bit Mersenne prime backing the pair-wise
//! independent hash families.

/// The sketch field prime, 2^61 - 1.
pub const P61: u64 = (1u64 << 61) - 1;

/// The hash-coefficient prime, 2^127 - 1.
pub const P127: u128 = (1u128 << 127) - 1;

#[inline]
fn reduce61(x: u64) -> u64 {
    // x < 2^62: one fold plus a conditional subtract gives a canonical value.
    let x = (x & P61) + (x >> 61);
    if x >= P61 {
        x - P61
    } else {
        x
    }
}

#[inline]
pub fn add61(a: u64, b: u64) -> u64 {
    reduce61(a + b)
}

#[inline]
pub fn sub61(a: u64, b: u64) -> u64 {
    reduce61(a + P61 - b)
}

#[inline]
pub fn mul61(a: u64, b: u64) -> u64 {
    let t = (a as u128) * (b as u128);
    let lo = (t & P61 as u128) as u64;
    let hi = (t >> 61) as u64;
    reduce61(lo + reduce61(hi))
}

pub fn pow61(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= P61;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul61(acc, base);
        }
        base = mul61(base, base);
        exp >>= 1;
    }
    acc
}

/// Multiplicative inverse in F_{2^61-1}; `a` must be nonzero.
pub fn inv61(a: u64) -> u64 {
    debug_assert!(a % P61 != 0);
    pow61(a, P61 - 2)
}

/// Full 128x128 -> 256-bit product, returned as (low, high) words.
#[inline]
fn mul128_wide(x: u128, y: u128) -> (u128, u128) {
    let (x0, x1) = (x & u64::MAX as u128, x >> 64);
    let (y0, y1) = (y & u64::MAX as u128, y >> 64);
    let (mid, c1) = (x0 * y1).overflowing_add(x1 * y0);
    let (lo, c2) = (x0 * y0).overflowing_add(mid << 64);
    let hi = (x1 * y1)
        .wrapping_add(mid >> 64)
        .wrapping_add(((c1 as u128) << 64) + c2 as u128);
    (lo, hi)
}

#[inline]
fn reduce127(t: u128) -> u128 {
    let t = (t & P127) + (t >> 127);
    if t >= P127 {
        t - P127
    } else {
        t
    }
}

#[inline]
pub fn add127(a: u128, b: u128) -> u128 {
    // a, b < 2^127, so the sum cannot overflow u128.
    reduce127(a + b)
}

/// Product in F_{2^127-1} for canonical inputs (< p).
#[inline]
pub fn mul127(a: u128, b: u128) -> u128 {
    debug_assert!(a < P127 && b < P127);
    let (lo, hi) = mul128_wide(a, b);
    // The product is lo + hi*2^128 and 2^128 = 2 (mod p). Inputs are below
    // 2^127, so hi < 2^126 and hi<<1 still fits in a u128.
    reduce127(reduce127(lo) + reduce127(hi << 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mersenne61_roundtrips() {
        assert_eq!(mul61(P61 - 1, P61 - 1), 1);
        assert_eq!(mul61(inv61(12345), 12345), 1);
        assert_eq!(pow61(3, P61 - 1), 1);
        assert_eq!(add61(P61 - 1, 1), 0);
        assert_eq!(sub61(0, 1), P61 - 1);
    }

    #[test]
    fn mersenne127_small_identities() {
        assert_eq!(mul127(P127 - 1, P127 - 1), 1);
        assert_eq!(mul127(1 << 80, 1 << 40), 1u128 << 120);
        let x = 0x1234_5678_9abc_def0_1122_3344_5566_7788u128 % P127;
        assert_eq!(mul127(x, 1), x);
    }

    /// Shift-and-add modular product; slow but obviously correct.
    fn mul127_schoolbook(mut a: u128, mut b: u128) -> u128 {
        let mut acc = 0u128;
        a %= P127;
        while b > 0 {
            if b & 1 == 1 {
                acc = add127(acc, a);
            }
            a = add127(a, a);
            b >>= 1;
        }
        acc
    }

    #[test]
    fn mersenne127_agrees_with_schoolbook() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            state
        };
        for _ in 0..500 {
            let a = (((next() as u128) << 64) | next() as u128) % P127;
            let b = (((next() as u128) << 64) | next() as u128) % P127;
            assert_eq!(mul127(a, b), mul127_schoolbook(a, b));
        }
    }
}
