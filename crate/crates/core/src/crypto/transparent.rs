//! Discrete-log-known toy pairing over `Z_q`.
//!
//! Source elements are represented by their exponent relative to a fixed base,
//! so `e(a*B1, b*B2)` is the target element with exponent `a*b mod q`. The
//! published generators have exponent 1 in both slots. This suite is an
//! arithmetic oracle for tests and offers no security whatsoever.

use crate::error::{Error, Result};

/// 2^61 - 1, large enough that a few thousand hashed identities never collide.
pub const LARGE_TEST_PRIME: u64 = (1 << 61) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TransparentGroup {
    q: u64,
}

impl TransparentGroup {
    pub fn new(q: u64) -> Result<Self> {
        if q < 5 || !is_prime(q) {
            return Err(Error::InvalidParams(format!("transparent order {q} is not a prime >= 5")));
        }
        Ok(TransparentGroup { q })
    }

    pub fn large() -> Self {
        TransparentGroup { q: LARGE_TEST_PRIME }
    }

    pub fn order(&self) -> u64 {
        self.q
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    pub fn reduce(&self, wide: u128) -> u64 {
        (wide % self.q as u128) as u64
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
