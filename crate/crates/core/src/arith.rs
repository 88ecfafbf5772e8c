//! Elementary exact number theory shared by the other modules.

use alloc::vec::Vec;
use core::fmt;

use crate::Error;

/// A prime level p with p - 1 dividing 24, so that the Hauptmodul of Γ₀(p)* is built
/// from the single eta quotient (η(τ)/η(pτ))^(24/(p-1)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrimeLevel(u64);

impl PrimeLevel {
    pub const SUPPORTED: [u64; 5] = [2, 3, 5, 7, 13];

    /// Primes of the genus-zero list whose Hauptmodul is not a single eta quotient.
    pub const OUT_OF_SCOPE: [u64; 10] = [11, 17, 19, 23, 29, 31, 41, 47, 59, 71];

    pub fn new(p: u64) -> Result<Self, Error> {
        if Self::SUPPORTED.contains(&p) {
            Ok(PrimeLevel(p))
        } else {
            Err(Error::UnsupportedLevel(p))
        }
    }

    pub fn all() -> [PrimeLevel; 5] {
        Self::SUPPORTED.map(PrimeLevel)
    }

    #[inline]
    pub fn p(self) -> u64 {
        self.0
    }

    /// 24/(p-1).
    #[inline]
    pub fn eta_exponent(self) -> u64 {
        24 / (self.0 - 1)
    }

    /// p^(12/(p-1)), the constant in f_p(-1/(pτ)) = p^(12/(p-1)) / f_p(τ).
    #[inline]
    pub fn fricke_const(self) -> u64 {
        self.0.pow((12 / (self.0 - 1)) as u32)
    }
}

impl fmt::Display for PrimeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Kronecker symbol (a/n), with the usual extension to n = 0, n < 0 and even n.
pub fn kronecker(a: i64, n: i64) -> i32 {
    let mut a = a as i128;
    let mut n = n as i128;
    if n == 0 {
        return if a == 1 || a == -1 { 1 } else { 0 };
    }
    let mut result = 1;
    if n < 0 {
        n = -n;
        if a < 0 {
            result = -1;
        }
    }
    let twos = n.trailing_zeros();
    if twos > 0 {
        if a % 2 == 0 {
            return 0;
        }
        n >>= twos;
        if twos % 2 == 1 {
            let r = a.rem_euclid(8);
            if r == 3 || r == 5 {
                result = -result;
            }
        }
    }
    // Jacobi symbol (a/n), n odd positive.
    a = a.rem_euclid(n);
    while a != 0 {
        let z = a.trailing_zeros();
        a >>= z;
        if z % 2 == 1 {
            let r = n % 8;
            if r == 3 || r == 5 {
                result = -result;
            }
        }
        if a % 4 == 3 && n % 4 == 3 {
            result = -result;
        }
        core::mem::swap(&mut a, &mut n);
        a %= n;
    }
    if n == 1 {
        result
    } else {
        0
    }
}

/// All residues β mod 2p with β² ≡ -d (mod 4p), in increasing order.
pub fn sqrt_classes(d: u64, level: PrimeLevel) -> Vec<u64> {
    let p = level.p();
    let m = 4 * p;
    let target = (m - d % m) % m;
    (0..2 * p).filter(|&b| (b * b) % m == target).collect()
}

/// True iff d ≥ 1 and -d is a square mod 4p.
pub fn is_admissible(d: i64, level: PrimeLevel) -> bool {
    d >= 1 && !sqrt_classes(d as u64, level).is_empty()
}

/// True iff D ≥ 1 and D is a square mod 4p (the weight 1/2 plus-space support).
pub fn is_square_class(n: i64, level: PrimeLevel) -> bool {
    if n < 1 {
        return false;
    }
    let m = 4 * level.p();
    let r = n as u64 % m;
    (0..2 * level.p()).any(|b| (b * b) % m == r)
}

/// True iff the odd prime `ell` splits in Q(√-d).
pub fn splits(ell: u64, d: u64) -> bool {
    kronecker(-(d as i64), ell as i64) == 1
}

/// Trial-division primality test.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut k = 3u64;
    while k.saturating_mul(k) <= n {
        if n % k == 0 {
            return false;
        }
        k += 2;
    }
    true
}

pub fn mobius(mut n: u64) -> i32 {
    assert!(n >= 1);
    let mut result = 1;
    let mut k = 2u64;
    while k * k <= n {
        if n % k == 0 {
            n /= k;
            if n % k == 0 {
                return 0;
            }
            result = -result;
        }
        k += 1;
    }
    if n > 1 {
        -result
    } else {
        result
    }
}

pub fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut k = 1u64;
    while k * k <= n {
        if n % k == 0 {
            small.push(k);
            if k * k != n {
                large.push(n / k);
            }
        }
        k += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Integer square root, rounded down.
pub fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = libm_sqrt(n as f64) as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Exact square root when `n` is a perfect square.
pub fn exact_sqrt(n: u64) -> Option<u64> {
    let r = isqrt(n as u128) as u64;
    (r * r == n).then_some(r)
}

fn libm_sqrt(x: f64) -> f64 {
    num_traits::Float::sqrt(x)
}

/// Extended Euclid: returns (g, s, t) with s·a + t·b = g = gcd(a, b) ≥ 0.
pub fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i128, 0i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

pub fn gcd(a: i128, b: i128) -> i128 {
    ext_gcd(a, b).0
}

/// `n / k` when k divides n.
#[inline]
pub fn div_exact(n: u64, k: u64) -> Option<u64> {
    (n % k == 0).then(|| n / k)
}
