//! Exact truncated Laurent series over arbitrary-size integers.
//!
//! A series carries its window explicitly: coefficients c_v, ..., c_{N-1} are known and
//! everything from q^N on is unknown. Arithmetic keeps the tightest window derivable
//! from the operands, so callers can plan input windows backwards.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::arith::PrimeLevel;
use crate::Error;

/// Σ_{n=v}^{N-1} c_n qⁿ + O(q^N).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedLaurentSeries {
    valuation: i64,
    coeffs: Vec<BigInt>,
}

/// Sparse series with small coefficients, as (exponent, coefficient) pairs with
/// exponents ≥ 0 in increasing order.
pub type SparseTerms = Vec<(usize, i64)>;

impl TruncatedLaurentSeries {
    /// Series with coefficients starting at q^`valuation`. The window order is
    /// `valuation + coeffs.len()`.
    pub fn new(valuation: i64, coeffs: Vec<BigInt>) -> Result<Self, Error> {
        if coeffs.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let mut s = TruncatedLaurentSeries { valuation, coeffs };
        s.normalize();
        Ok(s)
    }

    pub fn from_i64(valuation: i64, coeffs: &[i64]) -> Result<Self, Error> {
        Self::new(valuation, coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    /// 1 + O(q^order).
    pub fn one(order: i64) -> Self {
        Self::monomial(0, BigInt::one(), order)
    }

    /// c·q^exp + O(q^order), order > exp.
    pub fn monomial(exp: i64, c: BigInt, order: i64) -> Self {
        assert!(order > exp, "monomial needs order > exponent");
        let mut coeffs = vec![BigInt::zero(); (order - exp) as usize];
        coeffs[0] = c;
        TruncatedLaurentSeries {
            valuation: exp,
            coeffs,
        }
        .normalized()
    }

    fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    fn normalize(&mut self) {
        let lead = self.coeffs.iter().position(|c| !c.is_zero());
        if let Some(k) = lead {
            if k > 0 {
                self.coeffs.drain(..k);
                self.valuation += k as i64;
            }
        }
    }

    #[inline]
    pub fn valuation(&self) -> i64 {
        self.valuation
    }

    /// Truncation order N: the series is known modulo q^N.
    #[inline]
    pub fn order(&self) -> i64 {
        self.valuation + self.coeffs.len() as i64
    }

    /// Number of known coefficients, N - v.
    #[inline]
    pub fn window_len(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficients c_v, ..., c_{N-1}.
    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    /// Coefficient of qⁿ, or `None` when n is beyond the window.
    pub fn coeff(&self, n: i64) -> Option<BigInt> {
        if n >= self.order() {
            None
        } else if n < self.valuation {
            Some(BigInt::zero())
        } else {
            Some(self.coeffs[(n - self.valuation) as usize].clone())
        }
    }

    pub fn leading(&self) -> &BigInt {
        &self.coeffs[0]
    }

    /// Drops everything from q^order on. `order` must not exceed the current order.
    pub fn truncate(&self, order: i64) -> Result<Self, Error> {
        if order > self.order() {
            return Err(Error::InsufficientWindow {
                needed: order,
                have: self.order(),
            });
        }
        if order <= self.valuation {
            return Err(Error::EmptyWindow);
        }
        Ok(TruncatedLaurentSeries {
            valuation: self.valuation,
            coeffs: self.coeffs[..(order - self.valuation) as usize].to_vec(),
        })
    }

    /// Multiplication by q^k.
    pub fn shift(&self, k: i64) -> Self {
        TruncatedLaurentSeries {
            valuation: self.valuation + k,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn scale(&self, c: &BigInt) -> Self {
        TruncatedLaurentSeries {
            valuation: self.valuation,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
        .normalized()
    }

    fn combine(&self, other: &Self, negate_other: bool) -> Self {
        let order = self.order().min(other.order());
        let val = self.valuation.min(other.valuation);
        let mut coeffs = vec![BigInt::zero(); (order - val) as usize];
        for (i, c) in self.coeffs.iter().enumerate() {
            let n = self.valuation + i as i64;
            if n >= order {
                break;
            }
            coeffs[(n - val) as usize] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            let n = other.valuation + i as i64;
            if n >= order {
                break;
            }
            if negate_other {
                coeffs[(n - val) as usize] -= c;
            } else {
                coeffs[(n - val) as usize] += c;
            }
        }
        TruncatedLaurentSeries {
            valuation: val,
            coeffs,
        }
        .normalized()
    }

    /// Cauchy product; the window is O(q^min(N1 + v2, N2 + v1)).
    pub fn mul(&self, other: &Self) -> Self {
        let len = self.coeffs.len().min(other.coeffs.len());
        let mut coeffs = vec![BigInt::zero(); len];
        for (i, a) in self.coeffs.iter().enumerate().take(len) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate().take(len - i) {
                coeffs[i + j] += a * b;
            }
        }
        TruncatedLaurentSeries {
            valuation: self.valuation + other.valuation,
            coeffs,
        }
        .normalized()
    }

    /// Multiplicative inverse. The leading coefficient must be ±1.
    pub fn inv(&self) -> Result<Self, Error> {
        let lead = self.leading();
        if !lead.abs().is_one() {
            return Err(Error::NonUnitLeading);
        }
        let len = self.coeffs.len();
        let mut r: Vec<BigInt> = Vec::with_capacity(len);
        r.push(lead.clone());
        for n in 1..len {
            let mut acc = BigInt::zero();
            for k in 1..=n {
                let u = &self.coeffs[k];
                if !u.is_zero() {
                    acc += u * &r[n - k];
                }
            }
            // r[n] = -lead⁻¹ · acc, and lead⁻¹ = lead for a unit.
            r.push(-(acc * lead));
        }
        Ok(TruncatedLaurentSeries {
            valuation: -self.valuation,
            coeffs: r,
        })
    }

    /// sᵉ by binary powering; negative exponents need a unit leading coefficient.
    pub fn pow(&self, e: i64) -> Result<Self, Error> {
        if e < 0 {
            return self.pow(-e)?.inv();
        }
        let mut result = Self::one(self.coeffs.len() as i64);
        let mut base = self.clone();
        let mut e = e as u64;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        Ok(result)
    }

    /// Product with a sparse series whose constant term is nonzero. The window length
    /// is unchanged.
    pub fn mul_sparse(&self, sparse: &[(usize, i64)]) -> Self {
        let mut coeffs = self.coeffs.clone();
        mul_sparse_in_place(&mut coeffs, sparse);
        TruncatedLaurentSeries {
            valuation: self.valuation,
            coeffs,
        }
        .normalized()
    }

    /// Quotient by a sparse series with constant term ±1.
    pub fn div_sparse(&self, sparse: &[(usize, i64)]) -> Result<Self, Error> {
        let mut coeffs = self.coeffs.clone();
        div_sparse_in_place(&mut coeffs, sparse)?;
        Ok(TruncatedLaurentSeries {
            valuation: self.valuation,
            coeffs,
        }
        .normalized())
    }
}

impl Add for &TruncatedLaurentSeries {
    type Output = TruncatedLaurentSeries;
    fn add(self, rhs: Self) -> TruncatedLaurentSeries {
        self.combine(rhs, false)
    }
}

impl Sub for &TruncatedLaurentSeries {
    type Output = TruncatedLaurentSeries;
    fn sub(self, rhs: Self) -> TruncatedLaurentSeries {
        self.combine(rhs, true)
    }
}

impl Mul for &TruncatedLaurentSeries {
    type Output = TruncatedLaurentSeries;
    fn mul(self, rhs: Self) -> TruncatedLaurentSeries {
        TruncatedLaurentSeries::mul(self, rhs)
    }
}

impl Neg for &TruncatedLaurentSeries {
    type Output = TruncatedLaurentSeries;
    fn neg(self) -> TruncatedLaurentSeries {
        TruncatedLaurentSeries {
            valuation: self.valuation,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

fn mul_sparse_in_place(coeffs: &mut [BigInt], sparse: &[(usize, i64)]) {
    let (e0, c0) = sparse[0];
    assert!(e0 == 0 && c0 != 0, "sparse factor needs a nonzero constant term");
    for n in (0..coeffs.len()).rev() {
        let mut acc = if c0 == 1 {
            coeffs[n].clone()
        } else {
            &coeffs[n] * c0
        };
        for &(e, c) in &sparse[1..] {
            if e > n {
                break;
            }
            add_small_multiple(&mut acc, &coeffs[n - e], c);
        }
        coeffs[n] = acc;
    }
}

fn div_sparse_in_place(coeffs: &mut [BigInt], sparse: &[(usize, i64)]) -> Result<(), Error> {
    let (e0, c0) = sparse[0];
    if e0 != 0 || (c0 != 1 && c0 != -1) {
        return Err(Error::NonUnitLeading);
    }
    for n in 0..coeffs.len() {
        let mut acc = core::mem::take(&mut coeffs[n]);
        for &(e, c) in &sparse[1..] {
            if e > n {
                break;
            }
            add_small_multiple(&mut acc, &coeffs[n - e], -c);
        }
        coeffs[n] = if c0 == 1 { acc } else { -acc };
    }
    Ok(())
}

#[inline]
fn add_small_multiple(acc: &mut BigInt, x: &BigInt, c: i64) {
    match c {
        0 => {}
        1 => *acc += x,
        -1 => *acc -= x,
        _ => *acc += x * c,
    }
}

/// Sparse terms of ∏_{n≥1}(1 - q^(step·n)) below q^len, from the pentagonal number
/// theorem: Σ_k (-1)^k q^(step·k(3k-1)/2) over k ∈ ℤ.
pub fn euler_sparse(len: usize, step: usize) -> SparseTerms {
    let mut terms = vec![(0usize, 1i64)];
    let mut k: usize = 1;
    loop {
        let sign = if k % 2 == 1 { -1 } else { 1 };
        let g1 = step * (k * (3 * k - 1) / 2);
        let g2 = step * (k * (3 * k + 1) / 2);
        if g1 >= len {
            break;
        }
        terms.push((g1, sign));
        if g2 < len {
            terms.push((g2, sign));
        }
        k += 1;
    }
    terms
}

/// ∏_{n≥1}(1 - qⁿ) + O(q^N): the eta series without its q^(1/24) prefactor.
pub fn euler_product(n: usize) -> TruncatedLaurentSeries {
    assert!(n >= 1);
    let mut coeffs = vec![BigInt::zero(); n];
    for (e, c) in euler_sparse(n, 1) {
        coeffs[e] = BigInt::from(c);
    }
    TruncatedLaurentSeries {
        valuation: 0,
        coeffs,
    }
}

/// Dense coefficients of ∏(1-q^n)^num_exp · ∏(1-q^(pn))^(-den_exp) below q^len, with the
/// roles of the two products swapped when `reciprocal` is set.
fn eta_ratio(level: PrimeLevel, len: usize, reciprocal: bool) -> Vec<BigInt> {
    let p = level.p() as usize;
    let e = level.eta_exponent();
    let plain = euler_sparse(len, 1);
    let scaled = euler_sparse(len, p);
    let (top, bottom) = if reciprocal {
        (&scaled, &plain)
    } else {
        (&plain, &scaled)
    };
    let mut coeffs = vec![BigInt::zero(); len];
    coeffs[0] = BigInt::one();
    for _ in 0..e {
        mul_sparse_in_place(&mut coeffs, top);
    }
    for _ in 0..e {
        div_sparse_in_place(&mut coeffs, bottom).expect("euler product has unit constant term");
    }
    coeffs
}

/// f_p = (η(τ)/η(pτ))^(24/(p-1)) = q⁻¹ ∏(1-qⁿ)ᵉ ∏(1-q^(pn))⁻ᵉ + O(q^N).
pub fn eta_quotient_f(level: PrimeLevel, n: i64) -> TruncatedLaurentSeries {
    assert!(n >= 1);
    TruncatedLaurentSeries {
        valuation: -1,
        coeffs: eta_ratio(level, (n + 1) as usize, false),
    }
}

/// 1/f_p = q ∏(1-q^(pn))ᵉ ∏(1-qⁿ)⁻ᵉ + O(q^N), computed directly through sparse
/// division rather than by inverting a dense series.
pub fn eta_quotient_f_reciprocal(level: PrimeLevel, n: i64) -> TruncatedLaurentSeries {
    assert!(n >= 2);
    TruncatedLaurentSeries {
        valuation: 1,
        coeffs: eta_ratio(level, (n - 1) as usize, true),
    }
}
