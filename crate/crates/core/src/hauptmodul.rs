//! The Hauptmodul j_p* = q⁻¹ + O(q) of Γ₀(p)* and its Faber polynomials.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::arith::PrimeLevel;
use crate::qseries::{eta_quotient_f, eta_quotient_f_reciprocal, TruncatedLaurentSeries};
use crate::Error;

/// Normalized Hauptmodul expansion, known to O(q^N).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hauptmodul {
    level: PrimeLevel,
    series: TruncatedLaurentSeries,
}

impl Hauptmodul {
    /// j_p* = f_p + p^(12/(p-1))/f_p + 24/(p-1), to O(q^order).
    ///
    /// The sum f_p + c/f_p is invariant under the Fricke involution; the additive
    /// constant is read off the computed expansion and checked against 24/(p-1).
    pub fn build(level: PrimeLevel, order: i64) -> Self {
        assert!(order >= 2, "Hauptmodul window must reach q^1");
        let f = eta_quotient_f(level, order);
        let recip = eta_quotient_f_reciprocal(level, order);
        let sum = &f + &recip.scale(&BigInt::from(level.fricke_const()));
        let constant = -sum.coeff(0).expect("window covers q^0");
        assert_eq!(
            constant,
            BigInt::from(level.eta_exponent()),
            "constant term of f_p + c/f_p must be -24/(p-1)"
        );
        let series = &sum + &TruncatedLaurentSeries::monomial(0, constant, order);
        Hauptmodul { level, series }
    }

    pub fn level(&self) -> PrimeLevel {
        self.level
    }

    pub fn series(&self) -> &TruncatedLaurentSeries {
        &self.series
    }

    pub fn order(&self) -> i64 {
        self.series.order()
    }

    /// Coefficient of qⁿ.
    pub fn coeff(&self, n: i64) -> Option<BigInt> {
        self.series.coeff(n)
    }
}

/// j_{p,D} = P_D(j_p*) = q⁻ᴰ + O(q).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaberSeries {
    pub level: PrimeLevel,
    pub index: u64,
    pub series: TruncatedLaurentSeries,
    /// Coefficients of P_D in increasing degree; monic of degree D.
    pub poly: Vec<BigInt>,
}

/// Faber series j_{p,1}, ..., j_{p,D} by greedy cancellation of principal parts.
pub fn faber_family(h: &Hauptmodul, max_index: u64) -> Result<Vec<FaberSeries>, Error> {
    if h.order() <= max_index as i64 {
        return Err(Error::InsufficientWindow {
            needed: max_index as i64 + 1,
            have: h.order(),
        });
    }
    let mut family: Vec<FaberSeries> = Vec::with_capacity(max_index as usize);
    let mut power = h.series().clone();
    for index in 1..=max_index {
        if index > 1 {
            power = &power * h.series();
        }
        let mut series = power.clone();
        let mut poly = vec![BigInt::zero(); index as usize + 1];
        poly[index as usize] = BigInt::one();
        for k in (1 - index as i64)..=0 {
            let c = series.coeff(k).expect("window covers the principal part");
            if c.is_zero() {
                continue;
            }
            if k < 0 {
                let lower = &family[(-k - 1) as usize];
                series = &series - &lower.series.scale(&c);
                for (i, x) in lower.poly.iter().enumerate() {
                    poly[i] -= &c * x;
                }
            } else {
                series = &series - &TruncatedLaurentSeries::monomial(0, c.clone(), series.order());
                poly[0] -= c;
            }
        }
        family.push(FaberSeries {
            level: h.level(),
            index,
            series,
            poly,
        });
    }
    Ok(family)
}

/// The Faber series j_{p,D}. Needs the Hauptmodul window order N > D.
pub fn faber(h: &Hauptmodul, index: u64) -> Result<FaberSeries, Error> {
    assert!(index >= 1);
    let mut family = faber_family(h, index)?;
    Ok(family.pop().expect("nonempty family"))
}

/// Faber polynomials P_0 = 1, P_1, ..., P_max without carrying the full series.
///
/// Only the coefficients of hᴰ at q⁻ᴰ⁺¹, ..., q⁰ matter: on that range every j_{p,k}
/// is the bare monomial q⁻ᵏ, so P_D = Xᴰ - Σ_{k<D} [q⁻ᵏ]hᴰ·P_k - [q⁰]hᴰ.
pub fn faber_polynomials(h: &Hauptmodul, max_index: u64) -> Result<Vec<Vec<BigInt>>, Error> {
    let m = max_index as usize;
    if h.order() < max_index as i64 {
        return Err(Error::InsufficientWindow {
            needed: max_index as i64,
            have: h.order(),
        });
    }
    // u = q·h, so hᴰ = q⁻ᴰ uᴰ and [q^(n-D)]hᴰ = [qⁿ]uᴰ.
    let u: Vec<BigInt> = (0..=m as i64)
        .map(|n| h.coeff(n - 1).unwrap_or_default())
        .collect();
    let mut polys: Vec<Vec<BigInt>> = vec![vec![BigInt::one()]];
    let mut u_pow = vec![BigInt::zero(); m + 1];
    u_pow[0] = BigInt::one();
    for index in 1..=m {
        let mut next = vec![BigInt::zero(); m + 1];
        for (i, a) in u_pow.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in u.iter().enumerate().take(m + 1 - i) {
                if !b.is_zero() {
                    next[i + j] += a * b;
                }
            }
        }
        u_pow = next;
        let mut poly = vec![BigInt::zero(); index + 1];
        poly[index] = BigInt::one();
        for k in 1..index {
            let c = &u_pow[index - k];
            if c.is_zero() {
                continue;
            }
            for (i, x) in polys[k].iter().enumerate() {
                poly[i] -= c * x;
            }
        }
        poly[0] -= &u_pow[index];
        polys.push(poly);
    }
    Ok(polys)
}

/// Indices D for which the q¹ coefficient of j_{p,D} differs from D times the qᴰ
/// coefficient of j_p*. Diagnostic only; an empty result is expected.
pub fn faber_symmetry_defects(h: &Hauptmodul, family: &[FaberSeries]) -> Vec<u64> {
    family
        .iter()
        .filter(|f| {
            let lhs = f.series.coeff(1);
            let rhs = h.coeff(f.index as i64).map(|a| a * BigInt::from(f.index));
            lhs.is_none() || rhs.is_none() || lhs != rhs
        })
        .map(|f| f.index)
        .collect()
}
