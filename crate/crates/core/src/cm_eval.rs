//! High-precision evaluation of q-expansions and Faber polynomials at CM points.

use alloc::format;
use alloc::vec::Vec;

use astro_float::{BigFloat, Consts, RoundingMode, Sign, Word};
use num_bigint::{BigInt, Sign as IntSign};
use num_traits::{Float, Zero};

use crate::arith::PrimeLevel;
use crate::qforms::{HeegnerClass, QuadForm};
use crate::qseries::TruncatedLaurentSeries;
use crate::Error;

const RM: RoundingMode = RoundingMode::ToEven;
const GUARD_BITS: f64 = 96.0;
pub const MIN_BITS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionContext {
    pub bits: usize,
    pub terms: usize,
    pub tol: f64,
    pub max_retries: u32,
}

impl Default for PrecisionContext {
    fn default() -> Self {
        PrecisionContext {
            bits: MIN_BITS,
            terms: 32,
            tol: 1e-6,
            max_retries: 4,
        }
    }
}

impl PrecisionContext {
    pub fn validate(&self) -> Result<(), Error> {
        if self.bits < 64 || !(self.tol > 0.0 && self.tol < 0.5) || self.terms == 0 {
            return Err(Error::Float(format!(
                "invalid precision context: bits {} terms {} tol {}",
                self.bits, self.terms, self.tol
            )));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        PrecisionContext {
            bits: self.bits * 2,
            terms: self.terms * 2,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundedValue {
    pub value: BigInt,
    pub residual: f64,
    pub bits_used: usize,
    pub terms_used: usize,
}

#[derive(Debug, Clone)]
pub struct Complex {
    pub re: BigFloat,
    pub im: BigFloat,
}

/// Working precision plus the constants cache needed by exp, sin, cos and π.
pub struct Evaluator {
    bits: usize,
    cc: Consts,
}

fn check(x: BigFloat) -> Result<BigFloat, Error> {
    if x.is_nan() || x.is_inf() {
        Err(Error::Float(format!("non-finite intermediate ({:?})", x.err())))
    } else {
        Ok(x)
    }
}

/// Exact conversion of an integer to a float with enough mantissa words.
pub fn bigint_to_float(n: &BigInt) -> BigFloat {
    let (sign, words) = n.to_u64_digits();
    if words.is_empty() {
        return BigFloat::from_word(0, 64);
    }
    let words: Vec<Word> = words.into_iter().map(|w| w as Word).collect();
    let s = if sign == IntSign::Minus { Sign::Neg } else { Sign::Pos };
    BigFloat::from_words(&words, s, (words.len() * 64) as i32)
}

/// The integer part of a finite float, truncated toward zero.
pub fn float_to_bigint(x: &BigFloat) -> Result<BigInt, Error> {
    let x = check(x.int())?;
    if x.is_zero() {
        return Ok(BigInt::zero());
    }
    let (words, _, sign, exp, _) = x
        .as_raw_parts()
        .ok_or_else(|| Error::Float("not a finite value".into()))?;
    let mag = BigInt::from_slice(
        IntSign::Plus,
        &words.iter().flat_map(|w| [*w as u32, (*w >> 32) as u32]).collect::<Vec<u32>>(),
    );
    let shift = words.len() as i64 * 64 - exp as i64;
    let mag = if shift >= 0 { mag >> shift as usize } else { mag << (-shift) as usize };
    Ok(if sign == Sign::Neg { -mag } else { mag })
}

/// Nearest f64 to a finite float; 0 for zero, ±∞ on overflow.
pub fn float_to_f64(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let Some((words, _, sign, exp, _)) = x.as_raw_parts() else {
        return f64::NAN;
    };
    let top = *words.last().unwrap_or(&0) as f64;
    let v = top * Float::powi(2.0f64, exp.saturating_sub(64).clamp(-1100, 1100));
    if sign == Sign::Neg {
        -v
    } else {
        v
    }
}

impl Evaluator {
    pub fn new(bits: usize) -> Result<Self, Error> {
        let cc = Consts::new().map_err(|e| Error::Float(format!("{e:?}")))?;
        Ok(Evaluator { bits, cc })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    fn int(&self, n: i64) -> BigFloat {
        BigFloat::from_i64(n, self.bits)
    }

    pub fn add(&self, x: &Complex, y: &Complex) -> Complex {
        Complex {
            re: x.re.add(&y.re, self.bits, RM),
            im: x.im.add(&y.im, self.bits, RM),
        }
    }

    pub fn mul(&self, x: &Complex, y: &Complex) -> Complex {
        let p = self.bits;
        Complex {
            re: x.re.mul(&y.re, p, RM).sub(&x.im.mul(&y.im, p, RM), p, RM),
            im: x.re.mul(&y.im, p, RM).add(&x.im.mul(&y.re, p, RM), p, RM),
        }
    }

    pub fn scale(&self, x: &Complex, c: &BigFloat) -> Complex {
        Complex {
            re: x.re.mul(c, self.bits, RM),
            im: x.im.mul(c, self.bits, RM),
        }
    }

    pub fn real(&self, x: BigFloat) -> Complex {
        Complex { re: x, im: self.int(0) }
    }

    fn inv(&self, x: &Complex) -> Result<Complex, Error> {
        let p = self.bits;
        let norm = x.re.mul(&x.re, p, RM).add(&x.im.mul(&x.im, p, RM), p, RM);
        Ok(Complex {
            re: check(x.re.div(&norm, p, RM))?,
            im: check(x.im.div(&norm, p, RM).neg())?,
        })
    }

    /// q = e^{2πiα} for the CM point α = (-b + i√d)/(2a) of F.
    pub fn cm_q(&mut self, f: &QuadForm) -> Result<Complex, Error> {
        if !f.is_positive_definite() {
            return Err(Error::NotPositiveDefinite { a: f.a, b: f.b, c: f.c });
        }
        let p = self.bits + 64;
        let d = -(f.disc() as i128);
        let pi = self.cc.pi(p, RM);
        // |q| = exp(-π√d / a)
        let sqrt_d = BigFloat::from_i128(d, p).sqrt(p, RM);
        let modulus = pi
            .mul(&sqrt_d, p, RM)
            .div(&self.int(f.a), p, RM)
            .neg()
            .exp(p, RM, &mut self.cc);
        // arg q = 2π·Re α = π·(-b mod 2a)/a
        let num = (-(f.b as i128)).rem_euclid(2 * f.a as i128);
        let angle = pi.mul(&BigFloat::from_i128(num, p), p, RM).div(&self.int(f.a), p, RM);
        let re = modulus.mul(&angle.cos(p, RM, &mut self.cc), self.bits, RM);
        let im = modulus.mul(&angle.sin(p, RM, &mut self.cc), self.bits, RM);
        Ok(Complex { re: check(re)?, im: check(im)? })
    }

    /// Σ cₙ qⁿ over valuation ≤ n < valuation + terms.
    pub fn sum_series(&self, series: &TruncatedLaurentSeries, q: &Complex, terms: usize) -> Result<Complex, Error> {
        let v = series.valuation();
        let have = series.window_len();
        if have < terms {
            return Err(Error::InsufficientWindow {
                needed: v + terms as i64,
                have: series.order(),
            });
        }
        // start from q^v, then multiply up
        let mut power = self.real(self.int(1));
        if v < 0 {
            let qi = self.inv(q)?;
            for _ in 0..(-v) {
                power = self.mul(&power, &qi);
            }
        } else {
            for _ in 0..v {
                power = self.mul(&power, q);
            }
        }
        let mut acc = self.real(self.int(0));
        for c in series.coeffs().iter().take(terms) {
            if !c.is_zero() {
                acc = self.add(&acc, &self.scale(&power, &bigint_to_float(c)));
            }
            power = self.mul(&power, q);
        }
        Ok(acc)
    }

    /// Horner evaluation of an integer polynomial given in increasing degree.
    pub fn eval_poly(&self, poly: &[BigInt], x: &Complex) -> Complex {
        let mut acc = self.real(self.int(0));
        for c in poly.iter().rev() {
            acc = self.mul(&acc, x);
            acc.re = acc.re.add(&bigint_to_float(c), self.bits, RM);
        }
        acc
    }
}

/// Σ cₙ qⁿ at the CM point of F, summing the first ctx.terms coefficients of the window.
pub fn eval_at_cm(series: &TruncatedLaurentSeries, f: &QuadForm, ctx: &PrecisionContext) -> Result<Complex, Error> {
    let mut ev = Evaluator::new(ctx.bits)?;
    let q = ev.cm_q(f)?;
    ev.sum_series(series, &q, ctx.terms)
}

fn log2_abs(n: &BigInt) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    if bits <= 60 {
        let v: i64 = n.try_into().unwrap_or(i64::MAX);
        Float::log2(Float::abs(v as f64))
    } else {
        let top: i64 = (n.magnitude() >> (bits - 60) as usize).try_into().unwrap_or(i64::MAX);
        Float::log2(top as f64) + (bits - 60) as f64
    }
}

/// Working bits and series length for evaluating the polynomial `poly` of the
/// Hauptmodul at the CM points of `classes`.
///
/// Bits cover log2 Σ|p_k||X|ᵏ with |X| ≈ e^{2π·y_max} plus guard bits; the series is
/// cut where the envelope e^{4π√(n/p)}·|q|ⁿ drops below 2^{-bits} at the lowest point.
pub fn plan_precision_poly(
    level: PrimeLevel,
    classes: &[HeegnerClass],
    poly: &[BigInt],
    ctx0: &PrecisionContext,
) -> PrecisionContext {
    let ln2 = core::f64::consts::LN_2;
    let two_pi = 2.0 * core::f64::consts::PI;
    let heights = classes.iter().map(|c| c.eval_form.height());
    let y_max = heights.clone().fold(0.0f64, f64::max);
    let y_min = heights.fold(f64::INFINITY, f64::min);
    let mag = poly
        .iter()
        .enumerate()
        .map(|(k, c)| log2_abs(c) + k as f64 * two_pi * y_max / ln2)
        .fold(0.0f64, f64::max)
        + Float::log2(poly.len() as f64 + 1.0);
    let bits = (Float::ceil(mag + GUARD_BITS) as usize).max(MIN_BITS).max(ctx0.bits);
    let target = bits as f64 * ln2;
    let p = level.p() as f64;
    let mut n = 1usize;
    while two_pi * y_min * n as f64 - 4.0 * core::f64::consts::PI * Float::sqrt(n as f64 / p) <= target {
        n += 1;
    }
    PrecisionContext {
        bits,
        // one extra coefficient for the q⁻¹ term
        terms: (n + 1).max(ctx0.terms),
        ..*ctx0
    }
}

/// Precision for evaluating the Hauptmodul itself at the CM points of `classes`.
pub fn plan_precision(level: PrimeLevel, classes: &[HeegnerClass], ctx0: &PrecisionContext) -> PrecisionContext {
    plan_precision_poly(level, classes, &[BigInt::zero(), BigInt::from(1)], ctx0)
}

/// Nearest integer to x + iy; the residual is max(|x - n|, |y|).
pub fn round_complex(z: &Complex, ctx: &PrecisionContext) -> Result<RoundedValue, Error> {
    let r = check(z.re.round(0, RoundingMode::ToEven))?;
    let diff = z.re.sub(&r, ctx.bits, RM);
    let residual = float_to_f64(&diff).abs().max(float_to_f64(&z.im).abs());
    let value = float_to_bigint(&r)?;
    if !(residual <= ctx.tol) {
        return Err(Error::PrecisionFailure {
            residual,
            attempts: 1,
            bits: ctx.bits,
        });
    }
    Ok(RoundedValue {
        value,
        residual,
        bits_used: ctx.bits,
        terms_used: ctx.terms,
    })
}

/// Nearest integer to a real value.
pub fn round_to_integer(x: &BigFloat, ctx: &PrecisionContext) -> Result<RoundedValue, Error> {
    round_complex(&Complex { re: x.clone(), im: BigFloat::from_word(0, 64) }, ctx)
}

/// Evaluates `compute` at `ctx`, doubling bits and terms until the result rounds to
/// an integer within tolerance or the retries run out.
pub fn certify<F>(ctx: &PrecisionContext, mut compute: F) -> Result<RoundedValue, Error>
where
    F: FnMut(&PrecisionContext) -> Result<Complex, Error>,
{
    ctx.validate()?;
    let mut cur = *ctx;
    let mut last = f64::INFINITY;
    for attempt in 0..=ctx.max_retries {
        let z = compute(&cur)?;
        match round_complex(&z, &cur) {
            Ok(v) => return Ok(v),
            Err(Error::PrecisionFailure { residual, .. }) => last = residual,
            Err(e) => return Err(e),
        }
        if attempt < ctx.max_retries {
            cur = cur.doubled();
        }
    }
    Err(Error::PrecisionFailure {
        residual: last,
        attempts: ctx.max_retries + 1,
        bits: cur.bits,
    })
}
