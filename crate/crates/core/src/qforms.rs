//! Positive definite binary quadratic forms and Heegner classes for Γ₀(p).
//!
//! A Γ₀(p)-class of forms [a, b, c] of discriminant -d with p | a is labelled by its
//! SL₂-reduced form Q, the residue β ≡ b (mod 2p), and the root line of Q in P¹(F_p)
//! that the class comes from, taken modulo the automorphs of Q. For p ∤ d the line
//! is determined by β; for p | d it is not, so it stays part of the label.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;

use crate::arith::{ext_gcd, gcd, is_admissible, isqrt, sqrt_classes, PrimeLevel};
use crate::Error;

/// The form ax² + bxy + cy².
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuadForm {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

/// Integer 2×2 matrix [[m11, m12], [m21, m22]] of determinant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mat2 {
    pub m11: i64,
    pub m12: i64,
    pub m21: i64,
    pub m22: i64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1, 0, 0, 1);
    pub const S: Mat2 = Mat2::new(0, -1, 1, 0);

    pub const fn new(m11: i64, m12: i64, m21: i64, m22: i64) -> Self {
        Mat2 { m11, m12, m21, m22 }
    }

    pub const fn translation(k: i64) -> Self {
        Mat2::new(1, k, 0, 1)
    }

    pub fn det(&self) -> i128 {
        self.m11 as i128 * self.m22 as i128 - self.m12 as i128 * self.m21 as i128
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.m11 * o.m11 + self.m12 * o.m21,
            self.m11 * o.m12 + self.m12 * o.m22,
            self.m21 * o.m11 + self.m22 * o.m21,
            self.m21 * o.m12 + self.m22 * o.m22,
        )
    }

    /// Inverse of a determinant-one matrix.
    pub fn inverse(&self) -> Mat2 {
        Mat2::new(self.m22, -self.m12, -self.m21, self.m11)
    }
}

impl QuadForm {
    pub const fn new(a: i64, b: i64, c: i64) -> Self {
        QuadForm { a, b, c }
    }

    /// b² - 4ac.
    pub fn disc(&self) -> i64 {
        let d = self.b as i128 * self.b as i128 - 4 * self.a as i128 * self.c as i128;
        d as i64
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a > 0 && self.disc() < 0
    }

    fn check_definite(&self) -> Result<(), Error> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite {
                a: self.a,
                b: self.b,
                c: self.c,
            })
        }
    }

    /// |b| ≤ a ≤ c, with b ≥ 0 when |b| = a or a = c.
    pub fn is_reduced(&self) -> bool {
        self.b.abs() <= self.a
            && self.a <= self.c
            && (self.b >= 0 || (self.b.abs() != self.a && self.a != self.c))
    }

    pub fn content(&self) -> i64 {
        gcd(gcd(self.a as i128, self.b as i128), self.c as i128) as i64
    }

    pub fn eval(&self, x: i64, y: i64) -> i128 {
        let (x, y) = (x as i128, y as i128);
        self.a as i128 * x * x + self.b as i128 * x * y + self.c as i128 * y * y
    }

    /// The form (x, y) ↦ Q(m11 x + m12 y, m21 x + m22 y).
    pub fn transform(&self, m: &Mat2) -> QuadForm {
        let (a, b, c) = (self.a as i128, self.b as i128, self.c as i128);
        let (m11, m12, m21, m22) = (m.m11 as i128, m.m12 as i128, m.m21 as i128, m.m22 as i128);
        let na = self.eval(m.m11, m.m21);
        let nc = self.eval(m.m12, m.m22);
        let nb = 2 * a * m11 * m12 + b * (m11 * m22 + m12 * m21) + 2 * c * m21 * m22;
        QuadForm::new(na as i64, nb as i64, nc as i64)
    }

    /// Fricke image [pc, -b, a/p] of a form with p | a.
    pub fn fricke(&self, p: i64) -> QuadForm {
        debug_assert!(self.a % p == 0);
        QuadForm::new(p * self.c, -self.b, self.a / p)
    }

    /// Imaginary part √d/(2a) of the CM point (-b + √(b²-4ac))/(2a).
    pub fn height(&self) -> f64 {
        Float::sqrt(-(self.disc() as f64)) / (2.0 * self.a as f64)
    }

    /// Translate b into (-a, a]; the translations fix a and b mod 2a.
    fn normalize_b(&self) -> (QuadForm, Mat2) {
        let k = (self.a - self.b).div_euclid(2 * self.a);
        let t = Mat2::translation(k);
        (self.transform(&t), t)
    }
}

impl fmt::Display for QuadForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.a, self.b, self.c)
    }
}

/// Gauss reduction: returns the reduced form R and M ∈ SL₂(ℤ) with Q∘M = R.
pub fn reduce_sl2(q: &QuadForm) -> Result<(QuadForm, Mat2), Error> {
    q.check_definite()?;
    let mut form = *q;
    let mut m = Mat2::IDENTITY;
    loop {
        let (f, t) = form.normalize_b();
        form = f;
        m = m.mul(&t);
        if form.a > form.c || (form.a == form.c && form.b < 0) {
            form = form.transform(&Mat2::S);
            m = m.mul(&Mat2::S);
            continue;
        }
        return Ok((form, m));
    }
}

/// All reduced forms of discriminant -d, primitive or not.
pub fn class_reps(d: u64) -> Result<Vec<QuadForm>, Error> {
    if d == 0 || !(d % 4 == 0 || d % 4 == 3) {
        return Err(Error::NoForms(d));
    }
    let d = d as i64;
    let mut out = Vec::new();
    let mut a = 1i64;
    while 3 * a * a <= d {
        for b in (1 - a)..=a {
            if (b - d).rem_euclid(2) != 0 {
                continue;
            }
            let num = b * b + d;
            if num % (4 * a) != 0 {
                continue;
            }
            let c = num / (4 * a);
            let q = QuadForm::new(a, b, c);
            if q.is_reduced() {
                out.push(q);
            }
        }
        a += 1;
    }
    Ok(out)
}

/// Automorphs of Q in SL₂(ℤ), ±1 included: 2, 4 or 6 matrices.
pub fn automorphs(q: &QuadForm) -> Vec<Mat2> {
    let g = q.content();
    let (a0, b0, c0) = (q.a / g, q.b / g, q.c / g);
    let d0 = -q.disc() / (g * g);
    let mut out = Vec::new();
    for t in -2i64..=2 {
        for u in -1i64..=1 {
            if t * t + d0 * u * u == 4 && (t - b0 * u) % 2 == 0 {
                out.push(Mat2::new((t - b0 * u) / 2, -c0 * u, a0 * u, (t + b0 * u) / 2));
            }
        }
    }
    out
}

/// Order of the stabilizer of F in Γ₀(p)/±1, for a form with p | a.
///
/// Automorphs of F have lower-left entry (a/g)·u where g is the content, so whether
/// they lie in Γ₀(p) depends on p | (a/g)·u and not only on d.
pub fn stabilizer_order(f: &QuadForm, level: PrimeLevel) -> u32 {
    let p = level.p() as i64;
    let n = automorphs(f).iter().filter(|m| m.m21 % p == 0).count();
    (n / 2) as u32
}

/// A point of P¹(F_p): index t < p stands for (1 : t), index p for (0 : 1).
fn line_vector(line: u64, p: u64) -> (i64, i64) {
    if line == p {
        (0, 1)
    } else {
        (1, line as i64)
    }
}

fn line_index(x: i64, y: i64, p: u64) -> u64 {
    let p = p as i64;
    let (x, y) = (x.rem_euclid(p), y.rem_euclid(p));
    if x == 0 {
        debug_assert!(y != 0);
        p as u64
    } else {
        let (_, inv, _) = ext_gcd(x as i128, p as i128);
        ((y as i128 * inv).rem_euclid(p as i128)) as u64
    }
}

/// A matrix in SL₂(ℤ) with first column the standard vector of `line`.
fn line_matrix(line: u64, p: u64) -> Mat2 {
    if line == p {
        Mat2::S
    } else {
        Mat2::new(1, 0, line as i64, 1)
    }
}

/// Root lines of Q mod p, sorted.
pub fn root_lines(q: &QuadForm, level: PrimeLevel) -> Vec<u64> {
    let p = level.p();
    (0..=p)
        .filter(|&l| {
            let (x, y) = line_vector(l, p);
            q.eval(x, y).rem_euclid(p as i128) == 0
        })
        .collect()
}

fn line_orbit(auts: &[Mat2], line: u64, p: u64) -> Vec<u64> {
    let (x, y) = line_vector(line, p);
    let mut orbit: Vec<u64> = auts
        .iter()
        .map(|m| line_index(m.m11 * x + m.m12 * y, m.m21 * x + m.m22 * y, p))
        .collect();
    orbit.sort_unstable();
    orbit.dedup();
    orbit
}

fn canonical_line(q: &QuadForm, line: u64, p: u64) -> u64 {
    line_orbit(&automorphs(q), line, p)[0]
}

/// A form SL₂-equivalent to the reduced form Q with p | a and b ≡ β (mod 2p).
pub fn heegner_lift(q: &QuadForm, level: PrimeLevel, beta: u64) -> Result<QuadForm, Error> {
    q.check_definite()?;
    let p = level.p();
    let modulus = 2 * p as i64;
    for line in root_lines(q, level) {
        let f = q.transform(&line_matrix(line, p));
        if f.b.rem_euclid(modulus) as u64 == beta {
            debug_assert_eq!(reduce_sl2(&f).map(|r| r.0), Ok(*q));
            return Ok(f);
        }
    }
    Err(Error::NoLift {
        beta,
        modulus: 2 * p,
    })
}

/// One Γ₀(p)-move or Fricke flip applied by [`optimize_height_steps`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeightMove {
    Gamma0(QuadForm),
    Fricke(QuadForm),
}

/// Shortest Γ₀(p)-translate: the primitive (x, y) with p | y minimizing F(x, y) below
/// F.a, found by enumerating the vectors of [a, bp, cp²] below a.
fn shortest_gamma0_vector(f: &QuadForm, p: i64) -> Option<(i64, i64, i128)> {
    let (a, b, c) = (f.a as i128, f.b as i128 * p as i128, f.c as i128 * (p * p) as i128);
    let bound = a - 1;
    let delta = 4 * a * c - b * b;
    let y_max = isqrt((4 * a * bound / delta) as u128) as i128;
    let mut best: Option<(i128, i64, i64)> = None;
    for y in -y_max..=y_max {
        if y == 0 {
            continue;
        }
        let disc = 4 * a * bound - delta * y * y;
        if disc < 0 {
            continue;
        }
        let s = isqrt(disc as u128) as i128 + 1;
        let lo = (-b * y - s).div_euclid(2 * a);
        let hi = (-b * y + s).div_euclid(2 * a) + 1;
        for x in lo..=hi {
            let v = a * x * x + b * x * y + c * y * y;
            if v >= f.a as i128 || gcd(x, y * p as i128) != 1 {
                continue;
            }
            let cand = (v, x as i64, (y * p as i128) as i64);
            if best.map_or(true, |bst| cand < bst) {
                best = Some(cand);
            }
        }
    }
    best.map(|(v, x, y)| (x, y, v))
}

/// [`optimize_height`] together with the sequence of moves it made.
pub fn optimize_height_steps(f: &QuadForm, level: PrimeLevel) -> (QuadForm, Vec<HeightMove>) {
    let p = level.p() as i64;
    assert!(f.a % p == 0, "optimize_height needs p | a");
    let mut form = *f;
    let mut moves = Vec::new();
    loop {
        form = form.normalize_b().0;
        if let Some((x, y, _)) = shortest_gamma0_vector(&form, p) {
            let (g, s, t) = ext_gcd(x as i128, y as i128);
            debug_assert_eq!(g, 1);
            let gamma = Mat2::new(x, -(t as i64), y, s as i64);
            debug_assert_eq!(gamma.det(), 1);
            form = form.transform(&gamma);
            moves.push(HeightMove::Gamma0(form));
            continue;
        }
        if p * form.c < form.a {
            form = form.fricke(p);
            moves.push(HeightMove::Fricke(form));
            continue;
        }
        break;
    }
    (form, moves)
}

/// A form in the Γ₀(p)*-orbit of F with locally minimal leading coefficient, hence
/// maximal CM-point height among the candidates searched.
pub fn optimize_height(f: &QuadForm, level: PrimeLevel) -> QuadForm {
    optimize_height_steps(f, level).0
}

/// Label of a Γ₀(p)-class of forms with p | a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel {
    pub sl2_rep: QuadForm,
    pub beta: u64,
    pub line: u64,
}

/// One Γ₀(p)-class of Q_{d,p}.
#[derive(Debug, Clone, PartialEq)]
pub struct HeegnerClass {
    pub level: PrimeLevel,
    pub d: u64,
    pub beta: u64,
    pub sl2_rep: QuadForm,
    pub line: u64,
    /// A representative of the Γ₀(p)-class itself.
    pub lifted: QuadForm,
    /// A form of the same Γ₀(p)*-orbit used for evaluation.
    pub eval_form: QuadForm,
    pub omega: u32,
}

impl HeegnerClass {
    pub fn label(&self) -> ClassLabel {
        ClassLabel {
            sl2_rep: self.sl2_rep,
            beta: self.beta,
            line: self.line,
        }
    }

    fn from_lift(level: PrimeLevel, d: u64, sl2_rep: QuadForm, lifted: QuadForm, line: u64) -> Self {
        let p = level.p() as i64;
        HeegnerClass {
            level,
            d,
            beta: lifted.b.rem_euclid(2 * p) as u64,
            sl2_rep,
            line,
            lifted,
            eval_form: optimize_height(&lifted, level),
            omega: stabilizer_order(&lifted, level),
        }
    }
}

fn label_of(f: &QuadForm, level: PrimeLevel) -> Result<ClassLabel, Error> {
    let p = level.p();
    let (q, m) = reduce_sl2(f)?;
    // F = Q∘M⁻¹, and the first column of M⁻¹ is (m22, -m21).
    let line = line_index(m.m22, -m.m21, p);
    Ok(ClassLabel {
        sl2_rep: q,
        beta: f.b.rem_euclid(2 * p as i64) as u64,
        line: canonical_line(&q, line, p),
    })
}

/// The Γ₀(p)-classes of forms of discriminant -d with p | a, one per label.
///
/// For p ∤ d each pair (β, reduced class) lifts to exactly one class; for p | d the
/// root lines of each reduced form are enumerated modulo its automorphs.
pub fn enumerate_classes(level: PrimeLevel, d: u64) -> Result<Vec<HeegnerClass>, Error> {
    if !is_admissible(d as i64, level) {
        return Err(Error::Inadmissible { p: level.p(), d });
    }
    let p = level.p();
    let reps = class_reps(d)?;
    let mut out = Vec::new();
    if d % p != 0 {
        for beta in sqrt_classes(d, level) {
            for q in &reps {
                let f = heegner_lift(q, level, beta)?;
                let line = label_of(&f, level)?.line;
                out.push(HeegnerClass::from_lift(level, d, *q, f, line));
            }
        }
    } else {
        for q in &reps {
            out.extend(line_orbit_classes(q, level, d));
        }
    }
    out.sort_by_key(HeegnerClass::label);
    Ok(out)
}

/// Classes coming from one reduced form via its root lines modulo automorphs. Valid
/// for every d; [`enumerate_classes`] uses it when p | d.
pub fn line_orbit_classes(q: &QuadForm, level: PrimeLevel, d: u64) -> Vec<HeegnerClass> {
    let p = level.p();
    let auts = automorphs(q);
    let mut seen: Vec<u64> = Vec::new();
    let mut out = Vec::new();
    for line in root_lines(q, level) {
        if seen.contains(&line) {
            continue;
        }
        let orbit = line_orbit(&auts, line, p);
        seen.extend(&orbit);
        let f = q.transform(&line_matrix(line, p));
        out.push(HeegnerClass::from_lift(level, d, *q, f, orbit[0]));
    }
    out
}

/// Every form [a, b, c] of discriminant -d with p | a in the box 0 < a ≤ bound,
/// |b| ≤ a, keyed by class label; the value is the first (smallest a, then smallest b)
/// representative met.
///
/// The forms of one class take the values of Q on the index-p lattice of vectors
/// congruent to a multiple of the root line. A reduced basis [A, B, C] of that lattice
/// has A ≤ p√(d/3), and when its first vector lies in pℤ² the second has
/// C ≤ d/4 + A/4. The bound is the larger of p²⌈√(d/3)⌉ and that estimate.
fn brute_force_search(level: PrimeLevel, d: u64) -> Result<BTreeMap<ClassLabel, QuadForm>, Error> {
    if !is_admissible(d as i64, level) {
        return Err(Error::Inadmissible { p: level.p(), d });
    }
    let p = level.p() as i64;
    let di = d as i64;
    let root = {
        let r = isqrt((d / 3) as u128) as i64;
        if 3 * r * r < di {
            r + 1
        } else {
            r
        }
    };
    let bound = (p * p * root).max(di / 4 + p * root / 4 + 1);
    let mut found = BTreeMap::new();
    let mut a = p;
    while a <= bound {
        for b in -a..=a {
            let num = b * b + di;
            if num % (4 * a) != 0 {
                continue;
            }
            let f = QuadForm::new(a, b, num / (4 * a));
            let label = label_of(&f, level)?;
            found.entry(label).or_insert(f);
        }
        a += p;
    }
    Ok(found)
}

/// Labels of all Γ₀(p)-classes met by a box search; an oracle independent of the
/// algebraic enumeration.
pub fn brute_force_labels(level: PrimeLevel, d: u64) -> Result<Vec<ClassLabel>, Error> {
    Ok(brute_force_search(level, d)?.into_keys().collect())
}

/// Classes built from the box-search representatives.
pub fn brute_force_classes(level: PrimeLevel, d: u64) -> Result<Vec<HeegnerClass>, Error> {
    Ok(brute_force_search(level, d)?
        .into_iter()
        .map(|(label, f)| HeegnerClass::from_lift(level, d, label.sl2_rep, f, label.line))
        .collect())
}

/// Forms reachable from the reduced form Q by the root line of `line`.
pub fn lift_along_line(q: &QuadForm, level: PrimeLevel, line: u64) -> QuadForm {
    q.transform(&line_matrix(line, level.p()))
}
