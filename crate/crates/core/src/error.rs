use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported level p = {0}: supported levels are 2, 3, 5, 7, 13 (the primes 11, 17, 19, 23, 29, 31, 41, 47, 59, 71 of the genus-zero list are out of scope)")]
    UnsupportedLevel(u64),

    #[error("d = {d} is not admissible for p = {p}: -d is not a square mod 4p")]
    Inadmissible { p: u64, d: u64 },

    #[error("no positive definite forms of discriminant -{0}")]
    NoForms(u64),

    #[error("form [{a}, {b}, {c}] is not positive definite")]
    NotPositiveDefinite { a: i64, b: i64, c: i64 },

    #[error("empty truncation window")]
    EmptyWindow,

    #[error("leading coefficient is not a unit")]
    NonUnitLeading,

    #[error("insufficient window: need order at least {needed}, have {have}")]
    InsufficientWindow { needed: i64, have: i64 },

    #[error("no root line of the form matches beta = {beta} mod {modulus}")]
    NoLift { beta: u64, modulus: u64 },

    #[error("precision failure: residual {residual:e} above tolerance after {attempts} attempts at {bits} bits")]
    PrecisionFailure { residual: f64, attempts: u32, bits: usize },

    #[error("invalid Hecke prime {ell}: {reason}")]
    InvalidHeckePrime { ell: u64, reason: String },

    #[error("coefficient index D = {0} is not realized: {1}")]
    UnrealizedIndex(u64, String),

    #[error("coefficient at n = {0} is not in the table")]
    MissingCoefficient(u64),

    #[error("table support violates the plus condition at n = {0}")]
    PlusConditionViolated(u64),

    #[error("{0}")]
    Hypothesis(String),

    #[error("identification failure: {0}")]
    Identification(String),

    #[error("arbitrary precision arithmetic failed: {0}")]
    Float(String),
}
