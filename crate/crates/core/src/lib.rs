//! Traces of singular moduli for the genus-zero groups Γ₀(p)*.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure computation:
//!
//! - [`arith`]: Kronecker symbol, square classes mod 4p, small-integer helpers.
//! - [`qseries`]: exact truncated Laurent series over big integers, eta quotients.
//! - [`hauptmodul`]: the normalized Hauptmodul j_p* and its Faber polynomials.
//! - [`qforms`]: positive definite binary quadratic forms, Heegner classes for Γ₀(p).
//! - [`cm_eval`]: high precision evaluation at CM points with integer certificates.
//! - [`traces`]: trace computation, coefficient tables, the weight k+1/2 Hecke
//!   operator and the identity verifiers.
//!
//! IO, persistence and the command line live in the `moduli-traces` crate.

#![no_std]

extern crate alloc;

pub mod arith;
pub mod cm_eval;
pub mod error;
pub mod hauptmodul;
pub mod qforms;
pub mod qseries;
pub mod traces;

pub use error::Error;

pub use num_bigint::BigInt;
