//! Std companion of `moduli-traces-core`: the JSONL trace cache, JSON/CSV formats,
//! a parallel trace engine and the `moduli-traces` command line.

pub mod app;
pub mod engine;
pub mod error;
pub mod format;
pub mod store;

pub use error::AppError;
pub use moduli_traces_core as core;

/// Environment variable holding a floor on the working precision in bits.
pub const PREC_BITS_ENV: &str = "MODULI_TRACES_PREC_BITS";

pub const DEFAULT_CACHE_PATH: &str = "./traces-cache.jsonl";
