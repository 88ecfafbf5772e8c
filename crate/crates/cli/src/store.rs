//! JSON Lines trace cache keyed by (p, D, d), D being the Faber index.
//!
//! One record per line:
//! `{"p":2,"D":1,"d":4,"t":"-26","bits":128,"terms":40,"method":"gkz"}`.
//! A put of a record already present is a no-op; a put that disagrees with a stored
//! value is an integrity error and nothing is written.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use moduli_traces_core::traces::{TraceKey, TraceMethod, TraceRecord};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cache {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },

    #[error("cache integrity: p={} D={} d={} stored {existing}, new value {new}", key.p, key.index, key.d)]
    Conflict { key: TraceKey, existing: String, new: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheLine {
    pub p: u64,
    #[serde(rename = "D")]
    pub index: u64,
    pub d: u64,
    pub t: String,
    pub bits: usize,
    pub terms: usize,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredTrace {
    pub key: TraceKey,
    pub value: BigInt,
    pub bits: usize,
    pub terms: usize,
    pub method: TraceMethod,
}

impl StoredTrace {
    pub fn to_line(&self) -> CacheLine {
        CacheLine {
            p: self.key.p,
            index: self.key.index,
            d: self.key.d,
            t: self.value.to_string(),
            bits: self.bits,
            terms: self.terms,
            method: self.method.as_str().to_string(),
        }
    }

    pub fn from_line(line: &CacheLine) -> Result<Self, String> {
        let value: BigInt = line.t.parse().map_err(|e| format!("bad decimal {:?}: {e}", line.t))?;
        let method = parse_method(&line.method)?;
        if !moduli_traces_core::arith::PrimeLevel::SUPPORTED.contains(&line.p) {
            return Err(format!("unsupported level {}", line.p));
        }
        if line.index == 0 || line.d == 0 {
            return Err("D and d must be positive".to_string());
        }
        Ok(StoredTrace {
            key: TraceKey {
                p: line.p,
                index: line.index,
                d: line.d,
            },
            value,
            bits: line.bits,
            terms: line.terms,
            method,
        })
    }
}

impl From<&TraceRecord> for StoredTrace {
    fn from(r: &TraceRecord) -> Self {
        StoredTrace {
            key: r.key(),
            value: r.value.clone(),
            bits: r.bits,
            terms: r.terms,
            method: r.method,
        }
    }
}

pub fn parse_method(s: &str) -> Result<TraceMethod, String> {
    match s {
        "gkz" => Ok(TraceMethod::Gkz),
        "brute" => Ok(TraceMethod::Brute),
        other => Err(format!("unknown method {other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Inserted,
    AlreadyPresent,
}

/// In-memory index over an append-only JSONL file.
#[derive(Debug)]
pub struct TraceStore {
    path: PathBuf,
    records: BTreeMap<TraceKey, StoredTrace>,
    lines: usize,
}

impl TraceStore {
    /// Loads `path`, or starts empty if it does not exist.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut store = TraceStore {
            path: path.clone(),
            records: BTreeMap::new(),
            lines: 0,
        };
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(store),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| StoreError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message,
            };
            let parsed: CacheLine = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            let rec = StoredTrace::from_line(&parsed).map_err(corrupt)?;
            store.lines += 1;
            store.absorb(rec)?;
        }
        Ok(store)
    }

    fn absorb(&mut self, rec: StoredTrace) -> Result<bool, StoreError> {
        if let Some(old) = self.records.get(&rec.key) {
            if old.value != rec.value {
                return Err(StoreError::Conflict {
                    key: rec.key,
                    existing: old.value.to_string(),
                    new: rec.value.to_string(),
                });
            }
            return Ok(false);
        }
        self.records.insert(rec.key, rec);
        Ok(true)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &TraceKey) -> Option<&StoredTrace> {
        self.records.get(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of non-blank lines read at open plus lines appended since.
    pub fn line_count(&self) -> usize {
        self.lines
    }

    pub fn records(&self) -> impl Iterator<Item = &StoredTrace> {
        self.records.values()
    }

    pub fn put(&mut self, rec: StoredTrace) -> Result<PutOutcome, StoreError> {
        let line = serde_json::to_string(&rec.to_line()).expect("cache line serializes");
        if !self.absorb(rec)? {
            return Ok(PutOutcome::AlreadyPresent);
        }
        let io = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        writeln!(f, "{line}").map_err(io)?;
        f.flush().map_err(io)?;
        self.lines += 1;
        Ok(PutOutcome::Inserted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(d: u64, t: i64) -> StoredTrace {
        StoredTrace {
            key: TraceKey { p: 2, index: 1, d },
            value: BigInt::from(t),
            bits: 128,
            terms: 40,
            method: TraceMethod::Gkz,
        }
    }

    #[test]
    fn put_get_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut s = TraceStore::open(&path).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.put(rec(4, -26)).unwrap(), PutOutcome::Inserted);
        assert_eq!(s.get(&rec(4, -26).key), Some(&rec(4, -26)));
        let s2 = TraceStore::open(&path).unwrap();
        assert_eq!(s2.get(&rec(4, -26).key), Some(&rec(4, -26)));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "{\"p\":2,\"D\":1,\"d\":4,\"t\":\"-26\",\"bits\":128,\"terms\":40,\"method\":\"gkz\"}\n");
    }

    #[test]
    fn idempotent_put() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut s = TraceStore::open(&path).unwrap();
        s.put(rec(7, -23)).unwrap();
        assert_eq!(s.put(rec(7, -23)).unwrap(), PutOutcome::AlreadyPresent);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    }

    #[test]
    fn conflicting_put_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut s = TraceStore::open(&path).unwrap();
        s.put(rec(7, -23)).unwrap();
        assert!(matches!(s.put(rec(7, 23)), Err(StoreError::Conflict { .. })));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    }

    #[test]
    fn corrupt_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let good = serde_json::to_string(&rec(4, -26).to_line()).unwrap();
        std::fs::write(&path, format!("{good}\n\n{{not json\n")).unwrap();
        match TraceStore::open(&path) {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, format!("{good}\n{}\n", good.replace("\"-26\"", "\"x\""))).unwrap();
        assert!(matches!(TraceStore::open(&path), Err(StoreError::Corrupt { line: 2, .. })));
        std::fs::write(&path, format!("{good}\n{}\n", good.replace("\"-26\"", "\"-27\""))).unwrap();
        assert!(matches!(TraceStore::open(&path), Err(StoreError::Conflict { .. })));
    }
}
