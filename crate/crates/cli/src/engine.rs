//! Batch trace computation: cached values first, the rest in parallel, results
//! written back to the store in key order.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use rayon::prelude::*;

use moduli_traces_core::arith::PrimeLevel;
use moduli_traces_core::traces::{
    classes_for, collect_keys, compute_trace, plan_trace, LevelData, TraceKey, TraceOptions, TraceOracle, TraceRecord,
};
use moduli_traces_core::Error as CoreError;

use crate::store::{StoredTrace, TraceStore};
use crate::AppError;

/// Where a value came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Cache(StoredTrace),
    Computed(TraceRecord),
}

impl Provenance {
    pub fn value(&self) -> &BigInt {
        match self {
            Provenance::Cache(s) => &s.value,
            Provenance::Computed(r) => &r.value,
        }
    }
}

pub struct Engine {
    opts: TraceOptions,
    store: Option<TraceStore>,
    levels: BTreeMap<PrimeLevel, LevelData>,
    results: BTreeMap<TraceKey, Provenance>,
}

impl Engine {
    pub fn new(opts: TraceOptions, store: Option<TraceStore>) -> Self {
        Engine {
            opts,
            store,
            levels: BTreeMap::new(),
            results: BTreeMap::new(),
        }
    }

    pub fn options(&self) -> &TraceOptions {
        &self.opts
    }

    pub fn store(&self) -> Option<&TraceStore> {
        self.store.as_ref()
    }

    pub fn provenance(&self, key: &TraceKey) -> Option<&Provenance> {
        self.results.get(key)
    }

    fn level_data(&mut self, level: PrimeLevel, terms: usize, index: u64) -> Result<&LevelData, CoreError> {
        if let std::collections::btree_map::Entry::Vacant(e) = self.levels.entry(level) {
            e.insert(LevelData::new(level, terms.max(64) as i64, index.max(8))?);
        }
        let data = self.levels.get_mut(&level).expect("present");
        data.ensure(terms, index)?;
        Ok(data)
    }

    /// Makes every key available, computing the missing ones in parallel.
    pub fn prefetch(&mut self, keys: impl IntoIterator<Item = TraceKey>) -> Result<(), AppError> {
        let mut missing: BTreeSet<TraceKey> = BTreeSet::new();
        for key in keys {
            if self.results.contains_key(&key) {
                continue;
            }
            if let Some(s) = self.store.as_ref().and_then(|s| s.get(&key)) {
                self.results.insert(key, Provenance::Cache(s.clone()));
                continue;
            }
            missing.insert(key);
        }
        if missing.is_empty() {
            return Ok(());
        }
        let by_level: BTreeMap<PrimeLevel, Vec<TraceKey>> = missing.iter().fold(BTreeMap::new(), |mut m, k| {
            m.entry(PrimeLevel::new(k.p).expect("validated level")).or_default().push(*k);
            m
        });
        for (level, keys) in by_level {
            let max_index = keys.iter().map(|k| k.index).max().unwrap_or(1);
            let opts = self.opts;
            // size the shared window from the planned precision of every key
            let data = self.level_data(level, 0, max_index)?;
            let planned: Vec<usize> = keys
                .par_iter()
                .map(|k| {
                    let classes = classes_for(level, k.d, opts.method)?;
                    Ok(plan_trace(data, k.index, &classes, &opts)?.terms)
                })
                .collect::<Result<_, CoreError>>()?;
            let terms = planned.into_iter().max().unwrap_or(1);
            let data = self.level_data(level, terms, max_index)?;
            let records: Vec<TraceRecord> = keys
                .par_iter()
                .map(|k| compute_trace(data, k.index, k.d, &opts))
                .collect::<Result<_, CoreError>>()?;
            for r in records {
                if let Some(store) = self.store.as_mut() {
                    store.put(StoredTrace::from(&r))?;
                }
                self.results.insert(r.key(), Provenance::Computed(r));
            }
        }
        Ok(())
    }

    pub fn get(&mut self, key: TraceKey) -> Result<&Provenance, AppError> {
        self.prefetch([key])?;
        Ok(&self.results[&key])
    }

    /// Values for all keys, as an oracle answering from memory only.
    pub fn snapshot(&self) -> BTreeMap<TraceKey, BigInt> {
        self.results.iter().map(|(k, v)| (*k, v.value().clone())).collect()
    }

    /// Runs `f` once against a recording oracle to learn its keys, computes them,
    /// then runs it for real.
    pub fn run<T, F>(&mut self, mut f: F) -> Result<T, AppError>
    where
        F: FnMut(&mut dyn TraceOracle) -> Result<T, CoreError>,
    {
        let keys = collect_keys(|o| {
            let _ = f(o);
        });
        self.prefetch(keys)?;
        let mut oracle = self.snapshot();
        Ok(f(&mut oracle)?)
    }
}
