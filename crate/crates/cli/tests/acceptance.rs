//! End-to-end acceptance run. One PASS/FAIL line per criterion; exits nonzero if
//! any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rayon::prelude::*;

use moduli_traces::engine::Engine;
use moduli_traces_core::arith::{is_admissible, kronecker, splits, PrimeLevel};
use moduli_traces_core::hauptmodul::Hauptmodul;
use moduli_traces_core::qforms::{brute_force_labels, enumerate_classes};
use moduli_traces_core::traces::{
    admissible_range, classes_for, compute_trace, hecke_apply, hecke_coefficient, plan_trace, realized_squares, verify_coeff_identities,
    verify_congruence, verify_recurrence, CoeffTable, LevelData, TraceMethod, TraceOptions, TupleReport, ZeroConvention,
};
use moduli_traces_core::Error as CoreError;

const HAUPTMODUL_WINDOWS: (i64, i64) = (256, 512);
const HAUPTMODUL_BUDGET: Duration = Duration::from_secs(10);

const LABEL_D_MAX: u64 = 200;
const LABEL_BUDGET: Duration = Duration::from_secs(60);

const STABILITY_D_MAX: u64 = 100;
const STABILITY_INDICES: [u64; 2] = [1, 4];
const ROUNDING_TOL: f64 = 1e-6;
const STABILITY_BUDGET: Duration = Duration::from_secs(600);

const IDENTITY_D_MAX: u64 = 60;
const IDENTITY_BIG_D_MAX: u64 = 16;
const MIN_KRONECKER_ZERO: usize = 3;

const RECURRENCE_PER_LEVEL: usize = 10;
const RECURRENCE_BUDGET: Duration = Duration::from_secs(900);

const CONGRUENCE_N1: [(u64, u64, u64); 7] = [(2, 3, 8), (2, 11, 7), (2, 5, 8), (3, 5, 8), (5, 3, 11), (7, 3, 3), (13, 3, 4)];
const CONGRUENCE_N2: [(u64, u64, u64); 2] = [(2, 3, 8), (3, 5, 8)];

const HECKE_CASES: u32 = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn lvl(p: u64) -> PrimeLevel {
    PrimeLevel::new(p).expect("supported level")
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: false,
        detail: detail.into(),
    }
}

fn timed(budget: Duration, start: Instant, mut o: Outcome) -> Outcome {
    let took = start.elapsed();
    o.detail = format!("{} [{:.1}s, budget {}s]", o.detail, took.as_secs_f64(), budget.as_secs());
    if took > budget {
        o.pass = false;
    }
    o
}

fn hauptmodul_windows() -> Outcome {
    let start = Instant::now();
    let (small, large) = HAUPTMODUL_WINDOWS;
    for level in PrimeLevel::all() {
        let a = Hauptmodul::build(level, small);
        let b = Hauptmodul::build(level, large);
        for n in -1..small {
            if a.coeff(n) != b.coeff(n) {
                return fail(format!("p={}: windows disagree at q^{n}", level.p()));
            }
        }
        if b.coeff(-1) != Some(BigInt::one()) || b.coeff(0) != Some(BigInt::zero()) {
            return fail(format!("p={}: not normalized as q^-1 + O(q)", level.p()));
        }
    }
    timed(
        HAUPTMODUL_BUDGET,
        start,
        Outcome {
            pass: true,
            detail: format!("5 levels, windows {small} and {large} agree"),
        },
    )
}

fn class_labels() -> Outcome {
    let start = Instant::now();
    let mut checked = 0usize;
    for level in PrimeLevel::all() {
        let ds = admissible_range(level, LABEL_D_MAX);
        let bad: Vec<u64> = ds
            .par_iter()
            .filter(|&&d| {
                let gkz: BTreeSet<_> = enumerate_classes(level, d).map(|v| v.iter().map(|c| c.label()).collect()).unwrap_or_default();
                let brute: BTreeSet<_> = brute_force_labels(level, d).map(|v| v.into_iter().collect()).unwrap_or_default();
                gkz.is_empty() || gkz != brute
            })
            .copied()
            .collect();
        if let Some(d) = bad.first() {
            return fail(format!("p={}: label sets differ at d={d}", level.p()));
        }
        checked += ds.len();
    }
    timed(
        LABEL_BUDGET,
        start,
        Outcome {
            pass: true,
            detail: format!("{checked} (p, d) pairs, enumeration equals box search"),
        },
    )
}

fn stability() -> Outcome {
    let start = Instant::now();
    let base = TraceOptions::default();
    let brute = TraceOptions {
        method: TraceMethod::Brute,
        ..base
    };
    let mut count = 0usize;
    let mut worst = 0f64;
    for level in PrimeLevel::all() {
        let ds = admissible_range(level, STABILITY_D_MAX);
        let max_index = *STABILITY_INDICES.iter().max().unwrap();
        let mut data = match LevelData::new(level, 64, max_index) {
            Ok(d) => d,
            Err(e) => return fail(e.to_string()),
        };
        let mut terms = 1;
        for &d in &ds {
            let classes = classes_for(level, d, TraceMethod::Gkz).expect("admissible");
            for &index in &STABILITY_INDICES {
                terms = terms.max(plan_trace(&data, index, &classes, &base).expect("plan").terms);
            }
        }
        data.ensure(2 * terms, max_index).expect("level data");
        let tasks: Vec<(u64, u64)> = ds.iter().flat_map(|&d| STABILITY_INDICES.map(|i| (i, d))).collect();
        let results: Vec<Result<(f64, Option<String>), CoreError>> = tasks
            .par_iter()
            .map(|&(index, d)| {
                let r = compute_trace(&data, index, d, &base)?;
                let twice = TraceOptions {
                    bits: Some(2 * r.bits),
                    terms: Some(2 * r.terms),
                    ..base
                };
                let r2 = compute_trace(&data, index, d, &twice)?;
                let rb = compute_trace(&data, index, d, &brute)?;
                let mut problem = None;
                if r.residual >= ROUNDING_TOL {
                    problem = Some(format!("residual {:.2e}", r.residual));
                } else if r2.value != r.value {
                    problem = Some(format!("doubling moved {} to {}", r.value, r2.value));
                } else if rb.value != r.value {
                    problem = Some(format!("brute gives {} against {}", rb.value, r.value));
                }
                Ok((r.residual, problem.map(|m| format!("p={} D={index} d={d}: {m}", level.p()))))
            })
            .collect();
        for res in results {
            match res {
                Err(e) => return fail(format!("p={}: {e}", level.p())),
                Ok((_, Some(m))) => return fail(m),
                Ok((r, None)) => worst = worst.max(r),
            }
        }
        count += tasks.len();
    }
    timed(
        STABILITY_BUDGET,
        start,
        Outcome {
            pass: true,
            detail: format!("{count} traces stable under doubling and brute recomputation, max residual {worst:.2e}"),
        },
    )
}

fn identity_grid() -> Outcome {
    let mut engine = Engine::new(TraceOptions::default(), None);
    let mut reports: Vec<TupleReport> = Vec::new();
    for (p, ell) in [(2u64, 3u64), (2, 5), (3, 5)] {
        let level = lvl(p);
        let ds = admissible_range(level, IDENTITY_D_MAX);
        let big_ds = realized_squares(level, IDENTITY_BIG_D_MAX);
        match engine.run(|o| verify_coeff_identities(o, level, ell, &big_ds, &ds)) {
            Ok(r) => reports.extend(r),
            Err(e) => return fail(format!("p={p} ell={ell}: {e}")),
        }
    }
    let failed: Vec<&TupleReport> = reports.iter().filter(|r| !r.passed()).collect();
    let has = |c: ZeroConvention| reports.iter().filter(|r| r.conventions.contains(&c)).count();
    let kz = has(ZeroConvention::KroneckerZero);
    let small_d = has(ZeroConvention::SmallDNotIntegral);
    let small_big_d = has(ZeroConvention::SmallBigDNotIntegral);
    let detail = format!(
        "{} tuples, {} failed, kronecker-zero {kz}, d/l^2 convention {small_d}, D/l^2 convention {small_big_d}",
        reports.len(),
        failed.len()
    );
    if let Some(r) = failed.first() {
        return fail(format!("{detail}; first failure p={} ell={} D={:?} d={}", r.p, r.ell, r.big_d, r.d));
    }
    Outcome {
        pass: kz >= MIN_KRONECKER_ZERO && small_d > 0 && small_big_d > 0,
        detail,
    }
}

fn recurrence() -> Outcome {
    let start = Instant::now();
    let mut engine = Engine::new(TraceOptions::default(), None);
    let mut lines = Vec::new();
    let mut saw_anchor = false;
    for (p, ell) in [(2u64, 3u64), (3, 5)] {
        let level = lvl(p);
        let ds: Vec<u64> = admissible_range(level, 200).into_iter().take(RECURRENCE_PER_LEVEL).collect();
        let big_ds = realized_squares(level, 4);
        let run = engine.run(|o| {
            let mut out = Vec::new();
            for &big_d in &big_ds {
                for &d in &ds {
                    for n in [1, 2] {
                        out.push(verify_recurrence(o, level, ell, big_d, d, n)?);
                    }
                }
            }
            Ok(out)
        });
        let reports = match run {
            Ok(r) => r,
            Err(e) => return fail(format!("p={p}: {e}")),
        };
        if let Some(r) = reports.iter().find(|r| !r.passed()) {
            return fail(format!("p={p} ell={ell} D={:?} d={} n={:?} fails", r.big_d, r.d, r.n));
        }
        saw_anchor |= p == 2 && reports.iter().any(|r| r.ell == 3 && r.d == 8 && r.n == Some(2));
        let n2 = reports.iter().filter(|r| r.n == Some(2)).count();
        if n2 < RECURRENCE_PER_LEVEL {
            return fail(format!("p={p}: only {n2} tuples at n=2"));
        }
        lines.push(format!("p={p} ell={ell}: {} tuples", reports.len()));
    }
    if !saw_anchor {
        return fail("tuple p=2 ell=3 d=8 n=2 missing");
    }
    timed(
        RECURRENCE_BUDGET,
        start,
        Outcome {
            pass: true,
            detail: format!("{}, n in {{1, 2}}", lines.join("; ")),
        },
    )
}

fn congruence() -> Outcome {
    let mut engine = Engine::new(TraceOptions::default(), None);
    let tuples: Vec<(u64, u64, u64, u32)> = CONGRUENCE_N1
        .iter()
        .map(|&(p, l, d)| (p, l, d, 1))
        .chain(CONGRUENCE_N2.iter().map(|&(p, l, d)| (p, l, d, 2)))
        .collect();
    let mut exact = 0usize;
    let mut checked = 0usize;
    let mut skipped = Vec::new();
    for &(p, ell, d, n) in &tuples {
        let level = lvl(p);
        if ell % 2 == 0 || ell == p || !is_admissible(d as i64, level) {
            return fail(format!("sample ({p},{ell},{d}) is not a valid tuple"));
        }
        let d = if splits(ell, d) {
            d
        } else {
            // outside the hypotheses: substitute the least admissible split d for the same (p, ell)
            let sub = admissible_range(level, 1000).into_iter().find(|&e| splits(ell, e)).expect("a split d exists");
            skipped.push(format!(
                "({p},{ell},{d}) n={n} has (-{d}/{ell}) = {}, used d={sub}",
                kronecker(-(d as i64), ell as i64)
            ));
            sub
        };
        let r = match engine.run(|o| verify_congruence(o, level, ell, d, n)) {
            Ok(r) => r,
            Err(e) => return fail(format!("({p},{ell},{d},n={n}): {e}")),
        };
        if !r.passed() {
            let c = r.checks.iter().find(|c| !c.passed()).expect("a failing check");
            return fail(format!("({p},{ell},{d},n={n}) {}: {} vs {}", c.name, c.lhs, c.rhs));
        }
        checked += 1;
        if d % ell != 0 {
            if !r.checks.iter().any(|c| c.name == "exact_lift") {
                return fail(format!("({p},{ell},{d},n={n}) exact lift not checked"));
            }
            exact += 1;
        }
    }
    let mut detail = format!("{checked} tuples, {exact} exact lifts");
    if !skipped.is_empty() {
        detail.push_str(&format!("; substituted {}", skipped.join(", ")));
    }
    Outcome {
        pass: checked == tuples.len(),
        detail,
    }
}

// a(n) ↦ ℓ_k (a(ℓ²n) + (±n/ℓ) ℓ^{k-1} a(n) + ℓ^{2k-1} a(n/ℓ²)), ℓ_k = ℓ^{1-2k} for k ≤ 0 else 1
fn generic_hecke(t: &CoeffTable, ell: u64, n: u64) -> BigRational {
    let k = t.weight() as i32;
    let l = BigRational::from_integer(BigInt::from(ell));
    let pw = |e: i32| if e >= 0 { l.pow(e) } else { l.pow(-e).recip() };
    let lk = if k <= 0 { pw(1 - 2 * k) } else { BigRational::one() };
    let a = |m: u64| BigRational::from_integer(t.get(m).expect("complete table"));
    let sign = if k == 0 { n as i64 } else { -(n as i64) };
    let low = if n.is_multiple_of(ell * ell) { a(n / (ell * ell)) } else { BigRational::zero() };
    let chi = BigRational::from_integer(BigInt::from(kronecker(sign, ell as i64)));
    lk * (a(ell * ell * n) + chi * pw(k - 1) * a(n) + pw(2 * k - 1) * low)
}

fn table_strategy() -> impl Strategy<Value = CoeffTable> {
    (0u8..2, 0usize..5, 0usize..4, 50u64..400, proptest::collection::vec(-10_000i64..10_000, 1..30)).prop_filter_map(
        "ell must differ from p and fit the window",
        |(weight, pi, li, n_max, seed)| {
            let level = PrimeLevel::all()[pi];
            let ell = [3u64, 5, 7, 11][li];
            if ell == level.p() || n_max < ell * ell {
                return None;
            }
            let mut t = CoeffTable::new(weight, level, n_max).ok()?;
            for n in 1..=n_max {
                if t.in_support(n) {
                    t.set(n, BigInt::from(seed[n as usize % seed.len()]) * BigInt::from(n)).ok()?;
                }
            }
            Some(t)
        },
    )
}

fn hecke_suite() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: HECKE_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&(table_strategy(), 0usize..4), |(t, li)| {
        let ell = [3u64, 5, 7, 11]
            .into_iter()
            .cycle()
            .skip(li)
            .find(|&l| l != t.level().p() && l * l <= t.n_max())
            .expect("some prime fits");
        let out = hecke_apply(&t, ell).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(out.satisfies_plus_condition());
        for n in 1..=out.n_max() {
            if out.in_support(n) {
                let g = generic_hecke(&t, ell, n);
                prop_assert!(g.is_integer());
                prop_assert_eq!(out.get(n).expect("complete"), g.to_integer());
            } else {
                prop_assert!(!out.entries().contains_key(&n));
            }
        }
        Ok(())
    });
    if let Err(e) = result {
        return fail(format!("random tables: {e}"));
    }

    // window contract
    let level = lvl(2);
    let mut t = CoeffTable::new(1, level, 80).expect("table");
    let mut rejected = 0;
    let mut expect_err = |r: Result<(), CoreError>, what: &str| -> Option<Outcome> {
        if r.is_ok() {
            return Some(fail(format!("accepted {what}")));
        }
        rejected += 1;
        None
    };
    let checks = [
        (t.clone().set(81, BigInt::one()), "an entry past the window"),
        (t.clone().set(0, BigInt::one()), "index 0"),
        (t.clone().set(5, BigInt::one()), "a nonzero entry off the plus support"),
        (hecke_coefficient(&t, 3, 8).map(drop), "a formula needing a(72) of an empty table"),
        (hecke_coefficient(&t, 3, 9).map(drop), "a formula needing a(81) of an 80-term table"),
        (hecke_coefficient(&t, 2, 1).map(drop), "an even prime"),
        (CoeffTable::new(1, level, 8).and_then(|s| hecke_apply(&s, 3)).map(drop), "a window shorter than l^2"),
        (CoeffTable::new(2, level, 8).map(drop), "weight index 2"),
    ];
    for (r, what) in checks {
        if let Some(o) = expect_err(r, what) {
            return o;
        }
    }
    for n in 1..=80 {
        if t.in_support(n) {
            t.set(n, BigInt::from(n)).expect("in window");
        }
    }
    if hecke_apply(&t, 3).is_err() {
        return fail("a complete table was rejected");
    }
    Outcome {
        pass: true,
        detail: format!("{HECKE_CASES} random tables agree with the generic formula and stay plus-supported; {rejected} contract violations rejected"),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("hauptmodul self-consistency", hauptmodul_windows),
        ("class enumeration equals box search", class_labels),
        ("trace integrality and stability", stability),
        ("coefficient identity grid", identity_grid),
        ("n-step recurrence", recurrence),
        ("congruences and exact lifts", congruence),
        ("hecke operator suite", hecke_suite),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!("[{}] {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
