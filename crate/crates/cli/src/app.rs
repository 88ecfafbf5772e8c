//! The `moduli-traces` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use moduli_traces_core::arith::{is_admissible, splits, PrimeLevel};
use moduli_traces_core::hauptmodul::Hauptmodul;
use moduli_traces_core::traces::{
    check_hecke_prime, classes_for, congruence_hypotheses, realized_root, realized_squares, trace_value, verify_coeff_identities,
    verify_congruence, verify_recurrence, TraceKey, TraceMethod, TraceOptions, TupleReport, VerifyKind,
};

use crate::engine::{Engine, Provenance};
use crate::format::{rows_to_csv, ClassJson, OutputFormat, ReportJson, SeriesJson, TableRow};
use crate::store::{StoredTrace, TraceStore};
use crate::{AppError, DEFAULT_CACHE_PATH, PREC_BITS_ENV};

#[derive(Debug, Parser)]
#[command(name = "moduli-traces", version, about = "Traces of singular moduli for the Fricke groups Γ₀(p)*")]
pub struct Cli {
    /// JSONL trace cache.
    #[arg(long, global = true, default_value = DEFAULT_CACHE_PATH)]
    pub cache: PathBuf,

    /// Neither read nor write the cache.
    #[arg(long, global = true)]
    pub no_cache: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct PrecisionArgs {
    /// Working precision in bits (default: planned per trace).
    #[arg(long)]
    pub prec_bits: Option<usize>,

    /// Number of q-expansion terms summed (default: planned per trace).
    #[arg(long)]
    pub terms: Option<usize>,

    /// Largest accepted distance to the nearest integer.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    #[arg(long, value_enum, default_value = "gkz")]
    pub method: MethodArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodArg {
    Gkz,
    Brute,
}

impl From<MethodArg> for TraceMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Gkz => TraceMethod::Gkz,
            MethodArg::Brute => TraceMethod::Brute,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the Hauptmodul coefficients of q⁻¹ through q^terms.
    Hauptmodul {
        #[arg(long)]
        p: u64,
        #[arg(long, default_value_t = 10)]
        terms: i64,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// List the Γ₀(p)-classes of discriminant -d with p | a.
    Classes {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        d: u64,
        #[arg(long, value_enum, default_value = "gkz")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Compute one trace t_D(d).
    Trace {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        d: u64,
        /// Faber index.
        #[arg(long = "D", default_value_t = 1)]
        big_d: u64,
        #[command(flatten)]
        precision: PrecisionArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Traces for every admissible d ≤ dmax.
    TraceTable {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        dmax: u64,
        #[arg(long = "D", default_value_t = 1)]
        big_d: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        precision: PrecisionArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// Run an identity check over a grid.
    Verify {
        #[command(subcommand)]
        kind: VerifyCommand,
    },
    /// Inspect the trace cache.
    Cache {
        #[command(subcommand)]
        action: CacheCommand,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub p: u64,
    #[arg(long)]
    pub ell: u64,
    /// All admissible d up to this bound.
    #[arg(long)]
    pub dmax: Option<u64>,
    /// Explicit d values (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub d: Vec<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub precision: PrecisionArgs,
}

#[derive(Debug, Clone, Args)]
pub struct IndexArgs {
    /// Explicit square indices D (comma separated).
    #[arg(long = "D", value_delimiter = ',')]
    pub big_d: Vec<u64>,
    /// All realized square D up to this bound.
    #[arg(long = "D-max")]
    pub big_d_max: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// ℓⁿ | t(ℓ^{2n} d) and the exact lift for split ℓ.
    Congruence {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 1)]
        n: u32,
    },
    /// The n-step expansion of B(D, ℓ^{2n} d).
    Recurrence {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long, default_value_t = 1)]
        n: u32,
    },
    /// Hecke image, lifting relation and duality of the coefficient tables.
    CoeffIdentities {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        index: IndexArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// Record counts.
    Stats {
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Check that every line parses and no key conflicts; optionally recompute values.
    Verify {
        #[arg(long)]
        recompute: bool,
        #[command(flatten)]
        precision: PrecisionArgs,
    },
}

fn level(p: u64) -> Result<PrimeLevel, AppError> {
    Ok(PrimeLevel::new(p)?)
}

/// Builds trace options from flags and the environment floor.
pub fn trace_options(args: &PrecisionArgs, env_floor: Option<&str>) -> Result<TraceOptions, AppError> {
    let floor = match env_floor {
        None => 0,
        Some(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| AppError::Invalid(format!("{PREC_BITS_ENV} must be a positive integer, got {s:?}")))?,
    };
    if let Some(b) = args.prec_bits {
        if b < 64 {
            return Err(AppError::Invalid(format!("--prec-bits must be at least 64, got {b}")));
        }
    }
    if args.terms == Some(0) {
        return Err(AppError::Invalid("--terms must be positive".to_string()));
    }
    if !(args.tol > 0.0 && args.tol < 0.5) {
        return Err(AppError::Invalid(format!("--tol must lie in (0, 0.5), got {}", args.tol)));
    }
    Ok(TraceOptions {
        bits: args.prec_bits,
        terms: args.terms,
        bits_floor: floor,
        tol: args.tol,
        method: args.method.into(),
        ..TraceOptions::default()
    })
}

struct Ctx<'a> {
    cache: Option<PathBuf>,
    env_floor: Option<String>,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn engine(&self, args: &PrecisionArgs) -> Result<Engine, AppError> {
        let opts = trace_options(args, self.env_floor.as_deref())?;
        let store = match &self.cache {
            Some(p) => Some(TraceStore::open(p)?),
            None => None,
        };
        Ok(Engine::new(opts, store))
    }

    fn print(&mut self, text: &str) -> Result<(), AppError> {
        self.out.write_all(text.as_bytes()).map_err(|e| AppError::io("<stdout>", e))
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), AppError> {
    std::fs::write(path, text).map_err(|e| AppError::io(path.display().to_string(), e))
}

fn json_line(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_hauptmodul(ctx: &mut Ctx, p: u64, terms: i64, format: OutputFormat) -> Result<(), AppError> {
    let level = level(p)?;
    if terms < 2 {
        return Err(AppError::Invalid(format!("--terms must be at least 2, got {terms}")));
    }
    let h = Hauptmodul::build(level, terms + 1);
    let series = h.series();
    let text = match format {
        OutputFormat::Json => json_line(&SeriesJson::from_series(series)),
        OutputFormat::Csv => {
            let mut s = String::from("n,coeff\n");
            for (i, c) in series.coeffs().iter().enumerate() {
                s.push_str(&format!("{},{}\n", series.valuation() + i as i64, c));
            }
            s
        }
        OutputFormat::Text => {
            let cs: Vec<String> = series.coeffs().iter().map(ToString::to_string).collect();
            format!("{}\n", cs.join(", "))
        }
    };
    ctx.print(&text)
}

fn cmd_classes(ctx: &mut Ctx, p: u64, d: u64, method: MethodArg, format: OutputFormat) -> Result<(), AppError> {
    let level = level(p)?;
    let classes = classes_for(level, d, method.into())?;
    let rows: Vec<ClassJson> = classes.iter().map(ClassJson::from).collect();
    let text = match format {
        OutputFormat::Json => json_line(&rows),
        OutputFormat::Csv => {
            let mut s = String::from("beta,sl2_rep,line,lifted,eval_form,omega,height\n");
            for c in &classes {
                s.push_str(&format!(
                    "{},\"{}\",{},\"{}\",\"{}\",{},{}\n",
                    c.beta,
                    c.sl2_rep,
                    c.line,
                    c.lifted,
                    c.eval_form,
                    c.omega,
                    c.eval_form.height()
                ));
            }
            s
        }
        OutputFormat::Text => {
            let mut s = format!("p = {p}, d = {d}: {} classes\n", classes.len());
            for c in &classes {
                s.push_str(&format!(
                    "beta={:<3} reduced={:<14} line={:<3} lift={:<16} eval={:<14} omega={} height={:.6}\n",
                    c.beta,
                    c.sl2_rep.to_string(),
                    c.line,
                    c.lifted.to_string(),
                    c.eval_form.to_string(),
                    c.omega,
                    c.eval_form.height()
                ));
            }
            s
        }
    };
    ctx.print(&text)
}

fn cmd_trace(ctx: &mut Ctx, p: u64, d: u64, big_d: u64, precision: &PrecisionArgs, format: OutputFormat) -> Result<(), AppError> {
    let level = level(p)?;
    if big_d == 0 {
        return Err(AppError::Invalid("--D must be positive".to_string()));
    }
    if !is_admissible(d as i64, level) {
        return Err(moduli_traces_core::Error::Inadmissible { p, d }.into());
    }
    let mut engine = ctx.engine(precision)?;
    let key = TraceKey { p, index: big_d, d };
    let prov = engine.get(key)?.clone();
    let classes = classes_for(level, d, TraceMethod::Gkz)?;
    let heights: Vec<f64> = classes.iter().map(|c| c.eval_form.height()).collect();
    let betas: std::collections::BTreeSet<u64> = classes.iter().map(|c| c.beta).collect();
    let (stored, source, residual) = match &prov {
        Provenance::Cache(s) => (s.clone(), "cache", None),
        Provenance::Computed(r) => (StoredTrace::from(r), "computed", Some(r.residual)),
    };
    let text = match format {
        OutputFormat::Json | OutputFormat::Csv => json_line(&json!({
            "p": p,
            "D": big_d,
            "d": d,
            "t": stored.value.to_string(),
            "bits": stored.bits,
            "terms": stored.terms,
            "method": stored.method.as_str(),
            "source": source,
            "residual": residual,
            "class_count": classes.len(),
            "beta_count": betas.len(),
            "heights": heights,
        })),
        OutputFormat::Text => {
            let mut s = format!("t = {}\n", stored.value);
            s.push_str(&format!("p = {p}, D = {big_d}, d = {d}\n"));
            s.push_str(&format!(
                "method = {}, bits = {}, terms = {}, source = {source}\n",
                stored.method.as_str(),
                stored.bits,
                stored.terms
            ));
            if let Some(r) = residual {
                s.push_str(&format!("residual = {r:.3e}\n"));
            }
            s.push_str(&format!("classes = {}, beta classes = {}\n", classes.len(), betas.len()));
            let hs: Vec<String> = heights.iter().map(|h| format!("{h:.6}")).collect();
            s.push_str(&format!("heights = {}\n", hs.join(" ")));
            s
        }
    };
    ctx.print(&text)
}

pub fn trace_table_rows(engine: &mut Engine, level: PrimeLevel, big_d: u64, dmax: u64) -> Result<Vec<TableRow>, AppError> {
    let ds: Vec<u64> = (1..=dmax).filter(|&d| is_admissible(d as i64, level)).collect();
    engine.prefetch(ds.iter().map(|&d| TraceKey {
        p: level.p(),
        index: big_d,
        d,
    }))?;
    let mut rows = Vec::with_capacity(ds.len());
    for d in ds {
        let classes = classes_for(level, d, TraceMethod::Gkz)?;
        let betas: std::collections::BTreeSet<u64> = classes.iter().map(|c| c.beta).collect();
        let value = engine.get(TraceKey {
            p: level.p(),
            index: big_d,
            d,
        })?;
        rows.push(TableRow {
            d,
            beta_count: betas.len(),
            class_count: classes.len(),
            trace: value.value().to_string(),
        });
    }
    Ok(rows)
}

fn cmd_trace_table(
    ctx: &mut Ctx,
    p: u64,
    dmax: u64,
    big_d: u64,
    out: Option<&Path>,
    precision: &PrecisionArgs,
    format: OutputFormat,
) -> Result<(), AppError> {
    let level = level(p)?;
    if big_d == 0 {
        return Err(AppError::Invalid("--D must be positive".to_string()));
    }
    let mut engine = ctx.engine(precision)?;
    let rows = trace_table_rows(&mut engine, level, big_d, dmax)?;
    let text = match format {
        OutputFormat::Json => json_line(&rows),
        OutputFormat::Csv | OutputFormat::Text => {
            rows_to_csv(&rows).map_err(|e| AppError::io("<csv>", std::io::Error::other(e.to_string())))?
        }
    };
    match out {
        Some(path) => write_file(path, &text),
        None => ctx.print(&text),
    }
}

fn grid_ds(grid: &GridArgs, level: PrimeLevel) -> Result<Vec<u64>, AppError> {
    let mut ds = grid.d.clone();
    if let Some(m) = grid.dmax {
        ds.extend((1..=m).filter(|&d| is_admissible(d as i64, level)));
    }
    if grid.d.is_empty() && grid.dmax.is_none() {
        return Err(AppError::Invalid("give --dmax or --d".to_string()));
    }
    for &d in &grid.d {
        if !is_admissible(d as i64, level) {
            return Err(moduli_traces_core::Error::Inadmissible { p: level.p(), d }.into());
        }
    }
    ds.sort_unstable();
    ds.dedup();
    Ok(ds)
}

fn index_list(index: &IndexArgs, level: PrimeLevel) -> Result<Vec<u64>, AppError> {
    let mut ds = index.big_d.clone();
    if let Some(m) = index.big_d_max {
        ds.extend(realized_squares(level, m));
    }
    if ds.is_empty() {
        ds.push(1);
    }
    for &big_d in &ds {
        realized_root(level, big_d)?;
    }
    ds.sort_unstable();
    ds.dedup();
    Ok(ds)
}

fn finish_report(ctx: &mut Ctx, kind: VerifyKind, grid: &GridArgs, reports: &[TupleReport]) -> Result<(), AppError> {
    let report = ReportJson::new(kind.as_str(), reports);
    let text = json_line(&report);
    match &grid.report {
        Some(path) => write_file(path, &text)?,
        None => ctx.print(&text)?,
    }
    let _ = writeln!(
        ctx.err,
        "{}: {}/{} tuples passed",
        kind.as_str(),
        report.total - report.failed,
        report.total
    );
    if report.failed > 0 {
        return Err(AppError::VerificationFailed {
            failed: report.failed,
            total: report.total,
        });
    }
    Ok(())
}

fn cmd_verify(ctx: &mut Ctx, kind: &VerifyCommand) -> Result<(), AppError> {
    match kind {
        VerifyCommand::Congruence { grid, n } => {
            let level = level(grid.p)?;
            check_hecke_prime(level, grid.ell)?;
            if *n == 0 {
                return Err(AppError::Invalid("--n must be at least 1".to_string()));
            }
            for &d in &grid.d {
                congruence_hypotheses(level, grid.ell, d)?;
            }
            let ds: Vec<u64> = grid_ds(grid, level)?.into_iter().filter(|&d| splits(grid.ell, d)).collect();
            let mut engine = ctx.engine(&grid.precision)?;
            let reports: Vec<TupleReport> =
                engine.run(|o| ds.iter().map(|&d| verify_congruence(o, level, grid.ell, d, *n)).collect())?;
            finish_report(ctx, VerifyKind::Congruence, grid, &reports)
        }
        VerifyCommand::Recurrence { grid, index, n } => {
            let level = level(grid.p)?;
            check_hecke_prime(level, grid.ell)?;
            if *n == 0 {
                return Err(AppError::Invalid("--n must be at least 1".to_string()));
            }
            let ds = grid_ds(grid, level)?;
            let big_ds = index_list(index, level)?;
            let mut engine = ctx.engine(&grid.precision)?;
            let reports = engine.run(|o| {
                let mut out = Vec::new();
                for &big_d in &big_ds {
                    for &d in &ds {
                        out.push(verify_recurrence(o, level, grid.ell, big_d, d, *n)?);
                    }
                }
                Ok(out)
            })?;
            finish_report(ctx, VerifyKind::Recurrence, grid, &reports)
        }
        VerifyCommand::CoeffIdentities { grid, index } => {
            let level = level(grid.p)?;
            check_hecke_prime(level, grid.ell)?;
            let ds = grid_ds(grid, level)?;
            let big_ds = index_list(index, level)?;
            let mut engine = ctx.engine(&grid.precision)?;
            let reports = engine.run(|o| verify_coeff_identities(o, level, grid.ell, &big_ds, &ds))?;
            finish_report(ctx, VerifyKind::CoeffIdentities, grid, &reports)
        }
    }
}

fn cmd_cache(ctx: &mut Ctx, action: &CacheCommand) -> Result<(), AppError> {
    let path = ctx
        .cache
        .clone()
        .ok_or_else(|| AppError::Invalid("cache commands need a cache; drop --no-cache".to_string()))?;
    let store = TraceStore::open(&path)?;
    match action {
        CacheCommand::Stats { format } => {
            let mut by_level: BTreeMap<u64, usize> = BTreeMap::new();
            let mut by_index: BTreeMap<u64, usize> = BTreeMap::new();
            let mut by_method: BTreeMap<&str, usize> = BTreeMap::new();
            for r in store.records() {
                *by_level.entry(r.key.p).or_default() += 1;
                *by_index.entry(r.key.index).or_default() += 1;
                *by_method.entry(r.method.as_str()).or_default() += 1;
            }
            let text = match format {
                OutputFormat::Json | OutputFormat::Csv => json_line(&json!({
                    "path": path.display().to_string(),
                    "records": store.len(),
                    "lines": store.line_count(),
                    "by_p": by_level,
                    "by_D": by_index,
                    "by_method": by_method,
                })),
                OutputFormat::Text => {
                    let mut s = format!("{}: {} records, {} lines\n", path.display(), store.len(), store.line_count());
                    for (p, n) in &by_level {
                        s.push_str(&format!("  p = {p}: {n}\n"));
                    }
                    for (i, n) in &by_index {
                        s.push_str(&format!("  D = {i}: {n}\n"));
                    }
                    for (m, n) in &by_method {
                        s.push_str(&format!("  {m}: {n}\n"));
                    }
                    s
                }
            };
            ctx.print(&text)
        }
        CacheCommand::Verify { recompute, precision } => {
            let mut mismatches = 0usize;
            if *recompute {
                let opts = trace_options(precision, ctx.env_floor.as_deref())?;
                let mut engine = Engine::new(opts, None);
                let keys: Vec<TraceKey> = store.records().map(|r| r.key).collect();
                engine.prefetch(keys.iter().copied())?;
                for r in store.records() {
                    let fresh = engine.get(r.key)?.value().clone();
                    if fresh != r.value {
                        mismatches += 1;
                        let _ = writeln!(
                            ctx.err,
                            "mismatch p={} D={} d={}: cached {} recomputed {}",
                            r.key.p, r.key.index, r.key.d, r.value, fresh
                        );
                    }
                }
            }
            ctx.print(&format!(
                "{}: {} records ok{}\n",
                path.display(),
                store.len() - mismatches,
                if *recompute { " (recomputed)" } else { "" }
            ))?;
            if mismatches > 0 {
                return Err(AppError::VerificationFailed {
                    failed: mismatches,
                    total: store.len(),
                });
            }
            Ok(())
        }
    }
}

fn dispatch(ctx: &mut Ctx, cli: &Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Hauptmodul { p, terms, format } => cmd_hauptmodul(ctx, *p, *terms, *format),
        Command::Classes { p, d, method, format } => cmd_classes(ctx, *p, *d, *method, *format),
        Command::Trace {
            p,
            d,
            big_d,
            precision,
            format,
        } => cmd_trace(ctx, *p, *d, *big_d, precision, *format),
        Command::TraceTable {
            p,
            dmax,
            big_d,
            out,
            precision,
            format,
        } => cmd_trace_table(ctx, *p, *dmax, *big_d, out.as_deref(), precision, *format),
        Command::Verify { kind } => cmd_verify(ctx, kind),
        Command::Cache { action } => cmd_cache(ctx, action),
    }
}

/// Parses `args`, runs the command and returns the process exit code. Errors are
/// printed to `err` as one JSON object.
pub fn run_with<I, T>(args: I, env_floor: Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = writeln!(
                err,
                "{}",
                json!({"error": "invalid_input", "message": e.to_string().trim_end(), "exit_code": 2})
            );
            return 2;
        }
    };
    let mut ctx = Ctx {
        cache: (!cli.no_cache).then(|| cli.cache.clone()),
        env_floor,
        out,
        err,
    };
    match dispatch(&mut ctx, &cli) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(ctx.err, "{}", e.to_json());
            e.exit_code()
        }
    }
}

/// [`run_with`] reading the precision floor from the environment.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, std::env::var(PREC_BITS_ENV).ok(), out, err)
}

/// t(d) through a fresh in-memory engine.
pub fn quick_trace(level: PrimeLevel, d: u64) -> Result<num_bigint::BigInt, AppError> {
    let mut engine = Engine::new(TraceOptions::default(), None);
    engine.run(|o| trace_value(o, level, d))
}
