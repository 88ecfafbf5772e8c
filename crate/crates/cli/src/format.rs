//! Persisted and printed shapes. Big integers are always decimal strings.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use moduli_traces_core::qforms::{HeegnerClass, QuadForm};
use moduli_traces_core::qseries::TruncatedLaurentSeries;
use moduli_traces_core::traces::{TupleReport, ZeroConvention};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

/// `{"v": valuation, "N": order, "coeffs": [...]}` for the window [v, N).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesJson {
    pub v: i64,
    #[serde(rename = "N")]
    pub n: i64,
    pub coeffs: Vec<String>,
}

impl SeriesJson {
    pub fn from_series(s: &TruncatedLaurentSeries) -> Self {
        SeriesJson {
            v: s.valuation(),
            n: s.order(),
            coeffs: s.coeffs().iter().map(BigInt::to_string).collect(),
        }
    }

    pub fn to_series(&self) -> Result<TruncatedLaurentSeries, String> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| c.parse::<BigInt>().map_err(|e| format!("{c:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if self.v + coeffs.len() as i64 != self.n {
            return Err(format!("window [{}, {}) does not hold {} coefficients", self.v, self.n, coeffs.len()));
        }
        TruncatedLaurentSeries::new(self.v, coeffs).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassJson {
    pub beta: u64,
    pub sl2_rep: [i64; 3],
    pub line: u64,
    pub lifted: [i64; 3],
    pub eval_form: [i64; 3],
    pub omega: u32,
    pub height: f64,
}

fn triple(f: &QuadForm) -> [i64; 3] {
    [f.a, f.b, f.c]
}

impl From<&HeegnerClass> for ClassJson {
    fn from(c: &HeegnerClass) -> Self {
        ClassJson {
            beta: c.beta,
            sl2_rep: triple(&c.sl2_rep),
            line: c.line,
            lifted: triple(&c.lifted),
            eval_form: triple(&c.eval_form),
            omega: c.omega,
            height: c.eval_form.height(),
        }
    }
}

/// One row of a trace table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub d: u64,
    pub beta_count: usize,
    pub class_count: usize,
    pub trace: String,
}

pub fn rows_to_csv(rows: &[TableRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<TableRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckJson {
    pub name: String,
    pub lhs: String,
    pub rhs: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleJson {
    pub p: u64,
    pub ell: u64,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none", default)]
    pub big_d: Option<u64>,
    pub d: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<u32>,
    pub pass: bool,
    pub checks: Vec<CheckJson>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub conventions: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

fn convention_name(c: ZeroConvention) -> &'static str {
    match c {
        ZeroConvention::SmallDNotIntegral => "d/ell^2 not integral",
        ZeroConvention::SmallBigDNotIntegral => "D/ell^2 not integral",
        ZeroConvention::KroneckerZero => "(-d/ell) = 0",
    }
}

impl From<&TupleReport> for TupleJson {
    fn from(r: &TupleReport) -> Self {
        TupleJson {
            p: r.p,
            ell: r.ell,
            big_d: r.big_d,
            d: r.d,
            n: r.n,
            pass: r.passed(),
            checks: r
                .checks
                .iter()
                .map(|c| CheckJson {
                    name: c.name.to_string(),
                    lhs: c.lhs.to_string(),
                    rhs: c.rhs.to_string(),
                    pass: c.passed(),
                })
                .collect(),
            conventions: r.conventions.iter().map(|c| convention_name(*c).to_string()).collect(),
            notes: r.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportJson {
    pub kind: String,
    pub pass: bool,
    pub total: usize,
    pub failed: usize,
    pub tuples: Vec<TupleJson>,
}

impl ReportJson {
    pub fn new(kind: &str, reports: &[TupleReport]) -> Self {
        let tuples: Vec<TupleJson> = reports.iter().map(TupleJson::from).collect();
        let failed = tuples.iter().filter(|t| !t.pass).count();
        ReportJson {
            kind: kind.to_string(),
            pass: failed == 0,
            total: tuples.len(),
            failed,
            tuples,
        }
    }
}
