//! Patent-application records: CPC parsing, JSON-Lines ingestion, validation
//! and the scoreability filter.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid CPC code {raw:?}: {reason}")]
    InvalidCpc { raw: String, reason: &'static str },
    #[error("line {line}: {reason}")]
    Rejected { line: usize, reason: String },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// A CPC code truncated to the subclass level, e.g. `A61B`.
///
/// The four ASCII bytes are kept packed, so section (`A`), class (`A61`) and
/// subclass (`A61B`) are all prefixes of the same buffer.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CpcCode([u8; 4]);

const SECTIONS: &[u8] = b"ABCDEFGHY";

impl CpcCode {
    /// Parses a raw CPC string, truncating anything deeper than the subclass
    /// (`A61B5/02` becomes `A61B`).
    pub fn parse(raw: &str) -> Result<Self, CorpusError> {
        let err = |reason| CorpusError::InvalidCpc {
            raw: raw.to_string(),
            reason,
        };
        let trimmed = raw.trim();
        let bytes = trimmed.as_bytes();
        if bytes.len() < 4 {
            return Err(err("shorter than a subclass"));
        }
        let mut code = [0u8; 4];
        for (dst, src) in code.iter_mut().zip(bytes) {
            *dst = src.to_ascii_uppercase();
        }
        if !SECTIONS.contains(&code[0]) {
            return Err(err("section must be one of A-H or Y"));
        }
        if !(code[1].is_ascii_digit() && code[2].is_ascii_digit()) {
            return Err(err("class must be a section letter followed by two digits"));
        }
        if !code[3].is_ascii_uppercase() {
            return Err(err("subclass must end in a letter"));
        }
        Ok(CpcCode(code))
    }

    pub fn section(&self) -> char {
        self.0[0] as char
    }

    pub fn class(&self) -> &str {
        // Always ASCII by construction.
        std::str::from_utf8(&self.0[..3]).expect("ascii")
    }

    pub fn subclass(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii")
    }

    /// Big-endian packing; integer order equals lexical order of the subclass.
    pub fn packed(&self) -> u32 {
        u32::from_be_bytes(self.0)
    }

    pub fn from_packed(v: u32) -> Option<Self> {
        let s = v.to_be_bytes();
        std::str::from_utf8(&s).ok().and_then(|s| CpcCode::parse(s).ok())
    }
}

/// Free-function form of [`CpcCode::parse`].
pub fn validate_cpc(raw: &str) -> Result<CpcCode, CorpusError> {
    CpcCode::parse(raw)
}

impl FromStr for CpcCode {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CpcCode::parse(s)
    }
}

impl fmt::Display for CpcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.subclass())
    }
}

impl fmt::Debug for CpcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CpcCode({})", self.subclass())
    }
}

impl Serialize for CpcCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.subclass())
    }
}

impl<'de> Deserialize<'de> for CpcCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        CpcCode::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Country {
    US,
    UK,
    CA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Granted,
    Abandoned,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatentApplication {
    pub app_id: String,
    pub country: Country,
    pub filing_date: NaiveDate,
    pub grant_date: Option<NaiveDate>,
    pub status: Status,
    /// Element 0 is the focal code.
    pub cpc_codes: Vec<CpcCode>,
    pub inventor_names: Vec<String>,
    pub examiner_id: Option<String>,
    pub examiner_name: Option<String>,
    pub big_entity: Option<bool>,
    pub n_claims_app: Option<u32>,
    pub n_claims_grant: Option<u32>,
    pub citation_count_8yr: Option<u32>,
    pub maintenance_fee_paid: Option<bool>,
    pub credit_hours: Option<f64>,
    pub appealed: Option<bool>,
    pub reversed: Option<bool>,
}

impl PatentApplication {
    pub fn filing_year(&self) -> i32 {
        self.filing_date.year()
    }

    pub fn focal(&self) -> CpcCode {
        self.cpc_codes[0]
    }

    /// Distinct subclasses in first-occurrence order.
    pub fn distinct_subclasses(&self) -> Vec<CpcCode> {
        let mut seen = Vec::with_capacity(self.cpc_codes.len());
        for c in &self.cpc_codes {
            if !seen.contains(c) {
                seen.push(*c);
            }
        }
        seen
    }

    /// Grant outcome as a 0/1 response; `None` for pending applications.
    pub fn granted(&self) -> Option<bool> {
        match self.status {
            Status::Granted => Some(true),
            Status::Abandoned => Some(false),
            Status::Pending => None,
        }
    }

    /// Checks the record-level invariants, returning the first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.app_id.is_empty() {
            return Err("app_id empty".into());
        }
        if self.cpc_codes.is_empty() {
            return Err("cpc_codes empty".into());
        }
        match (self.status, self.grant_date) {
            (Status::Granted, None) => return Err("grant_date missing".into()),
            (Status::Abandoned | Status::Pending, Some(_)) => {
                return Err("grant_date present for non-granted status".into())
            }
            _ => {}
        }
        if self.reversed.is_some() && self.appealed != Some(true) {
            return Err("reversed present without appealed = true".into());
        }
        if let Some(h) = self.credit_hours {
            if !(h.is_finite() && h >= 0.0) {
                return Err("credit_hours must be a nonnegative number".into());
            }
        }
        Ok(())
    }
}

/// Wire form of a record: CPC codes stay raw strings so that bad codes can be
/// reported with their own reason rather than as a generic decode failure.
#[derive(Deserialize)]
struct RawRecord {
    app_id: String,
    country: Country,
    filing_date: NaiveDate,
    #[serde(default)]
    grant_date: Option<NaiveDate>,
    status: Status,
    cpc_codes: Vec<String>,
    #[serde(default)]
    inventor_names: Vec<String>,
    #[serde(default)]
    examiner_id: Option<String>,
    #[serde(default)]
    examiner_name: Option<String>,
    #[serde(default)]
    big_entity: Option<bool>,
    #[serde(default)]
    n_claims_app: Option<u32>,
    #[serde(default)]
    n_claims_grant: Option<u32>,
    #[serde(default)]
    citation_count_8yr: Option<u32>,
    #[serde(default)]
    maintenance_fee_paid: Option<bool>,
    #[serde(default)]
    credit_hours: Option<f64>,
    #[serde(default)]
    appealed: Option<bool>,
    #[serde(default)]
    reversed: Option<bool>,
}

impl RawRecord {
    fn into_record(self) -> Result<PatentApplication, String> {
        let cpc_codes = self
            .cpc_codes
            .iter()
            .map(|raw| CpcCode::parse(raw).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let rec = PatentApplication {
            app_id: self.app_id,
            country: self.country,
            filing_date: self.filing_date,
            grant_date: self.grant_date,
            status: self.status,
            cpc_codes,
            inventor_names: self.inventor_names,
            examiner_id: self.examiner_id,
            examiner_name: self.examiner_name,
            big_entity: self.big_entity,
            n_claims_app: self.n_claims_app,
            n_claims_grant: self.n_claims_grant,
            citation_count_8yr: self.citation_count_8yr,
            maintenance_fee_paid: self.maintenance_fee_paid,
            credit_hours: self.credit_hours,
            appealed: self.appealed,
            reversed: self.reversed,
        };
        rec.check()?;
        Ok(rec)
    }
}

/// One rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

fn parse_line(text: &str) -> Result<PatentApplication, String> {
    let raw: RawRecord =
        serde_json::from_str(text).map_err(|e| format!("malformed line: {e}"))?;
    raw.into_record()
}

/// Parses a JSON-Lines stream. Blank lines are skipped; line numbers are
/// 1-based. With `strict` the first rejected line aborts the parse.
///
/// Lines are decoded in parallel on the current rayon pool; output order is
/// input order.
pub fn parse_corpus<R: BufRead>(
    input: R,
    strict: bool,
) -> Result<(Vec<PatentApplication>, Vec<LineError>), CorpusError> {
    let lines: Vec<(usize, String)> = input
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .collect::<Result<_, _>>()?;

    let parsed: Vec<(usize, Result<PatentApplication, String>)> = lines
        .par_iter()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| (*n, parse_line(l)))
        .collect();

    let mut records = Vec::with_capacity(parsed.len());
    let mut errors = Vec::new();
    let mut seen_ids = std::collections::HashSet::with_capacity(parsed.len());
    for (line, res) in parsed {
        let res = res.and_then(|rec| {
            if seen_ids.insert(rec.app_id.clone()) {
                Ok(rec)
            } else {
                Err(format!("duplicate app_id {:?}", rec.app_id))
            }
        });
        match res {
            Ok(rec) => records.push(rec),
            Err(reason) if strict => return Err(CorpusError::Rejected { line, reason }),
            Err(reason) => errors.push(LineError { line, reason }),
        }
    }
    Ok((records, errors))
}

pub fn write_corpus<W: Write>(mut out: W, records: &[PatentApplication]) -> Result<(), CorpusError> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the rejected-line report as CSV with columns `line,reason`.
pub fn write_error_report<W: Write>(out: W, errors: &[LineError]) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["line", "reason"])?;
    for e in errors {
        w.write_record([e.line.to_string(), e.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFilter {
    pub min_year: i32,
    pub max_year: i32,
    #[serde(default = "default_min_subclasses")]
    pub min_subclasses: usize,
    #[serde(default = "all_countries")]
    pub countries: BTreeSet<Country>,
}

fn default_min_subclasses() -> usize {
    2
}

fn all_countries() -> BTreeSet<Country> {
    [Country::US, Country::UK, Country::CA].into_iter().collect()
}

impl CorpusFilter {
    pub fn new(min_year: i32, max_year: i32) -> Result<Self, CorpusError> {
        let f = CorpusFilter {
            min_year,
            max_year,
            min_subclasses: 2,
            countries: all_countries(),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_year > self.max_year {
            return Err(CorpusError::InvalidFilter(format!(
                "min_year {} > max_year {}",
                self.min_year, self.max_year
            )));
        }
        if self.min_subclasses < 2 {
            return Err(CorpusError::InvalidFilter(
                "min_subclasses must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn accepts(&self, rec: &PatentApplication) -> bool {
        let y = rec.filing_year();
        y >= self.min_year
            && y <= self.max_year
            && self.countries.contains(&rec.country)
            && rec.distinct_subclasses().len() >= self.min_subclasses
    }
}

/// Keeps records inside the year window with enough distinct subclasses.
/// Retained records have their duplicate subclasses collapsed.
pub fn filter_scoreable(records: &[PatentApplication], filter: &CorpusFilter) -> Vec<PatentApplication> {
    records
        .iter()
        .filter(|r| filter.accepts(r))
        .map(|r| {
            let mut r = r.clone();
            r.cpc_codes = r.distinct_subclasses();
            r
        })
        .collect()
}
