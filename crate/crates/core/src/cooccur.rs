//! Cumulative CPC subclass co-occurrence networks.
//!
//! A network for year `t` counts, over every scoreable application filed in
//! or before `t`, how many applications list each unordered pair of distinct
//! subclasses. It also keeps the margins the null model needs: how many
//! applications use each subclass, and how many applications carry `k`
//! distinct subclasses.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CpcCode, PatentApplication};

#[derive(Debug, Error)]
pub enum CooccurError {
    #[error("record {app_id} filed in {year}, after network year {year_t}")]
    FutureRecord { app_id: String, year: i32, year_t: i32 },
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Unordered pair of distinct subclasses, stored with `lo < hi`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodePair {
    lo: CpcCode,
    hi: CpcCode,
}

impl CodePair {
    /// `None` for a self-pair.
    pub fn new(a: CpcCode, b: CpcCode) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(CodePair { lo: a, hi: b }),
            std::cmp::Ordering::Greater => Some(CodePair { lo: b, hi: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> CpcCode {
        self.lo
    }

    pub fn hi(&self) -> CpcCode {
        self.hi
    }

    pub fn contains(&self, c: CpcCode) -> bool {
        self.lo == c || self.hi == c
    }
}

impl fmt::Debug for CodePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CooccurrenceNetwork {
    pub year_t: i32,
    pub pair_counts: HashMap<CodePair, u64>,
    /// Number of applications listing each subclass.
    pub code_usage: HashMap<CpcCode, u64>,
    pub n_patents: u64,
    /// Distinct-subclass count per application, as a multiset `k -> #apps`.
    pub slot_counts: BTreeMap<usize, u64>,
}

pub(crate) fn distinct_codes(codes: &[CpcCode]) -> Vec<CpcCode> {
    let mut out: Vec<CpcCode> = Vec::with_capacity(codes.len());
    for c in codes {
        if !out.contains(c) {
            out.push(*c);
        }
    }
    out
}

impl CooccurrenceNetwork {
    pub fn empty(year_t: i32) -> Self {
        CooccurrenceNetwork {
            year_t,
            ..Default::default()
        }
    }

    /// Adds one application's distinct subclasses.
    pub fn add_patent(&mut self, codes: &[CpcCode]) {
        let codes = distinct_codes(codes);
        for (i, a) in codes.iter().enumerate() {
            *self.code_usage.entry(*a).or_insert(0) += 1;
            for b in &codes[i + 1..] {
                let pair = CodePair::new(*a, *b).expect("distinct codes");
                *self.pair_counts.entry(pair).or_insert(0) += 1;
            }
        }
        *self.slot_counts.entry(codes.len()).or_insert(0) += 1;
        self.n_patents += 1;
    }

    pub fn pair_count(&self, pair: &CodePair) -> u64 {
        self.pair_counts.get(pair).copied().unwrap_or(0)
    }

    pub fn total_pair_count(&self) -> u64 {
        self.pair_counts.values().sum()
    }

    /// `Σ_p C(k_p, 2)` from the slot multiset.
    pub fn slot_pair_total(&self) -> u64 {
        self.slot_counts
            .iter()
            .map(|(&k, &n)| n * (k as u64) * (k as u64).saturating_sub(1) / 2)
            .sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.code_usage.values().sum()
    }

    /// Subclasses sorted lexically.
    pub fn codes(&self) -> Vec<CpcCode> {
        let mut v: Vec<_> = self.code_usage.keys().copied().collect();
        v.sort();
        v
    }

    pub fn sorted_pairs(&self) -> Vec<(CodePair, u64)> {
        let mut v: Vec<_> = self.pair_counts.iter().map(|(p, c)| (*p, *c)).collect();
        v.sort_by_key(|(p, _)| *p);
        v
    }

    /// Writes the snapshot: one JSON header line carrying `year_t`,
    /// `n_patents` and the margins, followed by `pair_a,pair_b,count` CSV
    /// sorted by pair.
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), CooccurError> {
        let header = NetworkHeader {
            format: NETWORK_FORMAT.to_string(),
            year_t: self.year_t,
            n_patents: self.n_patents,
            code_usage: self
                .code_usage
                .iter()
                .map(|(c, n)| (c.subclass().to_string(), *n))
                .collect(),
            slot_counts: self.slot_counts.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pair_a", "pair_b", "count"])?;
        for (pair, count) in self.sorted_pairs() {
            w.write_record([pair.lo.subclass(), pair.hi.subclass(), &count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(mut input: R) -> Result<Self, CooccurError> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let header: NetworkHeader = serde_json::from_str(first.trim_end())?;
        if header.format != NETWORK_FORMAT {
            return Err(CooccurError::Snapshot(format!("unsupported format {:?}", header.format)));
        }
        let code_usage = header
            .code_usage
            .iter()
            .map(|(c, n)| Ok((CpcCode::parse(c)?, *n)))
            .collect::<Result<HashMap<_, _>, CorpusError>>()?;
        let mut pair_counts = HashMap::new();
        let mut r = csv::Reader::from_reader(input);
        for row in r.records() {
            let row = row?;
            if row.len() != 3 {
                return Err(CooccurError::Snapshot(format!("expected 3 columns, got {}", row.len())));
            }
            let a = CpcCode::parse(&row[0])?;
            let b = CpcCode::parse(&row[1])?;
            let pair = CodePair::new(a, b)
                .ok_or_else(|| CooccurError::Snapshot(format!("self-pair {a}")))?;
            let count: u64 = row[2]
                .parse()
                .map_err(|e| CooccurError::Snapshot(format!("bad count {:?}: {e}", &row[2])))?;
            pair_counts.insert(pair, count);
        }
        Ok(CooccurrenceNetwork {
            year_t: header.year_t,
            pair_counts,
            code_usage,
            n_patents: header.n_patents,
            slot_counts: header.slot_counts,
        })
    }
}

const NETWORK_FORMAT: &str = "cooccur-network/1";

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    format: String,
    year_t: i32,
    n_patents: u64,
    code_usage: BTreeMap<String, u64>,
    slot_counts: BTreeMap<usize, u64>,
}

/// Element-wise sum of two networks built from disjoint record sets. The
/// result carries the later of the two years.
pub fn merge_networks(a: &CooccurrenceNetwork, b: &CooccurrenceNetwork) -> CooccurrenceNetwork {
    let mut out = a.clone();
    out.absorb(b);
    out
}

impl CooccurrenceNetwork {
    fn absorb(&mut self, other: &CooccurrenceNetwork) {
        self.year_t = self.year_t.max(other.year_t);
        for (p, c) in &other.pair_counts {
            *self.pair_counts.entry(*p).or_insert(0) += c;
        }
        for (k, c) in &other.code_usage {
            *self.code_usage.entry(*k).or_insert(0) += c;
        }
        for (k, c) in &other.slot_counts {
            *self.slot_counts.entry(*k).or_insert(0) += c;
        }
        self.n_patents += other.n_patents;
    }
}

/// Builds `A_t` from records filed in or before `year_t`.
///
/// Work is split across the current rayon pool; counts are integers, so the
/// result does not depend on the partitioning.
pub fn build_network(records: &[PatentApplication], year_t: i32) -> Result<CooccurrenceNetwork, CooccurError> {
    let refs: Vec<&PatentApplication> = records.iter().collect();
    build_from_refs(&refs, year_t)
}

fn build_from_refs(records: &[&PatentApplication], year_t: i32) -> Result<CooccurrenceNetwork, CooccurError> {
    if let Some(r) = records.iter().find(|r| r.filing_year() > year_t) {
        return Err(CooccurError::FutureRecord {
            app_id: r.app_id.clone(),
            year: r.filing_year(),
            year_t,
        });
    }
    Ok(records
        .par_chunks(4096)
        .map(|chunk| {
            let mut net = CooccurrenceNetwork::empty(year_t);
            for r in chunk {
                net.add_patent(&r.cpc_codes);
            }
            net
        })
        .reduce(
            || CooccurrenceNetwork::empty(year_t),
            |mut a, b| {
                a.absorb(&b);
                a
            },
        ))
}

/// One cumulative network per year in `first..=last`; the first one also
/// holds every record filed before `first`. Records after `last` are ignored.
pub fn build_cumulative(
    records: &[PatentApplication],
    first: i32,
    last: i32,
) -> Result<Vec<CooccurrenceNetwork>, CooccurError> {
    let mut by_year: BTreeMap<i32, Vec<&PatentApplication>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.filing_year() <= last) {
        by_year.entry(r.filing_year().max(first)).or_default().push(r);
    }
    let mut out = Vec::new();
    let mut current = CooccurrenceNetwork::empty(first);
    for year in first..=last {
        let layer = build_from_refs(by_year.get(&year).map(Vec::as_slice).unwrap_or(&[]), year)?;
        current.absorb(&layer);
        current.year_t = year;
        out.push(current.clone());
    }
    Ok(out)
}
