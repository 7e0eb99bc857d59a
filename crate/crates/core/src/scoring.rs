//! Application-level unconventionality from focal-pair z-scores.
//!
//! For an application with focal subclass `f` and other subclasses `x_i`,
//! `L` aggregates the z-scores of the pairs `(f, x_i)` (minimum by default)
//! and `p_atypical = -L`, so positive values mark unconventional
//! applications.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CpcCode, PatentApplication};
use crate::nullmodel::ZSnapshot;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("application {0} has fewer than two distinct subclasses")]
    Unscoreable(String),
    #[error("no z-score snapshot for network year {0}")]
    SnapshotMissing(i32),
    #[error("unknown {what} {value:?}")]
    Parse { what: &'static str, value: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Min,
    Mean,
    Median,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Min => "min",
            Aggregation::Mean => "mean",
            Aggregation::Median => "median",
        })
    }
}

impl FromStr for Aggregation {
    type Err = ScoringError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(Aggregation::Min),
            "mean" => Ok(Aggregation::Mean),
            "median" => Ok(Aggregation::Median),
            _ => Err(ScoringError::Parse { what: "aggregation", value: s.into() }),
        }
    }
}

/// Which cumulative network an application is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimingPolicy {
    /// Network through the year before filing (excludes the application itself).
    #[default]
    Prior,
    /// Network through the filing year.
    Same,
}

impl TimingPolicy {
    pub fn network_year(self, filing_year: i32) -> i32 {
        match self {
            TimingPolicy::Prior => filing_year - 1,
            TimingPolicy::Same => filing_year,
        }
    }
}

impl fmt::Display for TimingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimingPolicy::Prior => "prior",
            TimingPolicy::Same => "same",
        })
    }
}

impl FromStr for TimingPolicy {
    type Err = ScoringError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prior" => Ok(TimingPolicy::Prior),
            "same" => Ok(TimingPolicy::Same),
            _ => Err(ScoringError::Parse { what: "timing policy", value: s.into() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub app_id: String,
    pub aggregation: Aggregation,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub p_atypical: Option<f64>,
    pub n_focal_pairs: usize,
    pub n_excluded_pairs: usize,
    pub network_year: i32,
}

/// `(focal, other)` for every distinct non-focal subclass, in listing order.
pub fn focal_pairs(patent: &PatentApplication) -> Result<Vec<(CpcCode, CpcCode)>, ScoringError> {
    let codes = patent.distinct_subclasses();
    if codes.len() < 2 {
        return Err(ScoringError::Unscoreable(patent.app_id.clone()));
    }
    let focal = codes[0];
    Ok(codes[1..].iter().map(|&c| (focal, c)).collect())
}

/// Aggregates z-values. Values are sorted first so the result does not
/// depend on input order.
pub fn aggregate(values: &[f64], aggregation: Aggregation) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(match aggregation {
        Aggregation::Min => v[0],
        Aggregation::Mean => v.iter().sum::<f64>() / n as f64,
        Aggregation::Median if n % 2 == 1 => v[n / 2],
        Aggregation::Median => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    })
}

/// Year-indexed z-score snapshots.
#[derive(Debug, Clone, Default)]
pub struct SnapshotSet {
    by_year: BTreeMap<i32, ZSnapshot>,
}

impl SnapshotSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, snap: ZSnapshot) {
        self.by_year.insert(snap.year_t, snap);
    }

    pub fn get(&self, year: i32) -> Option<&ZSnapshot> {
        self.by_year.get(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.by_year.keys().copied()
    }
}

impl FromIterator<ZSnapshot> for SnapshotSet {
    fn from_iter<I: IntoIterator<Item = ZSnapshot>>(iter: I) -> Self {
        let mut s = SnapshotSet::new();
        for snap in iter {
            s.insert(snap);
        }
        s
    }
}

/// Scores one application against the snapshot for `network_year`.
/// Pairs with undefined z, or absent from the snapshot, are excluded and
/// counted.
pub fn score_patent(
    patent: &PatentApplication,
    snapshots: &SnapshotSet,
    network_year: i32,
    aggregation: Aggregation,
) -> Result<ScoreResult, ScoringError> {
    let snap = snapshots
        .get(network_year)
        .ok_or(ScoringError::SnapshotMissing(network_year))?;
    score_against(patent, snap, aggregation)
}

pub fn score_against(
    patent: &PatentApplication,
    snap: &ZSnapshot,
    aggregation: Aggregation,
) -> Result<ScoreResult, ScoringError> {
    let pairs = focal_pairs(patent)?;
    let z: Vec<f64> = pairs
        .iter()
        .filter_map(|&(f, x)| snap.get(f, x).and_then(|s| s.z))
        .collect();
    let l = aggregate(&z, aggregation);
    Ok(ScoreResult {
        app_id: patent.app_id.clone(),
        aggregation,
        l,
        p_atypical: l.map(|l| -l),
        n_focal_pairs: z.len(),
        n_excluded_pairs: pairs.len() - z.len(),
        network_year: snap.year_t,
    })
}

/// Scores every record against the snapshot its timing policy selects.
/// Fails before scoring anything when a required year is missing.
pub fn score_corpus(
    records: &[PatentApplication],
    snapshots: &SnapshotSet,
    timing: TimingPolicy,
    aggregation: Aggregation,
) -> Result<Vec<ScoreResult>, ScoringError> {
    let mut needed: Vec<i32> = records
        .iter()
        .map(|r| timing.network_year(r.filing_year()))
        .collect();
    needed.sort_unstable();
    needed.dedup();
    if let Some(&y) = needed.iter().find(|&&y| snapshots.get(y).is_none()) {
        return Err(ScoringError::SnapshotMissing(y));
    }
    records
        .par_iter()
        .map(|r| score_patent(r, snapshots, timing.network_year(r.filing_year()), aggregation))
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SCORE_COLUMNS: [&str; 7] = [
    "app_id",
    "network_year",
    "aggregation",
    "L",
    "p_atypical",
    "n_focal_pairs",
    "n_excluded_pairs",
];

pub fn write_scores<W: Write>(out: W, scores: &[ScoreResult]) -> Result<(), ScoringError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_COLUMNS)?;
    for s in scores {
        w.write_record([
            s.app_id.clone(),
            s.network_year.to_string(),
            s.aggregation.to_string(),
            fmt_opt(s.l),
            fmt_opt(s.p_atypical),
            s.n_focal_pairs.to_string(),
            s.n_excluded_pairs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores<R: std::io::Read>(input: R) -> Result<Vec<ScoreResult>, ScoringError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    let bad = |what: &'static str, v: &str| ScoringError::Parse { what, value: v.into() };
    let opt = |v: &str| -> Result<Option<f64>, ScoringError> {
        if v.is_empty() {
            Ok(None)
        } else {
            v.parse().map(Some).map_err(|_| bad("score", v))
        }
    };
    for row in r.records() {
        let row = row?;
        if row.len() != SCORE_COLUMNS.len() {
            return Err(bad("score row", &format!("{row:?}")));
        }
        out.push(ScoreResult {
            app_id: row[0].to_string(),
            network_year: row[1].parse().map_err(|_| bad("network year", &row[1]))?,
            aggregation: row[2].parse()?,
            l: opt(&row[3])?,
            p_atypical: opt(&row[4])?,
            n_focal_pairs: row[5].parse().map_err(|_| bad("pair count", &row[5]))?,
            n_excluded_pairs: row[6].parse().map_err(|_| bad("pair count", &row[6]))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccur::CodePair;
    use crate::corpus::tests::minimal;
    use crate::nullmodel::PairStats;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn code(s: &str) -> CpcCode {
        CpcCode::parse(s).unwrap()
    }

    /// Snapshot with `z` set directly for the given focal pairs.
    fn snapshot(year: i32, zs: &[(&str, &str, Option<f64>)]) -> ZSnapshot {
        let pairs: HashMap<_, _> = zs
            .iter()
            .map(|(a, b, z)| {
                (
                    CodePair::new(code(a), code(b)).unwrap(),
                    PairStats { observed: 0, mu: 0.0, sigma: 1.0, z: *z },
                )
            })
            .collect();
        ZSnapshot { year_t: year, replicates: 100, master_seed: 0, pairs }
    }

    #[test]
    fn focal_pairs_in_listing_order() {
        let p = minimal("x", "2007-01-01", &["A61B", "H04N", "G08B", "H04Q"]);
        let pairs: Vec<_> = focal_pairs(&p)
            .unwrap()
            .into_iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .collect();
        assert_eq!(pairs, ["A61B-H04N", "A61B-G08B", "A61B-H04Q"]);

        let p = minimal("y", "2007-01-01", &["A01A", "B01B", "B01B"]);
        assert_eq!(focal_pairs(&p).unwrap().len(), 1);
        let p = minimal("z", "2007-01-01", &["A01A", "A01A"]);
        assert!(matches!(focal_pairs(&p), Err(ScoringError::Unscoreable(_))));
    }

    #[test]
    fn most_uncommon_link_dominates_min() {
        let p = minimal("x", "2007-01-01", &["A61B", "H04N", "G08B", "H04Q"]);
        let snaps: SnapshotSet = [snapshot(
            2006,
            &[("A61B", "H04N", Some(-25.9)), ("A61B", "G08B", Some(-3.0)), ("A61B", "H04Q", Some(-1.1))],
        )]
        .into_iter()
        .collect();
        let r = score_patent(&p, &snaps, 2006, Aggregation::Min).unwrap();
        assert_eq!(r.p_atypical, Some(25.9));
        assert_eq!(r.l, Some(-25.9));
        assert_eq!(r.n_focal_pairs, 3);
    }

    #[test]
    fn arithmetic_identities() {
        assert_eq!(aggregate(&[-2.0, -4.0, 6.0], Aggregation::Mean), Some(0.0));
        assert_eq!(aggregate(&[-2.0, -4.0, 6.0], Aggregation::Min), Some(-4.0));
        assert_eq!(aggregate(&[-2.0, -4.0, 6.0], Aggregation::Median), Some(-2.0));
        assert_eq!(aggregate(&[1.0, 3.0], Aggregation::Median), Some(2.0));
        for agg in [Aggregation::Min, Aggregation::Mean, Aggregation::Median] {
            assert_eq!(aggregate(&[0.0], agg), Some(0.0));
        }
        assert_eq!(aggregate(&[], Aggregation::Min), None);
    }

    #[test]
    fn undefined_and_absent_pairs_are_excluded() {
        let p = minimal("x", "2007-01-01", &["A61B", "H04N", "G08B", "H04Q"]);
        let snaps: SnapshotSet = [snapshot(2006, &[("A61B", "H04N", None), ("A61B", "G08B", Some(1.5))])]
            .into_iter()
            .collect();
        let r = score_patent(&p, &snaps, 2006, Aggregation::Min).unwrap();
        assert_eq!(r.p_atypical, Some(-1.5));
        assert_eq!(r.n_focal_pairs, 1);
        assert_eq!(r.n_excluded_pairs, 2);

        let q = minimal("y", "2007-01-01", &["A61B", "H04N"]);
        let r = score_patent(&q, &snaps, 2006, Aggregation::Min).unwrap();
        assert_eq!(r.l, None);
        assert_eq!(r.p_atypical, None);
    }

    #[test]
    fn corpus_timing_and_missing_years() {
        let recs = vec![
            minimal("a", "2005-03-01", &["A61B", "G08B"]),
            minimal("b", "2005-04-01", &["A61B", "H04N"]),
        ];
        let snaps: SnapshotSet = [
            snapshot(2004, &[("A61B", "G08B", Some(2.0))]),
            snapshot(2005, &[("A61B", "G08B", Some(-7.0))]),
        ]
        .into_iter()
        .collect();
        let prior = score_corpus(&recs, &snaps, TimingPolicy::Prior, Aggregation::Min).unwrap();
        assert_eq!(prior[0].network_year, 2004);
        assert_eq!(prior[0].p_atypical, Some(-2.0));
        assert_eq!(prior[1].p_atypical, None);
        let same = score_corpus(&recs, &snaps, TimingPolicy::Same, Aggregation::Min).unwrap();
        assert_eq!(same[0].p_atypical, Some(7.0));

        assert!(score_corpus(&[], &SnapshotSet::new(), TimingPolicy::Prior, Aggregation::Min).unwrap().is_empty());
        let only_2005: SnapshotSet = [snapshot(2005, &[])].into_iter().collect();
        assert!(matches!(
            score_corpus(&recs, &only_2005, TimingPolicy::Prior, Aggregation::Min),
            Err(ScoringError::SnapshotMissing(2004))
        ));
    }

    #[test]
    fn score_table_round_trip() {
        let rows = vec![
            ScoreResult {
                app_id: "a".into(),
                aggregation: Aggregation::Median,
                l: Some(-1.25),
                p_atypical: Some(1.25),
                n_focal_pairs: 2,
                n_excluded_pairs: 1,
                network_year: 2004,
            },
            ScoreResult {
                app_id: "b".into(),
                aggregation: Aggregation::Min,
                l: None,
                p_atypical: None,
                n_focal_pairs: 0,
                n_excluded_pairs: 3,
                network_year: 2004,
            },
        ];
        let mut buf = Vec::new();
        write_scores(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("app_id,network_year,aggregation,L,p_atypical,n_focal_pairs,n_excluded_pairs\n"));
        assert_eq!(read_scores(buf.as_slice()).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn min_dominates_and_order_is_irrelevant(mut z in prop::collection::vec(-50.0f64..50.0, 1..8), k in 0usize..8) {
            let p = |agg| -aggregate(&z, agg).unwrap();
            let (pmin, pmean, pmed) = (p(Aggregation::Min), p(Aggregation::Mean), p(Aggregation::Median));
            prop_assert!(pmin >= pmean && pmin >= pmed);
            let n = z.len();
            z.rotate_left(k % n);
            prop_assert_eq!(-aggregate(&z, Aggregation::Mean).unwrap(), pmean);
            prop_assert_eq!(-aggregate(&z, Aggregation::Median).unwrap(), pmed);
        }
    }
}
