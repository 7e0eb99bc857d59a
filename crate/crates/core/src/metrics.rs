//! Derived covariates and closed-form estimators.
//!
//! Experience counts applications strictly before a reference date. Inventors
//! are identified by normalized full name. Every estimator can be wrapped in
//! an [`EstimatorReport`] that echoes its inputs next to its outputs.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::PatentApplication;
use crate::gender::{infer_gender, infer_team, Gender, GenderDict};
use crate::stats::{fit_glm, quantile_bins, Family, Frame, GlmSpec, StatsError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("application has no independent claims")]
    NoClaims,
    #[error("grant date {grant} precedes filing date {filing}")]
    GrantBeforeFiling { filing: NaiveDate, grant: NaiveDate },
    #[error("no gender-determined examiners in class {0}")]
    NoExaminers(String),
    #[error("empty conditioning cell: {0}")]
    EmptyCell(String),
    #[error("{name} = {value} outside [0, 1]")]
    Rate { name: &'static str, value: f64 },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tercile {
    Low,
    Mid,
    High,
}

impl Tercile {
    pub fn from_bin(bin: usize) -> Self {
        match bin {
            0 => Tercile::Low,
            1 => Tercile::Mid,
            _ => Tercile::High,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub person_id: String,
    pub as_of_date: NaiveDate,
    /// Prior applications; a mean for inventor teams.
    pub count: f64,
    pub tercile: Option<Tercile>,
}

#[derive(Debug, Clone, Copy)]
pub enum Subject<'a> {
    Examiner(&'a str),
    InventorTeam(&'a [String]),
}

/// Sorted filing dates per examiner and per inventor.
#[derive(Debug, Clone, Default)]
pub struct ExperienceIndex {
    examiners: HashMap<String, Vec<NaiveDate>>,
    inventors: HashMap<String, Vec<NaiveDate>>,
}

pub fn inventor_key(name: &str) -> String {
    crate::gender::normalize_name(name)
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl ExperienceIndex {
    pub fn build(records: &[PatentApplication]) -> Self {
        let mut idx = ExperienceIndex::default();
        for r in records {
            if let Some(e) = &r.examiner_id {
                idx.examiners.entry(e.clone()).or_default().push(r.filing_date);
            }
            for name in &r.inventor_names {
                idx.inventors.entry(inventor_key(name)).or_default().push(r.filing_date);
            }
        }
        for v in idx.examiners.values_mut().chain(idx.inventors.values_mut()) {
            v.sort_unstable();
        }
        idx
    }

    fn prior(dates: Option<&Vec<NaiveDate>>, as_of: NaiveDate) -> usize {
        dates.map_or(0, |d| d.partition_point(|&x| x < as_of))
    }

    pub fn examiner_prior(&self, id: &str, as_of: NaiveDate) -> usize {
        Self::prior(self.examiners.get(id), as_of)
    }

    pub fn inventor_prior(&self, name: &str, as_of: NaiveDate) -> usize {
        Self::prior(self.inventors.get(&inventor_key(name)), as_of)
    }

    /// Total applications handled by an examiner in the indexed records.
    pub fn examiner_total(&self, id: &str) -> usize {
        self.examiners.get(id).map_or(0, Vec::len)
    }
}

/// Unknown ids count zero prior applications.
pub fn experience(index: &ExperienceIndex, subject: Subject<'_>, as_of: NaiveDate) -> ExperienceRecord {
    let (person_id, count) = match subject {
        Subject::Examiner(id) => (id.to_string(), index.examiner_prior(id, as_of) as f64),
        Subject::InventorTeam(names) => {
            let mean = if names.is_empty() {
                0.0
            } else {
                names.iter().map(|n| index.inventor_prior(n, as_of) as f64).sum::<f64>() / names.len() as f64
            };
            (names.iter().map(|n| inventor_key(n)).collect::<Vec<_>>().join("|"), mean)
        }
    };
    ExperienceRecord {
        person_id,
        as_of_date: as_of,
        count,
        tercile: None,
    }
}

/// Assigns terciles over the whole population (ties to the lower bin) and
/// returns the cut points.
pub fn assign_terciles(records: &mut [ExperienceRecord]) -> Result<Vec<f64>, MetricsError> {
    let counts: Vec<f64> = records.iter().map(|r| r.count).collect();
    let qb = quantile_bins(&counts, 3)?;
    for (r, &b) in records.iter_mut().zip(&qb.bins) {
        r.tercile = Some(Tercile::from_bin(b));
    }
    Ok(qb.cuts)
}

/// `(n_app - n_grant, (n_app - n_grant) / n_app)`.
pub fn claims_delta(n_app: u32, n_grant: u32) -> Result<(i64, f64), MetricsError> {
    if n_app == 0 {
        return Err(MetricsError::NoClaims);
    }
    let d = i64::from(n_app) - i64::from(n_grant);
    Ok((d, d as f64 / f64::from(n_app)))
}

pub fn grant_latency(filing: NaiveDate, grant: NaiveDate) -> Result<i64, MetricsError> {
    if grant < filing {
        return Err(MetricsError::GrantBeforeFiling { filing, grant });
    }
    Ok((grant - filing).num_days())
}

/// `mean_exp_men * prop_men - mean_exp_women * prop_women`, with proportions
/// over the examiners in both slices. An empty group contributes zero.
pub fn survivorship_from_groups(men: &[f64], women: &[f64]) -> Result<f64, MetricsError> {
    let total = (men.len() + women.len()) as f64;
    if total == 0.0 {
        return Err(MetricsError::NoExaminers(String::new()));
    }
    let term = |g: &[f64]| {
        if g.is_empty() {
            0.0
        } else {
            g.iter().sum::<f64>() / g.len() as f64 * (g.len() as f64 / total)
        }
    };
    Ok(term(men) - term(women))
}

/// Survivorship index for one CPC class. An examiner belongs to the class
/// when they examined any application whose focal code is in it; their
/// experience is their total number of examined applications in `records`.
/// Examiner gender comes from `examiner_name`.
pub fn survivorship_index(
    records: &[PatentApplication],
    cpc_class: &str,
    dict: &GenderDict,
    threshold: f64,
) -> Result<f64, MetricsError> {
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    let mut in_class: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    for r in records {
        let Some(id) = r.examiner_id.as_deref() else { continue };
        *totals.entry(id).or_insert(0) += 1;
        if r.focal().class() == cpc_class {
            in_class.entry(id).or_insert(r.examiner_name.as_deref());
        }
    }
    let (mut men, mut women) = (Vec::new(), Vec::new());
    for (id, name) in in_class {
        let exp = totals[id] as f64;
        match name.map(|n| infer_gender(n, dict, threshold).value) {
            Some(Gender::Man) => men.push(exp),
            Some(Gender::Woman) => women.push(exp),
            _ => {}
        }
    }
    survivorship_from_groups(&men, &women).map_err(|_| MetricsError::NoExaminers(cpc_class.to_string()))
}

/// One application from an all-women or all-men team with a
/// gender-determined examiner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentObs {
    pub all_women_team: bool,
    pub woman_examiner: bool,
    pub year: i32,
    pub cpc_class: String,
}

pub fn assignment_observations(records: &[PatentApplication], dict: &GenderDict, threshold: f64) -> Vec<AssignmentObs> {
    records
        .iter()
        .filter_map(|r| {
            let team = infer_team(&r.inventor_names, dict, threshold).ok()?;
            if !(team.all_women || team.all_men) {
                return None;
            }
            let examiner = infer_gender(r.examiner_name.as_deref()?, dict, threshold).value;
            if examiner == Gender::Unknown {
                return None;
            }
            Some(AssignmentObs {
                all_women_team: team.all_women,
                woman_examiner: examiner == Gender::Woman,
                year: r.filing_year(),
                cpc_class: r.focal().class().to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverAssignment {
    pub p_woman_examiner_given_women_team: f64,
    pub p_woman_examiner_given_men_team: f64,
    pub ratio_based: f64,
    /// `exp(beta) - 1` from a logit of examiner gender on the all-women
    /// indicator with year and class fixed effects.
    pub logit_based: f64,
    pub beta: f64,
    pub beta_se: Option<f64>,
    pub n_obs: usize,
}

pub fn over_assignment(obs: &[AssignmentObs]) -> Result<OverAssignment, MetricsError> {
    let rate = |team: bool| {
        let cell: Vec<_> = obs.iter().filter(|o| o.all_women_team == team).collect();
        if cell.is_empty() {
            return Err(MetricsError::EmptyCell(
                if team { "all-women teams" } else { "all-men teams" }.into(),
            ));
        }
        Ok(cell.iter().filter(|o| o.woman_examiner).count() as f64 / cell.len() as f64)
    };
    let (pw, pm) = (rate(true)?, rate(false)?);
    if pm == 0.0 {
        return Err(MetricsError::EmptyCell("no women examiners for all-men teams".into()));
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let data = Frame::new()
        .with_values("woman_examiner", &obs.iter().map(|o| flag(o.woman_examiner)).collect::<Vec<_>>())?
        .with_values("all_women_team", &obs.iter().map(|o| flag(o.all_women_team)).collect::<Vec<_>>())?
        .with_labels("year", &obs.iter().map(|o| o.year).collect::<Vec<_>>())?
        .with_labels("cpc_class", &obs.iter().map(|o| o.cpc_class.clone()).collect::<Vec<_>>())?;
    let spec = GlmSpec::new(Family::Logistic, "woman_examiner")
        .continuous("all_women_team")
        .fixed_effect("year")
        .fixed_effect("cpc_class");
    let fit = fit_glm(&spec, &data)?;
    let j = fit
        .index("all_women_team")
        .ok_or_else(|| MetricsError::EmptyCell("all-women indicator dropped as collinear".into()))?;
    let beta = fit.coefficients[j];
    Ok(OverAssignment {
        p_woman_examiner_given_women_team: pw,
        p_woman_examiner_given_men_team: pm,
        ratio_based: pw / pm - 1.0,
        logit_based: beta.exp() - 1.0,
        beta,
        beta_se: fit.se[j],
        n_obs: fit.n_obs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalObs {
    pub experience_bin: usize,
    pub p_atypical: f64,
    pub appealed: Option<bool>,
    pub reversed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalCell {
    pub experience_bin: usize,
    pub unconventional: bool,
    pub appealed: usize,
    pub reversed: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalTable {
    pub cells: Vec<ReversalCell>,
    /// Appealed rows with `p_atypical == 0`, counted as conventional.
    pub exact_zero: usize,
}

impl ReversalTable {
    pub fn cell(&self, bin: usize, unconventional: bool) -> Option<&ReversalCell> {
        self.cells
            .iter()
            .find(|c| c.experience_bin == bin && c.unconventional == unconventional)
    }
}

/// Reversed/appealed rate per experience bin and conventionality
/// (`p_atypical > 0` is unconventional).
pub fn reversal_rates(rows: &[ReversalObs], n_bins: usize) -> ReversalTable {
    let mut tally = vec![[(0usize, 0usize); 2]; n_bins];
    let mut exact_zero = 0;
    for r in rows.iter().filter(|r| r.appealed == Some(true) && r.experience_bin < n_bins) {
        let side = usize::from(r.p_atypical > 0.0);
        if r.p_atypical == 0.0 {
            exact_zero += 1;
        }
        let t = &mut tally[r.experience_bin][side];
        t.0 += 1;
        t.1 += usize::from(r.reversed == Some(true));
    }
    let cells = tally
        .iter()
        .enumerate()
        .flat_map(|(bin, sides)| {
            sides.iter().enumerate().map(move |(side, &(appealed, reversed))| ReversalCell {
                experience_bin: bin,
                unconventional: side == 1,
                appealed,
                reversed,
                rate: (appealed > 0).then(|| reversed as f64 / appealed as f64),
            })
        })
        .collect();
    ReversalTable { cells, exact_zero }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LostValue {
    pub lost_patents: i64,
    pub lost_dollars: f64,
    /// True when women's rate exceeds men's and the loss is negative.
    pub reversed_gap: bool,
}

pub fn lost_value(n_apps: u64, rate_men: f64, rate_women: f64, per_patent_value: f64) -> Result<LostValue, MetricsError> {
    check_rate("rate_men", rate_men)?;
    check_rate("rate_women", rate_women)?;
    let lost_patents = (n_apps as f64 * (rate_men - rate_women)).floor() as i64;
    Ok(LostValue {
        lost_patents,
        lost_dollars: lost_patents as f64 * per_patent_value,
        reversed_gap: rate_women > rate_men,
    })
}

pub fn reassignment_gain(rate_high: f64, rate_low: f64, reassigned_fraction: f64) -> Result<f64, MetricsError> {
    check_rate("rate_high", rate_high)?;
    check_rate("rate_low", rate_low)?;
    check_rate("reassigned_fraction", reassigned_fraction)?;
    Ok((rate_high - rate_low) * reassigned_fraction)
}

fn check_rate(name: &'static str, value: f64) -> Result<(), MetricsError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MetricsError::Rate { name, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub formula: String,
    pub inputs: serde_json::Value,
    pub outputs: serde_json::Value,
}

pub const LOST_VALUE_FORMULA: &str = "lost_patents = floor(n_apps * (rate_men - rate_women)); lost_dollars = lost_patents * per_patent_value";
pub const REASSIGNMENT_FORMULA: &str = "gain = (rate_high - rate_low) * reassigned_fraction";
pub const OVER_ASSIGNMENT_FORMULA: &str =
    "ratio_based = P(w | women team) / P(w | men team) - 1; logit_based = exp(beta_all_women) - 1";

pub fn lost_value_report(
    n_apps: u64,
    rate_men: f64,
    rate_women: f64,
    per_patent_value: f64,
) -> Result<EstimatorReport, MetricsError> {
    let out = lost_value(n_apps, rate_men, rate_women, per_patent_value)?;
    Ok(EstimatorReport {
        formula: LOST_VALUE_FORMULA.into(),
        inputs: json!({
            "n_apps": n_apps,
            "rate_men": rate_men,
            "rate_women": rate_women,
            "per_patent_value": per_patent_value,
        }),
        outputs: serde_json::to_value(out).expect("serializable"),
    })
}

pub fn reassignment_report(rate_high: f64, rate_low: f64, reassigned_fraction: f64) -> Result<EstimatorReport, MetricsError> {
    let gain = reassignment_gain(rate_high, rate_low, reassigned_fraction)?;
    Ok(EstimatorReport {
        formula: REASSIGNMENT_FORMULA.into(),
        inputs: json!({
            "rate_high": rate_high,
            "rate_low": rate_low,
            "reassigned_fraction": reassigned_fraction,
        }),
        outputs: json!({ "gain": gain }),
    })
}

pub fn over_assignment_report(obs: &[AssignmentObs]) -> Result<EstimatorReport, MetricsError> {
    let out = over_assignment(obs)?;
    let n_women_team = obs.iter().filter(|o| o.all_women_team).count();
    Ok(EstimatorReport {
        formula: OVER_ASSIGNMENT_FORMULA.into(),
        inputs: json!({
            "n_obs": obs.len(),
            "n_all_women_teams": n_women_team,
            "n_all_men_teams": obs.len() - n_women_team,
            "fixed_effects": ["year", "cpc_class"],
        }),
        outputs: serde_json::to_value(out).expect("serializable"),
    })
}
